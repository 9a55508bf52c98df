#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
相対誤差の計算
e_h1 (L2), e_h2 (エネルギー), e_ms1 (再構成した細格子解), e_H1 (粗セル平均) をパーセントで返す
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from assembly.block_operator import BlockOperator
from common.errors import InvalidArgumentError, UndefinedErrorNorm
from geometry.coarse_map import ContinuumCoarseMap
from nlmc.projection import MultiscaleSpace, reconstruct_fine

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ErrorNorms:
    """相対誤差[%]。計算しない項目は None"""
    e_h1: Optional[float] = None
    e_h2: Optional[float] = None
    e_ms1: Optional[float] = None
    e_H1: Optional[float] = None


def _relative(diff_norm: float, ref_norm: float, name: str) -> float:
    if ref_norm == 0.0:
        raise UndefinedErrorNorm(f"参照解の{name}ノルムがゼロのため相対誤差が定義できません")
    return 100.0 * diff_norm / ref_norm


def relative_l2(u_ref: np.ndarray, u: np.ndarray) -> float:
    return _relative(float(np.linalg.norm(u - u_ref)), float(np.linalg.norm(u_ref)), "L2")


def relative_energy(op: BlockOperator, u_ref: np.ndarray, u: np.ndarray) -> float:
    """||u - u_ref||_A / ||u_ref||_A（A は坑井なしの演算子）"""
    diff = u - u_ref
    diff_sq = max(op.energy(diff), 0.0)
    ref_sq = max(op.energy(u_ref), 0.0)
    return _relative(float(np.sqrt(diff_sq)), float(np.sqrt(ref_sq)), "エネルギー")


def coarse_averages(op: BlockOperator, maps: Sequence[ContinuumCoarseMap], u: np.ndarray) -> np.ndarray:
    """連続体ごとの粗セル平均 (1/|K_i^α|)∫u を並べたベクトル"""
    return np.concatenate([cmap.coarse_average(part) for cmap, part in zip(maps, op.split(u))])


def compute_errors(
    u_ref: np.ndarray,
    candidate: np.ndarray,
    op: BlockOperator,
    maps: Sequence[ContinuumCoarseMap],
    space: Optional[MultiscaleSpace] = None,
) -> ErrorNorms:
    """
    参照解に対する相対誤差を計算する。

    細格子の候補: e_h1, e_h2 と、両者の粗セル平均どうしの e_H1。
    粗格子の候補（space を指定）: R^T u_H で再構成した e_ms1 と、
    u_H と参照解の粗セル平均を比べる e_H1。

    Args:
        u_ref: 細格子の参照解
        candidate: 細格子または粗格子の解
        op: 坑井なしの細格子演算子（エネルギーノルム用）
        maps: 連続体ごとの粗格子対応
        space: 粗格子の候補を再構成するマルチスケール空間

    Raises:
        UndefinedErrorNorm: 参照解のノルムがゼロ
        InvalidArgumentError: 次元が一致しない
    """
    u_ref = np.asarray(u_ref, dtype=float)
    candidate = np.asarray(candidate, dtype=float)
    if u_ref.shape != (op.n_dofs,):
        raise InvalidArgumentError(f"参照解の次元が一致しません: {u_ref.shape} != ({op.n_dofs},)")
    ref_avg = coarse_averages(op, maps, u_ref)

    if candidate.shape == u_ref.shape:
        return ErrorNorms(
            e_h1=relative_l2(u_ref, candidate),
            e_h2=relative_energy(op, u_ref, candidate),
            e_H1=relative_l2(ref_avg, coarse_averages(op, maps, candidate)),
        )
    if space is None or candidate.shape != (space.n_coarse,):
        raise InvalidArgumentError(
            f"候補解の次元が一致しません: {candidate.shape} (細格子 {op.n_dofs}"
            f"{', 粗格子 ' + str(space.n_coarse) if space is not None else ''})"
        )
    u_ms = reconstruct_fine(space, candidate)
    return ErrorNorms(e_ms1=relative_l2(u_ref, u_ms), e_H1=relative_l2(ref_avg, candidate))
