#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
細格子→粗格子の対応
連続体ごとに K_i^α = K_i ∩ Ω_α を構成する
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

from common.errors import InvalidArgumentError
from .fractures import FractureMesh
from .grid import StructuredGrid

logger = logging.getLogger(__name__)

BACKGROUND = "background"
FRACTURE = "fracture"


@dataclass(frozen=True)
class ContinuumCoarseMap:
    """
    1つの連続体の粗セル対応。

    粗DOFは内容を持つ粗セルだけ（フラクチャーが無い粗セルは除く）。
    """
    coarse_cells: np.ndarray
    members: Tuple[np.ndarray, ...]
    measures: np.ndarray
    fine_measures: np.ndarray
    fine_to_dof: np.ndarray

    @property
    def n_dofs(self) -> int:
        return int(self.coarse_cells.size)

    @property
    def n_fine(self) -> int:
        return int(self.fine_measures.size)

    def dof_of_cell(self) -> Dict[int, int]:
        return {int(c): j for j, c in enumerate(self.coarse_cells)}

    def coarse_average(self, u_fine: np.ndarray) -> np.ndarray:
        """粗セルごとの測度重み付き平均 (1/|K|)∫u"""
        u_fine = np.asarray(u_fine, dtype=float)
        if u_fine.shape != (self.n_fine,):
            raise InvalidArgumentError(f"次元が一致しません: {u_fine.shape} != ({self.n_fine},)")
        sums = np.bincount(self.fine_to_dof, weights=u_fine * self.fine_measures, minlength=self.n_dofs)
        return sums / self.measures


@dataclass(frozen=True)
class CoarseMap:
    fine: StructuredGrid
    coarse: StructuredGrid
    background: ContinuumCoarseMap
    fracture: ContinuumCoarseMap

    @property
    def ratio(self) -> Tuple[int, int]:
        return self.fine.nx // self.coarse.nx, self.fine.ny // self.coarse.ny

    def for_kind(self, kind: str) -> ContinuumCoarseMap:
        if kind == BACKGROUND:
            return self.background
        if kind == FRACTURE:
            return self.fracture
        raise InvalidArgumentError(f"未知の連続体の種類です: {kind}")

    def for_continua(self, kinds: Sequence[str]) -> List[ContinuumCoarseMap]:
        return [self.for_kind(k) for k in kinds]


def _group(fine_to_cell: np.ndarray, fine_measures: np.ndarray, n_coarse_cells: int) -> ContinuumCoarseMap:
    counts = np.bincount(fine_to_cell, minlength=n_coarse_cells)
    coarse_cells = np.flatnonzero(counts > 0)
    dof_index = np.full(n_coarse_cells, -1, dtype=np.int64)
    dof_index[coarse_cells] = np.arange(coarse_cells.size)
    fine_to_dof = dof_index[fine_to_cell]
    order = np.argsort(fine_to_dof, kind="stable")
    splits = np.cumsum(np.bincount(fine_to_dof, minlength=coarse_cells.size))[:-1]
    members = tuple(np.split(order, splits)) if coarse_cells.size else tuple()
    measures = np.bincount(fine_to_dof, weights=fine_measures, minlength=coarse_cells.size)
    return ContinuumCoarseMap(
        coarse_cells=coarse_cells.astype(np.int64),
        members=members,
        measures=measures,
        fine_measures=np.asarray(fine_measures, dtype=float),
        fine_to_dof=fine_to_dof.astype(np.int64),
    )


def fine_to_coarse_cells(fine: StructuredGrid, coarse: StructuredGrid) -> np.ndarray:
    rx, ry = fine.nx // coarse.nx, fine.ny // coarse.ny
    ix, iy = fine.cell_ij(np.arange(fine.n_cells))
    return coarse.cell_index(ix // rx, iy // ry).astype(np.int64)


def build_coarse_map(fine: StructuredGrid, coarse: StructuredGrid, fmesh: FractureMesh) -> CoarseMap:
    """
    細セル・フラクチャーセルを粗セルにまとめる。

    Raises:
        InvalidArgumentError: 粗格子が細格子を割り切らない、または領域が異なる
    """
    if fine.nx % coarse.nx or fine.ny % coarse.ny:
        raise InvalidArgumentError(
            f"粗格子が細格子を割り切りません: fine={fine.nx}x{fine.ny}, coarse={coarse.nx}x{coarse.ny}"
        )
    if not (np.isclose(fine.lx, coarse.lx) and np.isclose(fine.ly, coarse.ly)):
        raise InvalidArgumentError("細格子と粗格子の領域が一致しません")

    cell_of_fine = fine_to_coarse_cells(fine, coarse)
    background = _group(cell_of_fine, fine.cell_areas(), coarse.n_cells)
    fracture = _group(cell_of_fine[fmesh.hosts], fmesh.lengths, coarse.n_cells)

    rx, ry = fine.nx // coarse.nx, fine.ny // coarse.ny
    logger.info(
        f"粗格子対応を作成しました: 背景 {background.n_dofs}粗セル ({rx * ry}細セル/粗セル), "
        f"フラクチャー {fracture.n_dofs}粗セル"
    )
    return CoarseMap(fine=fine, coarse=coarse, background=background, fracture=fracture)
