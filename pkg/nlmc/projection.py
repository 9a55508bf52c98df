#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
マルチスケール空間と粗格子演算子
基底から射影行列 R を作り、A^H = R A^h R^T などを計算する
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from assembly.block_operator import BlockOperator, check_operator
from common.errors import InvalidArgumentError
from common.matrix_io import dump_vector
from common.sparse import as_csr, spmv, triple_product
from geometry.coarse_map import ContinuumCoarseMap
from .basis import BasisSet

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MultiscaleSpace:
    """
    射影行列 R（粗DOF × 細DOF）と粗DOFの目録。

    catalog[k] = (連続体番号, 粗セル番号)。行は連続体ごと・粗DOF順。
    """
    R: sp.csr_matrix
    catalog: Tuple[Tuple[int, int], ...]
    names: Tuple[str, ...]
    coarse_sizes: Tuple[int, ...]
    fine_sizes: Tuple[int, ...]
    layers: int
    continuum_maps: Tuple[ContinuumCoarseMap, ...] = field(repr=False)

    @property
    def n_coarse(self) -> int:
        return int(self.R.shape[0])

    @property
    def n_fine(self) -> int:
        return int(self.R.shape[1])

    @property
    def coarse_offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.coarse_sizes)]).astype(np.int64)

    @property
    def fine_offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.fine_sizes)]).astype(np.int64)

    def block(self, alpha: int, beta: int) -> sp.csr_matrix:
        """R_αβ"""
        co, fo = self.coarse_offsets, self.fine_offsets
        return as_csr(self.R[co[alpha]:co[alpha + 1], fo[beta]:fo[beta + 1]])


@dataclass(frozen=True)
class CoarseOperator:
    """粗格子の M^H, A^H, F^H（BlockOperator 形式）と射影質量の診断値"""
    operator: BlockOperator
    projected_mass_deviation: float

    @property
    def mass(self) -> np.ndarray:
        return self.operator.mass_diagonal()

    @property
    def stiffness(self) -> sp.csr_matrix:
        return self.operator.stiffness

    @property
    def rhs(self) -> np.ndarray:
        return self.operator.rhs_vector()


def build_projection(bases: BasisSet) -> MultiscaleSpace:
    """
    基底を行に並べて射影行列 R を作る。

    Raises:
        InvalidArgumentError: 粗DOFに対応する基底が欠けている
    """
    by_target = {(b.target[1], b.dof): b for b in bases.bases}
    rows: List[np.ndarray] = []
    cols: List[np.ndarray] = []
    vals: List[np.ndarray] = []
    catalog = []
    row = 0
    for alpha, cmap in enumerate(bases.continuum_maps):
        for dof in range(cmap.n_dofs):
            basis = by_target.get((alpha, dof))
            if basis is None:
                raise InvalidArgumentError(
                    f"基底が欠けています: continuum={bases.names[alpha]}, coarse cell={int(cmap.coarse_cells[dof])}"
                )
            rows.append(np.full(basis.indices.size, row, dtype=np.int64))
            cols.append(basis.indices)
            vals.append(basis.values)
            catalog.append((alpha, int(cmap.coarse_cells[dof])))
            row += 1

    if row:
        R = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(row, bases.n_fine),
        )
    else:
        R = sp.coo_matrix((0, bases.n_fine))
    space = MultiscaleSpace(
        R=as_csr(R),
        catalog=tuple(catalog),
        names=bases.names,
        coarse_sizes=tuple(m.n_dofs for m in bases.continuum_maps),
        fine_sizes=tuple(m.n_fine for m in bases.continuum_maps),
        layers=bases.layers,
        continuum_maps=bases.continuum_maps,
    )
    logger.info(f"射影行列を作成しました: R={space.R.shape}, nnz={space.R.nnz}")
    return space


def _split_blocks(A: sp.csr_matrix, offsets: np.ndarray) -> Tuple[Tuple[sp.csr_matrix, ...], ...]:
    L = offsets.size - 1
    return tuple(
        tuple(as_csr(A[offsets[a]:offsets[a + 1], offsets[b]:offsets[b + 1]]) for b in range(L))
        for a in range(L)
    )


def coarse_mass(space: MultiscaleSpace, op: BlockOperator) -> Tuple[np.ndarray, ...]:
    """粗格子の質量 m_{α,i} = Σ_{ς⊂K_i^α} c |ς|（一定の c なら c_{α,i} |K_i^α|）"""
    out = []
    for alpha, cmap in enumerate(space.continuum_maps):
        out.append(np.bincount(cmap.fine_to_dof, weights=op.mass[alpha], minlength=cmap.n_dofs))
    return tuple(out)


def projected_mass_deviation(space: MultiscaleSpace, op: BlockOperator, direct: Sequence[np.ndarray]) -> float:
    """R M^h R^T の対角と直接計算した M^H の最大相対差"""
    projected = (space.R @ sp.diags(op.mass_diagonal()) @ space.R.T).diagonal()
    direct = np.concatenate(direct)
    if direct.size == 0:
        return 0.0
    return float(np.max(np.abs(projected - direct) / np.abs(direct)))


def project_operators(space: MultiscaleSpace, op: BlockOperator) -> CoarseOperator:
    """
    細格子の演算子を粗格子へ射影する。

    A^H = R A^h R^T（対称化）、M^H は粗セルの測度と係数から直接、
    F^H_α = R_αα F^h_α。

    Raises:
        InvalidArgumentError: 次元が一致しない
    """
    if space.n_fine != op.n_dofs or space.fine_sizes != op.sizes:
        raise InvalidArgumentError(
            f"次元が一致しません: R={space.R.shape}, operator sizes={op.sizes}"
        )
    A_H = triple_product(space.R, op.stiffness)
    blocks = _split_blocks(A_H, space.coarse_offsets)
    mass = coarse_mass(space, op)
    rhs = tuple(spmv(space.block(a, a), op.rhs[a]) for a in range(op.n_continua))
    measures = tuple(cmap.measures.copy() for cmap in space.continuum_maps)
    coarse_op = BlockOperator(names=op.names, blocks=blocks, mass=mass, rhs=rhs, measures=measures)
    check_operator(coarse_op, tol=1e-10, diagonal_dominance=False)

    deviation = projected_mass_deviation(space, op, mass)
    logger.info(
        f"粗格子演算子を作成しました: N_H={space.n_coarse} "
        f"({', '.join(f'{n}={s}' for n, s in zip(op.names, space.coarse_sizes))}), "
        f"射影質量と直接質量の最大相対差={deviation:.3%}"
    )
    return CoarseOperator(operator=coarse_op, projected_mass_deviation=deviation)


def reconstruct_fine(space: MultiscaleSpace, u_H: np.ndarray) -> np.ndarray:
    """u_ms = R^T u_H"""
    u_H = np.asarray(u_H, dtype=float)
    if u_H.shape != (space.n_coarse,):
        raise InvalidArgumentError(f"次元が一致しません: u_H={u_H.shape}, N_H={space.n_coarse}")
    return spmv(space.R.T, u_H)


def dump_bases(space: MultiscaleSpace, directory: Path, limit: Optional[int] = None) -> List[Path]:
    """基底ベクトルを MatrixMarket array 形式で保存する（psi_{連続体}_{粗セル}.mtx）。"""
    directory = Path(directory)
    paths = []
    for k, (alpha, cell) in enumerate(space.catalog):
        if limit is not None and k >= limit:
            break
        psi = np.asarray(space.R[k].toarray()).reshape(-1)
        paths.append(dump_vector(psi, directory / f"psi_{space.names[alpha]}_{cell}.mtx"))
    logger.info(f"基底を保存しました: {len(paths)}件 → {directory}")
    return paths
