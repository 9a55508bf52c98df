#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
NLMC基底関数
局所領域上の制約付きエネルギー最小化（鞍点系）を解いて ψ^{i,α} を作る
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu
from tqdm import tqdm

from assembly.block_operator import BlockOperator
from common.dense import dense_lu_solve
from common.errors import BasisError, InvalidArgumentError, SingularMatrixError
from common.sparse import DENSE_EIGEN_LIMIT, as_csr
from geometry.coarse_map import CoarseMap, ContinuumCoarseMap
from .local_domain import LocalDomain, build_local_domain

logger = logging.getLogger(__name__)

CONSTRAINT_TOL = 1e-8

Target = Tuple[int, int]


@dataclass(frozen=True)
class LocalBasis:
    """
    1つの基底 ψ^{i,α}。

    indices は全体の細DOF番号（連続体オフセット込み）、values はその値。
    """
    target: Target
    dof: int
    indices: np.ndarray
    values: np.ndarray
    constraint_residual: float
    decay_ratio: float

    def to_dense(self, n_fine: int) -> np.ndarray:
        psi = np.zeros(n_fine)
        psi[self.indices] = self.values
        return psi


@dataclass(frozen=True)
class BasisSet:
    """すべての粗セル・連続体の基底"""
    bases: Tuple[LocalBasis, ...]
    layers: int
    n_fine: int
    names: Tuple[str, ...]
    coarse_sizes: Tuple[int, ...]
    continuum_maps: Tuple[ContinuumCoarseMap, ...] = field(repr=False)

    @property
    def max_constraint_residual(self) -> float:
        return max((b.constraint_residual for b in self.bases), default=0.0)

    @property
    def max_decay_ratio(self) -> float:
        return max((b.decay_ratio for b in self.bases), default=0.0)

    def by_target(self) -> Dict[Target, LocalBasis]:
        return {b.target: b for b in self.bases}


@dataclass(frozen=True)
class LocalSystem:
    """局所鞍点系 [A_loc C^T; C 0]"""
    global_index: np.ndarray
    stiffness: sp.csr_matrix
    constraints: sp.csr_matrix
    row_offsets: np.ndarray
    local_offsets: np.ndarray


def _local_system(domain: LocalDomain, op: BlockOperator) -> LocalSystem:
    if domain.n_continua != op.n_continua:
        raise InvalidArgumentError(
            f"連続体数が一致しません: domain={domain.n_continua}, operator={op.n_continua}"
        )
    offsets = op.offsets
    global_index = np.concatenate([offsets[a] + domain.fine[a] for a in range(op.n_continua)])
    local_offsets = np.concatenate([[0], np.cumsum([f.size for f in domain.fine])]).astype(np.int64)
    # 外側のセルとの結合を落とす = ∂K_i^+ 上の同次Dirichlet
    A = op.stiffness
    A_loc = as_csr(A[global_index][:, global_index])

    rows, cols, vals = [], [], []
    row_offsets = [0]
    for a, cmap in enumerate(domain.continuum_maps):
        for r, dof in enumerate(domain.constraint_dofs[a]):
            members = cmap.members[dof]
            local = local_offsets[a] + np.searchsorted(domain.fine[a], members)
            rows.append(np.full(members.size, row_offsets[-1] + r))
            cols.append(local)
            vals.append(cmap.fine_measures[members] / cmap.measures[dof])
        row_offsets.append(row_offsets[-1] + domain.constraint_dofs[a].size)
    m = row_offsets[-1]
    if m:
        C = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(m, global_index.size),
        )
    else:
        C = sp.coo_matrix((0, global_index.size))
    return LocalSystem(
        global_index=global_index,
        stiffness=A_loc,
        constraints=as_csr(C),
        row_offsets=np.asarray(row_offsets, dtype=np.int64),
        local_offsets=local_offsets,
    )


def _solve_saddle(system: LocalSystem, rhs_rows: Sequence[int]) -> np.ndarray:
    """鞍点系を因数分解して複数の右辺を一度に解く（ψ部分だけ返す）。"""
    n = system.stiffness.shape[0]
    m = system.constraints.shape[0]
    K = sp.bmat([[system.stiffness, system.constraints.T], [system.constraints, None]], format="csc")
    B = np.zeros((n + m, len(rhs_rows)))
    for col, row in enumerate(rhs_rows):
        B[n + row, col] = 1.0
    if n + m <= DENSE_EIGEN_LIMIT:
        X = dense_lu_solve(K.toarray(), B)
    else:
        try:
            lu = splu(K)
        except RuntimeError as e:
            raise SingularMatrixError(f"局所鞍点系が特異です: {e}") from e
        X = lu.solve(B)
    if not np.all(np.isfinite(X)):
        raise SingularMatrixError("局所鞍点系の解に非有限値が含まれます")
    return X[:n]


def _decay_ratio(domain: LocalDomain, system: LocalSystem, psi: np.ndarray) -> float:
    """最外層の max|ψ| / K_i 上の max|ψ|"""
    ring = np.concatenate(domain.fine_ring) if domain.fine_ring else np.zeros(0, dtype=np.int64)
    outer = domain.outer_ring
    if outer == 0:
        return 0.0
    center_max = float(np.max(np.abs(psi[ring == 0]), initial=0.0))
    outer_max = float(np.max(np.abs(psi[ring == outer]), initial=0.0))
    if center_max == 0.0:
        return float("inf") if outer_max > 0.0 else 0.0
    return outer_max / center_max


def solve_domain_bases(domain: LocalDomain, op: BlockOperator, continua: Optional[Sequence[int]] = None) -> List[LocalBasis]:
    """
    局所領域の中心粗セルについて、内容を持つすべての連続体の基底を解く。

    Raises:
        BasisError: 制約ブロックが空、または鞍点系が特異
    """
    if continua is None:
        continua = [a for a in range(op.n_continua) if domain.center_dofs[a] >= 0]
    if not continua:
        return []
    system = _local_system(domain, op)

    rhs_rows = []
    for a in continua:
        dof = domain.center_dofs[a]
        if dof < 0:
            raise BasisError((domain.center, a), "中心の粗セルにこの連続体の内容がありません")
        if system.constraints.shape[0] == 0:
            raise BasisError((domain.center, a), "制約ブロックが空です")
        pos = int(np.searchsorted(domain.constraint_dofs[a], dof))
        rhs_rows.append(int(system.row_offsets[a]) + pos)

    try:
        psi_all = _solve_saddle(system, rhs_rows)
    except SingularMatrixError as e:
        raise BasisError((domain.center, int(continua[0])), str(e)) from e

    bases = []
    for col, a in enumerate(continua):
        psi = psi_all[:, col]
        target_vec = np.zeros(system.constraints.shape[0])
        target_vec[rhs_rows[col]] = 1.0
        residual = float(np.max(np.abs(system.constraints @ psi - target_vec)))
        if residual > CONSTRAINT_TOL:
            logger.warning(f"基底 (coarse={domain.center}, continuum={a}) の制約残差が大きいです: {residual:.3e}")
        keep = psi != 0.0
        bases.append(
            LocalBasis(
                target=(domain.center, int(a)),
                dof=int(domain.center_dofs[a]),
                indices=system.global_index[keep],
                values=psi[keep],
                constraint_residual=residual,
                decay_ratio=_decay_ratio(domain, system, psi),
            )
        )
    return bases


def solve_basis(domain: LocalDomain, op: BlockOperator, target: Target) -> np.ndarray:
    """
    基底 ψ^{i,α} を1つ解き、全体の細格子ベクトル（領域外はゼロ）で返す。

    Args:
        domain: 中心が target[0] の局所領域
        op: 細格子のブロック演算子（坑井なし）
        target: (粗セル番号 i, 連続体番号 α)
    """
    i, alpha = target
    if i != domain.center:
        raise InvalidArgumentError(f"局所領域の中心 {domain.center} と対象の粗セル {i} が一致しません")
    if not 0 <= alpha < op.n_continua:
        raise InvalidArgumentError(f"連続体番号が範囲外です: {alpha}")
    (basis,) = solve_domain_bases(domain, op, [alpha])
    return basis.to_dense(op.n_dofs)


def build_basis_set(
    op: BlockOperator,
    maps: CoarseMap,
    kinds: Sequence[str],
    layers: int = 3,
    jobs: int = 1,
    progress: bool = False,
) -> BasisSet:
    """
    すべての粗セルについて基底を計算する。

    粗セルごとの局所問題は独立なので jobs > 1 ならスレッドで並列に解く。

    Args:
        op: 細格子のブロック演算子（坑井なし）
        maps: 粗格子対応
        kinds: 連続体ごとの種類
        layers: オーバーサンプリング層数
        jobs: 並列数
        progress: tqdmで進捗を表示するか
    """
    if len(kinds) != op.n_continua:
        raise InvalidArgumentError(f"kinds の数が連続体数と一致しません: {len(kinds)} != {op.n_continua}")
    n_cells = maps.coarse.n_cells
    logger.info(f"NLMC基底の計算を開始します: 粗セル{n_cells}, layers={layers}, jobs={jobs}")

    def work(i: int) -> List[LocalBasis]:
        domain = build_local_domain(i, layers, maps, kinds)
        return solve_domain_bases(domain, op)

    results: List[List[LocalBasis]] = []
    bar = tqdm(total=n_cells, desc="basis", disable=not progress)
    try:
        if jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                for bases in pool.map(work, range(n_cells)):
                    results.append(bases)
                    bar.update(1)
        else:
            for i in range(n_cells):
                results.append(work(i))
                bar.update(1)
    finally:
        bar.close()

    # 連続体ごと・粗DOF順に並べる（R のブロック配置）
    flat = [b for bases in results for b in bases]
    flat.sort(key=lambda b: (b.target[1], b.dof))
    continuum_maps = tuple(maps.for_continua(kinds))
    basis_set = BasisSet(
        bases=tuple(flat),
        layers=int(layers),
        n_fine=op.n_dofs,
        names=op.names,
        coarse_sizes=tuple(m.n_dofs for m in continuum_maps),
        continuum_maps=continuum_maps,
    )
    logger.info(
        f"NLMC基底の計算が完了しました: {len(flat)}基底, "
        f"最大制約残差={basis_set.max_constraint_residual:.2e}, 最大減衰比={basis_set.max_decay_ratio:.3f}"
    )
    return basis_set
