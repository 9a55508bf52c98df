#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
有限体積法（二点流束近似）の行列組み立て
拡散・質量・連続体間交換
"""

import logging
from dataclasses import dataclass
from typing import Union

import numpy as np
import scipy.sparse as sp

from common.errors import InvalidArgumentError
from common.sparse import as_csr, empty_csr
from geometry.fractures import FractureMesh
from geometry.grid import StructuredGrid

logger = logging.getLogger(__name__)

Coefficient = Union[float, np.ndarray]


def cellwise(value: Coefficient, n: int, name: str = "coefficient") -> np.ndarray:
    """スカラーまたはセルごとの配列を長さnの配列にそろえる。"""
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return np.full(n, float(arr))
    if arr.shape != (n,):
        raise InvalidArgumentError(f"{name} の長さが一致しません: {arr.shape} != ({n},)")
    return arr


def harmonic_mean(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return 2.0 * a * b / (a + b)


def _laplacian_from_pairs(n: int, i: np.ndarray, j: np.ndarray, t: np.ndarray) -> sp.csr_matrix:
    """対 (i, j) の透過率 t から a_ii = Σ T, a_ij = -T の行列を作る。"""
    if i.size == 0:
        return empty_csr(n, n)
    rows = np.concatenate([i, j, i, j])
    cols = np.concatenate([j, i, i, j])
    vals = np.concatenate([-t, -t, t, t])
    return as_csr(sp.coo_matrix((vals, (rows, cols)), shape=(n, n)))


def assemble_diffusion_2d(grid: StructuredGrid, k: Coefficient) -> sp.csr_matrix:
    """
    2次元構造格子上の二点流束拡散行列。

    T_ij = k_ij |E_ij| / d_ij、異なるkを持つセル間は調和平均を使う。
    外部境界は同次Neumann（境界面の項を持たない）。
    """
    kc = cellwise(k, grid.n_cells, "k")
    if np.any(kc <= 0.0):
        raise InvalidArgumentError("透過係数 k は正である必要があります")

    ix, iy = grid.cell_ij(np.arange(grid.n_cells))
    # x方向の面
    left = grid.cell_index(ix[ix < grid.nx - 1], iy[ix < grid.nx - 1])
    right = left + 1
    tx = harmonic_mean(kc[left], kc[right]) * grid.hy / grid.hx
    # y方向の面
    lower = grid.cell_index(ix[iy < grid.ny - 1], iy[iy < grid.ny - 1])
    upper = lower + grid.nx
    ty = harmonic_mean(kc[lower], kc[upper]) * grid.hx / grid.hy

    D = _laplacian_from_pairs(
        grid.n_cells,
        np.concatenate([left, lower]),
        np.concatenate([right, upper]),
        np.concatenate([tx, ty]),
    )
    logger.debug(f"2次元拡散行列を組み立てました: n={grid.n_cells}, nnz={D.nnz}")
    return D


def assemble_diffusion_fracture(fmesh: FractureMesh, k_f: Coefficient) -> sp.csr_matrix:
    """
    フラクチャーセル列に沿った1次元二点流束行列。

    T = k_f / d（dは隣接セル中点間距離）。異なる線分間の結合は持たない。
    """
    n = fmesh.n_cells
    if n == 0:
        return empty_csr(0, 0)
    kf = cellwise(k_f, n, "k_f")
    if np.any(kf <= 0.0):
        raise InvalidArgumentError("フラクチャーの透過係数は正である必要があります")
    pairs = fmesh.adjacency()
    if not pairs:
        return empty_csr(n, n)
    a = np.array([p[0] for p in pairs], dtype=np.int64)
    b = np.array([p[1] for p in pairs], dtype=np.int64)
    d = np.array([p[2] for p in pairs], dtype=float)
    t = harmonic_mean(kf[a], kf[b]) / d
    return _laplacian_from_pairs(n, a, b, t)


def assemble_mass(measures: np.ndarray, c: Coefficient) -> sp.csr_matrix:
    """質量行列 diag(c_i |ς_i|)"""
    measures = np.asarray(measures, dtype=float)
    if np.any(measures <= 0.0):
        raise InvalidArgumentError("セルの測度は正である必要があります")
    cc = cellwise(c, measures.size, "c")
    return sp.diags(cc * measures, format="csr")


@dataclass(frozen=True)
class ExchangeLinks:
    """連続体 a のセル i と連続体 b のセル j の交換リンク"""
    first: np.ndarray
    second: np.ndarray
    transmissibility: np.ndarray

    @property
    def n_links(self) -> int:
        return int(self.first.size)


@dataclass(frozen=True)
class ExchangeBlocks:
    """Q の対角寄与（両側）と非対角ブロック（正の σ_ij）"""
    diag_first: np.ndarray
    diag_second: np.ndarray
    coupling: sp.csr_matrix


def efm_links(
    fmesh: FractureMesh,
    k_background: Coefficient,
    grid: StructuredGrid,
    sigma: Union[float, None] = None,
    distance: Union[float, None] = None,
) -> ExchangeLinks:
    """
    背景セル–フラクチャーセル間の埋め込みフラクチャー交換リンク。

    σ_il = σ |E^i_l| / d^i_l。既定は σ = ホストセルの k、d = h/4。
    """
    n_bg = grid.n_cells
    hosts = fmesh.hosts
    if sigma is None:
        coef = cellwise(k_background, n_bg, "k")[hosts]
    else:
        coef = np.full(hosts.size, float(sigma))
    d = 0.25 * grid.h if distance is None else float(distance)
    if d <= 0.0:
        raise InvalidArgumentError(f"交換距離は正である必要があります: {d}")
    return ExchangeLinks(
        first=hosts.copy(),
        second=np.arange(fmesh.n_cells, dtype=np.int64),
        transmissibility=coef * fmesh.lengths / d,
    )


def overlap_links(
    grid: StructuredGrid,
    k_first: Coefficient,
    sigma: Union[float, None] = None,
    distance: Union[float, None] = None,
) -> ExchangeLinks:
    """
    同じ格子上に重なる2つの背景連続体のセルごとの交換リンク。

    σ_i = σ |ς_i| / d。既定は σ = 1番目の連続体の k、d = h。
    """
    n = grid.n_cells
    coef = cellwise(k_first, n, "k") if sigma is None else np.full(n, float(sigma))
    d = grid.h if distance is None else float(distance)
    if d <= 0.0:
        raise InvalidArgumentError(f"交換距離は正である必要があります: {d}")
    idx = np.arange(n, dtype=np.int64)
    return ExchangeLinks(first=idx, second=idx.copy(), transmissibility=coef * grid.cell_areas() / d)


def assemble_exchange(links: ExchangeLinks, n_first: int, n_second: int) -> ExchangeBlocks:
    """
    交換リンクから Q の寄与を組み立てる。

    非対角ブロックには σ_ij（A では -σ_ij）、各連続体の対角には行和が入るので
    全体の Q は対称半正定値で Q·1 = 0。
    """
    t = np.asarray(links.transmissibility, dtype=float)
    if np.any(t < 0.0):
        raise InvalidArgumentError("交換係数 σ は非負である必要があります")
    coupling = as_csr(sp.coo_matrix((t, (links.first, links.second)), shape=(n_first, n_second)))
    diag_first = np.bincount(links.first, weights=t, minlength=n_first).astype(float)
    diag_second = np.bincount(links.second, weights=t, minlength=n_second).astype(float)
    return ExchangeBlocks(diag_first=diag_first, diag_second=diag_second, coupling=coupling)
