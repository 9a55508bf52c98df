#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
オーバーサンプリング局所領域
粗セル K_i を粗セル l 層だけ広げた K_i^+ と、その中の細セル・制約の対応
"""

import logging
from dataclasses import dataclass, field
from typing import Sequence, Tuple

import numpy as np

from common.errors import InvalidArgumentError
from geometry.coarse_map import CoarseMap, ContinuumCoarseMap

logger = logging.getLogger(__name__)

MAX_LAYERS = 5


@dataclass(frozen=True)
class LocalDomain:
    """
    局所領域 K_i^+。

    fine[α] は連続体 α の細セル番号（連続体内の番号、昇順）、
    constraint_dofs[α] は K_i^+ に含まれる連続体 α の粗DOF番号。
    ring は coarse_cells ごとの中心からの層番号（チェビシェフ距離）。
    """
    center: int
    layers: int
    coarse_cells: np.ndarray
    ring: np.ndarray
    fine: Tuple[np.ndarray, ...]
    constraint_dofs: Tuple[np.ndarray, ...]
    fine_ring: Tuple[np.ndarray, ...]
    center_dofs: Tuple[int, ...] = ()
    continuum_maps: Tuple[ContinuumCoarseMap, ...] = field(default=(), repr=False)

    @property
    def n_continua(self) -> int:
        return len(self.fine)

    @property
    def n_fine(self) -> int:
        return int(sum(f.size for f in self.fine))

    @property
    def n_constraints(self) -> int:
        return int(sum(c.size for c in self.constraint_dofs))

    @property
    def outer_ring(self) -> int:
        return int(self.ring.max()) if self.ring.size else 0


def patch_cells(center: int, layers: int, nx: int, ny: int) -> Tuple[np.ndarray, np.ndarray]:
    """中心セルの周り layers 層の粗セル（領域境界で切り取り）と層番号"""
    cx, cy = center % nx, center // nx
    xs = np.arange(max(0, cx - layers), min(nx, cx + layers + 1))
    ys = np.arange(max(0, cy - layers), min(ny, cy + layers + 1))
    gx, gy = np.meshgrid(xs, ys)
    cells = (gy * nx + gx).reshape(-1)
    ring = np.maximum(np.abs(gx - cx), np.abs(gy - cy)).reshape(-1)
    return cells.astype(np.int64), ring.astype(np.int64)


def build_local_domain(
    i: int,
    layers: int,
    maps: CoarseMap,
    kinds: Sequence[str],
) -> LocalDomain:
    """
    粗セル i の局所領域を作る。

    Args:
        i: 中心の粗セル番号（粗格子の行優先番号）
        layers: オーバーサンプリング層数（1以上）
        maps: 細格子→粗格子の対応
        kinds: 連続体ごとの種類（background / fracture）

    Raises:
        InvalidArgumentError: 粗セル番号・層数が不正
    """
    coarse = maps.coarse
    if not 0 <= i < coarse.n_cells:
        raise InvalidArgumentError(f"粗セル番号が範囲外です: {i} (0..{coarse.n_cells - 1})")
    if int(layers) != layers or layers < 1:
        raise InvalidArgumentError(f"オーバーサンプリング層数は1以上の整数です: {layers}")

    cells, ring = patch_cells(int(i), int(layers), coarse.nx, coarse.ny)
    ring_of_cell = np.full(coarse.n_cells, -1, dtype=np.int64)
    ring_of_cell[cells] = ring

    continuum_maps = maps.for_continua(kinds)
    fine, dofs, fine_rings, center_dofs = [], [], [], []
    for cmap in continuum_maps:
        center_dofs.append(cmap.dof_of_cell().get(int(i), -1))
        # 連続体の粗DOF番号 → 粗セル番号
        dof_ring = ring_of_cell[cmap.coarse_cells]
        inside = np.flatnonzero(dof_ring >= 0)
        members = [cmap.members[j] for j in inside]
        idx = np.sort(np.concatenate(members)) if members else np.zeros(0, dtype=np.int64)
        fine.append(idx.astype(np.int64))
        dofs.append(inside.astype(np.int64))
        fine_rings.append(dof_ring[cmap.fine_to_dof[idx]] if idx.size else np.zeros(0, dtype=np.int64))

    domain = LocalDomain(
        center=int(i),
        layers=int(layers),
        coarse_cells=cells,
        ring=ring,
        fine=tuple(fine),
        constraint_dofs=tuple(dofs),
        fine_ring=tuple(fine_rings),
        center_dofs=tuple(center_dofs),
        continuum_maps=tuple(continuum_maps),
    )
    logger.debug(
        f"局所領域: center={i}, layers={layers}, 粗セル{cells.size}, 細DOF{domain.n_fine}, 制約{domain.n_constraints}"
    )
    return domain
