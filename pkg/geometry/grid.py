#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
構造格子
矩形領域 [0,Lx]×[0,Ly] 上の一様な矩形セル分割
"""

import logging
from dataclasses import dataclass

import numpy as np

from common.errors import InvalidArgumentError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class StructuredGrid:
    """
    一様構造格子。セル番号は行優先（index = iy * nx + ix）。
    """
    nx: int
    ny: int
    lx: float
    ly: float

    @property
    def hx(self) -> float:
        return self.lx / self.nx

    @property
    def hy(self) -> float:
        return self.ly / self.ny

    @property
    def h(self) -> float:
        """代表セル幅（正方セルなら hx = hy）"""
        return min(self.hx, self.hy)

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny

    @property
    def cell_area(self) -> float:
        return self.hx * self.hy

    def cell_areas(self) -> np.ndarray:
        return np.full(self.n_cells, self.cell_area)

    def cell_index(self, ix, iy):
        return np.asarray(iy) * self.nx + np.asarray(ix)

    def cell_ij(self, index):
        index = np.asarray(index)
        return index % self.nx, index // self.nx

    def cell_centers(self) -> np.ndarray:
        ix, iy = self.cell_ij(np.arange(self.n_cells))
        return np.column_stack([(ix + 0.5) * self.hx, (iy + 0.5) * self.hy])

    def locate(self, x, y):
        """点を含むセルの (ix, iy)。境界上の点は領域内のセルに丸める。"""
        ix = np.clip(np.floor(np.asarray(x) / self.hx).astype(int), 0, self.nx - 1)
        iy = np.clip(np.floor(np.asarray(y) / self.hy).astype(int), 0, self.ny - 1)
        return ix, iy


def build_grid(nx: int, ny: int, lx: float, ly: float) -> StructuredGrid:
    """
    構造格子を作る。

    Args:
        nx, ny: 各方向のセル数（1以上）
        lx, ly: 領域サイズ（正）

    Raises:
        InvalidArgumentError: 次元がゼロ・負
    """
    if int(nx) != nx or int(ny) != ny or nx < 1 or ny < 1:
        raise InvalidArgumentError(f"セル数は1以上の整数である必要があります: nx={nx}, ny={ny}")
    if not (lx > 0 and ly > 0):
        raise InvalidArgumentError(f"領域サイズは正である必要があります: Lx={lx}, Ly={ly}")
    grid = StructuredGrid(int(nx), int(ny), float(lx), float(ly))
    logger.debug(f"構造格子を作成しました: {grid.nx}x{grid.ny}, hx={grid.hx:.4g}, hy={grid.hy:.4g}")
    return grid
