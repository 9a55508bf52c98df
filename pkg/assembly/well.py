#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
坑井（ソース項）の陰的処理
q_w (u_w - u_f) を対角と右辺に加える
"""

import logging
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from common.errors import InvalidArgumentError
from common.sparse import as_csr
from geometry.fractures import FractureMesh
from geometry.grid import StructuredGrid
from .block_operator import BlockOperator

logger = logging.getLogger(__name__)

Box = Tuple[float, float, float, float]

# 標準ケースの坑井領域 [x0, x1, y0, y1]
DEFAULT_WELL_BOX: Box = (1.85, 1.9, 0.35, 0.4)


@dataclass(frozen=True)
class WellSpec:
    """対象連続体・坑井セル・坑井圧 u_w・坑井指数 q_w"""
    continuum: str
    cells: Tuple[int, ...]
    u_w: float = 1.2
    q_w: float = 1e5

    def __post_init__(self):
        if self.q_w < 0.0:
            raise InvalidArgumentError(f"坑井指数 q_w は非負である必要があります: {self.q_w}")


def select_well_cells(fmesh: FractureMesh, grid: StructuredGrid, box: Sequence[float] = DEFAULT_WELL_BOX) -> Tuple[int, ...]:
    """
    ホスト背景セルが領域 box と正の面積で重なるフラクチャーセルを返す。

    Args:
        fmesh: フラクチャーメッシュ
        grid: ホストの背景格子
        box: (x0, x1, y0, y1)
    """
    x0, x1, y0, y1 = (float(v) for v in box)
    if not (x1 > x0 and y1 > y0):
        raise InvalidArgumentError(f"坑井領域が不正です: {box}")
    ix, iy = grid.cell_ij(fmesh.hosts)
    overlap_x = np.minimum((ix + 1) * grid.hx, x1) - np.maximum(ix * grid.hx, x0)
    overlap_y = np.minimum((iy + 1) * grid.hy, y1) - np.maximum(iy * grid.hy, y0)
    tol = 1e-12 * grid.h
    cells = np.flatnonzero((overlap_x > tol) & (overlap_y > tol))
    logger.info(f"坑井セルを選択しました: {cells.size}セル (box={tuple(box)})")
    return tuple(int(c) for c in cells)


def apply_well(op: BlockOperator, well: WellSpec) -> BlockOperator:
    """
    坑井を陰的に組み込む。

    坑井行の対角に q_w·|cell|、右辺に q_w·u_w·|cell| を加える。

    Raises:
        InvalidArgumentError: 連続体名・セル番号が不正、坑井セルが空
    """
    if well.q_w == 0.0:
        return op
    target = op.index_of(well.continuum)
    n = op.sizes[target]
    cells = np.asarray(well.cells, dtype=np.int64)
    if cells.size == 0:
        raise InvalidArgumentError(f"連続体 {well.continuum} に坑井セルがありません")
    if np.any(cells < 0) or np.any(cells >= n):
        bad = cells[(cells < 0) | (cells >= n)]
        raise InvalidArgumentError(f"未知のセル番号です: {bad.tolist()} (連続体 {well.continuum} は {n}セル)")

    measure = op.measures[target][cells]
    increment = np.zeros(n)
    np.add.at(increment, cells, well.q_w * measure)
    blocks = [list(row) for row in op.blocks]
    blocks[target][target] = as_csr(blocks[target][target] + sp.diags(increment, format="csr"))
    rhs = list(op.rhs)
    rhs[target] = rhs[target] + increment * well.u_w

    logger.info(
        f"坑井を適用しました: continuum={well.continuum}, cells={cells.size}, u_w={well.u_w}, q_w={well.q_w:.3g}"
    )
    return op.with_blocks(blocks).with_rhs(rhs)
