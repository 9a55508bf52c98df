#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
ブロック演算子の加法分割 A = A^(1) + A^(2)
D: ブロック対角, L: ブロック下三角, U: ブロック上三角を陰的部分とする
"""

import logging
from dataclasses import dataclass

from assembly.block_operator import BlockOperator
from common.errors import InvalidArgumentError
from common.sparse import empty_csr

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SplitOperator:
    """陰的部分 A^(1) と陽的部分 A^(2)（質量・右辺は元の演算子と共有）"""
    implicit: BlockOperator
    explicit: BlockOperator
    mode: str

    @property
    def explicit_is_zero(self) -> bool:
        return all(block.nnz == 0 for row in self.explicit.blocks for block in row)


def _in_implicit(mode: str, a: int, b: int) -> bool:
    if mode == "D":
        return a == b
    if mode == "L":
        return a >= b
    return a <= b


def split_operator(op: BlockOperator, mode: str) -> SplitOperator:
    """
    A を陰的部分と陽的部分に分ける。各ブロックはどちらか一方にだけ入るので
    A^(1) + A^(2) = A がブロックごとに厳密に成り立つ。

    Raises:
        InvalidArgumentError: 未知のモード
    """
    if mode not in ("D", "L", "U"):
        raise InvalidArgumentError(f"未知の分割モードです: {mode} (D / L / U)")
    implicit, explicit = [], []
    for a, row in enumerate(op.blocks):
        imp_row, exp_row = [], []
        for b, block in enumerate(row):
            zero = empty_csr(*block.shape)
            if _in_implicit(mode, a, b):
                imp_row.append(block)
                exp_row.append(zero)
            else:
                imp_row.append(zero)
                exp_row.append(block)
        implicit.append(imp_row)
        explicit.append(exp_row)
    split = SplitOperator(implicit=op.with_blocks(implicit), explicit=op.with_blocks(explicit), mode=mode)
    logger.debug(f"演算子を分割しました: mode={mode}, 陽的部分が空={split.explicit_is_zero}")
    return split
