#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
密行列の直接解法
局所鞍点系（対称不定値）向けの部分ピボット付きLU
"""

import logging

import numpy as np
import scipy.linalg

from .errors import InvalidArgumentError, SingularMatrixError

logger = logging.getLogger(__name__)


def dense_lu_solve(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """
    部分ピボット付きLUで A X = B を解く。

    Args:
        A: 正則な正方行列
        B: 右辺（ベクトルまたは列ごとに複数の右辺）

    Returns:
        Bと同じ形の解

    Raises:
        SingularMatrixError: 作業精度で特異
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    n = A.shape[0]
    if A.ndim != 2 or A.shape[1] != n:
        raise InvalidArgumentError(f"正方行列ではありません: {A.shape}")
    if B.shape[0] != n:
        raise InvalidArgumentError(f"右辺の次元が一致しません: A={A.shape}, B={B.shape}")
    if n == 0:
        return B.copy()

    lu, piv = scipy.linalg.lu_factor(A, check_finite=True)
    pivots = np.abs(np.diag(lu))
    scale = max(float(np.max(np.abs(A))), np.finfo(float).tiny)
    if float(np.min(pivots)) <= n * np.finfo(float).eps * scale:
        raise SingularMatrixError(f"行列が作業精度で特異です (n={n}, min pivot={float(np.min(pivots)):.3e})")

    X = scipy.linalg.lu_solve((lu, piv), B)
    residual = float(np.linalg.norm(A @ X - B))
    b_norm = float(np.linalg.norm(B))
    if b_norm > 0.0 and residual > 1e-10 * b_norm:
        logger.warning(f"LU解の残差が大きいです: {residual / b_norm:.3e}")
    return X
