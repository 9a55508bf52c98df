#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
疎行列ユーティリティ
CSR行列の正規化、行列ベクトル積、Galerkin射影、最小固有値の推定
"""

import logging
from typing import Union

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import InvalidArgumentError, NotConvergedError

logger = logging.getLogger(__name__)

MatrixLike = Union[sp.spmatrix, sp.sparray, np.ndarray]

# これ以下のサイズなら密行列の固有値分解を使う
DENSE_EIGEN_LIMIT = 2000


def as_csr(A: MatrixLike) -> sp.csr_matrix:
    """CSRに変換し、重複を足し合わせて列インデックスを昇順にする。"""
    M = sp.csr_matrix(A, dtype=float)
    M.sum_duplicates()
    M.sort_indices()
    return M


def empty_csr(n_rows: int, n_cols: int) -> sp.csr_matrix:
    return sp.csr_matrix((n_rows, n_cols), dtype=float)


def spmv(A: MatrixLike, x: np.ndarray) -> np.ndarray:
    """y = A·x（次元チェック付き）"""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or A.shape[1] != x.shape[0]:
        raise InvalidArgumentError(f"次元が一致しません: A={A.shape}, x={x.shape}")
    return np.asarray(A @ x, dtype=float).reshape(-1)


def max_asymmetry(A: MatrixLike) -> float:
    """max |A - A^T|"""
    if A.shape[0] != A.shape[1]:
        raise InvalidArgumentError(f"正方行列ではありません: {A.shape}")
    D = sp.csr_matrix(A - A.T)
    if D.nnz == 0:
        return 0.0
    return float(np.max(np.abs(D.data)))


def symmetrize(A: MatrixLike) -> sp.csr_matrix:
    """(A + A^T)/2。結果は厳密に対称になる。"""
    return as_csr(0.5 * (A + A.T))


def triple_product(R: MatrixLike, A: MatrixLike) -> sp.csr_matrix:
    """
    Galerkin射影 R·A·R^T を計算する。

    Aが対称（丸め誤差1e-13以内）なら結果を対称化して歪みを消す。
    """
    if R.shape[1] != A.shape[0] or A.shape[0] != A.shape[1]:
        raise InvalidArgumentError(f"次元が一致しません: R={R.shape}, A={A.shape}")
    R = as_csr(R)
    A = as_csr(A)
    result = as_csr(R @ A @ R.T)
    scale = float(np.max(np.abs(A.data))) if A.nnz else 0.0
    if max_asymmetry(A) <= 1e-13 * max(scale, 1.0):
        skew = max_asymmetry(result)
        if skew > 0.0:
            logger.debug(f"射影後の非対称成分を除去します: max skew={skew:.3e}")
        result = symmetrize(result)
    return result


def gershgorin_lower_bound(S: sp.csr_matrix) -> float:
    diag = S.diagonal()
    off = np.asarray(abs(S).sum(axis=1)).reshape(-1) - np.abs(diag)
    return float(np.min(diag - off))


def _shift_invert_lowest(S: sp.csr_matrix, shift: float, tol: float, max_iter: int) -> float:
    """shift より下に固有値が無いとき、shift に最も近い（= 最小の）固有値"""
    n = S.shape[0]
    try:
        lu = spla.splu(sp.csc_matrix(S - shift * sp.identity(n, format="csr")))
    except RuntimeError as e:
        raise NotConvergedError(f"シフト行列の分解に失敗しました (shift={shift:.6e}): {e}") from e
    op_inv = spla.LinearOperator((n, n), matvec=lu.solve, dtype=float)
    v0 = np.random.default_rng(0).standard_normal(n)
    try:
        values = spla.eigsh(
            S, k=1, sigma=shift, which="LM", OPinv=op_inv, v0=v0,
            ncv=min(n - 1, 40), tol=tol, maxiter=max_iter, return_eigenvectors=False,
        )
    except spla.ArpackNoConvergence as e:
        raise NotConvergedError(f"Lanczos法が{max_iter}回の再始動で収束しませんでした (shift={shift:.6e})") from e
    return float(values[0])


def min_eigenvalue(S: MatrixLike, tol: float = 1e-10, max_iter: int = 1000) -> float:
    """
    対称行列の最小固有値を求める。

    n <= 2000 なら密行列の対称固有値分解、それより大きい場合は
    シフト・インバート Lanczos 法（eigsh）を2段階で使う。
    1段目は Gershgorin 下界の少し下、2段目は1段目の近似値のすぐ下にシフトする。
    """
    S = as_csr(S)
    n = S.shape[0]
    if n != S.shape[1]:
        raise InvalidArgumentError(f"正方行列ではありません: {S.shape}")
    if n == 0:
        raise InvalidArgumentError("空行列の固有値は定義できません")

    if n <= DENSE_EIGEN_LIMIT:
        dense = S.toarray()
        dense = 0.5 * (dense + dense.T)
        value = scipy.linalg.eigvalsh(dense, subset_by_index=[0, 0])[0]
        logger.debug(f"密固有値分解: n={n}, lambda_min={value:.6e}")
        return float(value)

    S = symmetrize(S)
    scale = max(float(np.max(np.abs(S.data))) if S.nnz else 1.0, 1.0)
    lower = gershgorin_lower_bound(S)
    shift = lower - (1e-3 * abs(lower) + 1e-8 * scale)
    rough = _shift_invert_lowest(S, shift, 1e-6, max_iter)
    # 1段目の誤差は 1e-6·|rough - shift| 以下なので、その千倍下なら最小固有値より下
    refined_shift = rough - (1e-3 * abs(rough - shift) + 1e-12 * scale)
    value = _shift_invert_lowest(S, refined_shift, tol, max_iter)
    logger.debug(f"シフト・インバートLanczos: n={n}, shift={shift:.3e}→{refined_shift:.3e}, lambda_min={value:.6e}")
    return value
