#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
前処理付き共役勾配法
Jacobi / ILU(0) 前処理と CG ソルバー
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Literal, Optional, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve_triangular

from .errors import FactorizationError, InvalidArgumentError
from .sparse import MatrixLike, as_csr

logger = logging.getLogger(__name__)

PrecondName = Literal["none", "jacobi", "ilu0"]

DEFAULT_RTOL = 1e-8


@dataclass
class SolveStats:
    """CGの実行結果"""
    iterations: int
    residual: float
    converged: bool
    preconditioner: str = "none"
    history: List[float] = field(default_factory=list, repr=False)


class IdentityPreconditioner:
    name = "none"

    def apply(self, r: np.ndarray) -> np.ndarray:
        return r.copy()


class JacobiPreconditioner:
    """対角スケーリング"""
    name = "jacobi"

    def __init__(self, A: MatrixLike):
        diag = as_csr(A).diagonal()
        zero = np.flatnonzero(diag == 0.0)
        if zero.size:
            raise FactorizationError(int(zero[0]), f"Jacobi前処理: 対角成分がゼロです (row={int(zero[0])})")
        self.inv_diag = 1.0 / diag

    def apply(self, r: np.ndarray) -> np.ndarray:
        return self.inv_diag * r


class Ilu0Preconditioner:
    """
    ILU(0)前処理。Aの非ゼロパターン上に制限した不完全LU分解。

    lower は単位下三角（対角を含む）、upper は対角を含む上三角。
    """
    name = "ilu0"

    def __init__(self, lower: sp.csr_matrix, upper: sp.csr_matrix):
        self.lower = lower
        self.upper = upper

    def apply(self, r: np.ndarray) -> np.ndarray:
        y = spsolve_triangular(self.lower, r, lower=True, unit_diagonal=True)
        return spsolve_triangular(self.upper, y, lower=False)


def ilu0_factor(A: MatrixLike) -> Ilu0Preconditioner:
    """
    ILU(0)分解（IKJ形式、CSR上でin-place更新）。

    Args:
        A: 対角成分がすべて存在する正方行列

    Returns:
        前進・後退代入で適用する前処理ハンドル

    Raises:
        FactorizationError: ゼロピボット（行番号付き）
    """
    F = as_csr(A).copy()
    n = F.shape[0]
    if n != F.shape[1]:
        raise InvalidArgumentError(f"正方行列ではありません: {F.shape}")
    indptr, indices, data = F.indptr, F.indices, F.data

    diag_pos = np.empty(n, dtype=np.int64)
    for i in range(n):
        s, e = indptr[i], indptr[i + 1]
        p = s + np.searchsorted(indices[s:e], i)
        if p >= e or indices[p] != i:
            raise FactorizationError(i, f"ILU(0): 対角成分がパターンに存在しません (row={i})")
        diag_pos[i] = p

    for i in range(n):
        s, e = indptr[i], indptr[i + 1]
        cols_i = indices[s:e]
        for p in range(s, diag_pos[i]):
            k = indices[p]
            pivot = data[diag_pos[k]]
            if pivot == 0.0:
                raise FactorizationError(int(k))
            data[p] /= pivot
            ks, ke = diag_pos[k] + 1, indptr[k + 1]
            if ks == ke:
                continue
            kcols = indices[ks:ke]
            loc = np.searchsorted(cols_i, kcols)
            inside = loc < cols_i.size
            loc = loc[inside]
            hit = cols_i[loc] == kcols[inside]
            if not np.any(hit):
                continue
            data[s + loc[hit]] -= data[p] * data[ks:ke][inside][hit]
        if data[diag_pos[i]] == 0.0:
            raise FactorizationError(i)

    lower = sp.tril(F, k=-1, format="csr") + sp.identity(n, format="csr")
    upper = sp.triu(F, k=0, format="csr")
    logger.debug(f"ILU(0)分解が完了しました: n={n}, nnz={F.nnz}")
    return Ilu0Preconditioner(as_csr(lower), as_csr(upper))


def make_preconditioner(A: MatrixLike, precond: PrecondName):
    if precond == "none":
        return IdentityPreconditioner()
    if precond == "jacobi":
        return JacobiPreconditioner(A)
    if precond == "ilu0":
        return ilu0_factor(A)
    raise InvalidArgumentError(f"未知の前処理です: {precond}")


def cg_solve(
    A: MatrixLike,
    b: np.ndarray,
    precond: PrecondName = "ilu0",
    rtol: float = DEFAULT_RTOL,
    max_iter: int = 10000,
    x0: Optional[np.ndarray] = None,
    preconditioner=None,
    callback: Optional[Callable[[np.ndarray], None]] = None,
) -> Tuple[np.ndarray, SolveStats]:
    """
    前処理付きCGで A x = b を解く。

    収束判定は ||b - A x||_2 <= rtol ||b||_2。再帰的に更新した残差で
    判定した後、真の残差で確認し、満たさなければ再スタートする。
    収束しなかった場合も例外は投げず、stats.converged=False で返す。

    Args:
        A: 対称（解く部分空間上で正定値）な行列
        b: 右辺
        precond: "none" / "jacobi" / "ilu0"
        rtol: 相対残差の許容値
        max_iter: 最大反復回数
        x0: 初期値（省略時はゼロ）
        preconditioner: 事前に作った前処理（precondより優先）
        callback: 各反復後に近似解を受け取る関数
    """
    A = as_csr(A)
    b = np.asarray(b, dtype=float)
    n = A.shape[0]
    if A.shape[1] != n or b.shape != (n,):
        raise InvalidArgumentError(f"次元が一致しません: A={A.shape}, b={b.shape}")
    M = preconditioner if preconditioner is not None else make_preconditioner(A, precond)

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    b_norm = float(np.linalg.norm(b))
    if b_norm == 0.0:
        x[:] = 0.0
        return x, SolveStats(0, 0.0, True, M.name, [0.0])
    target = rtol * b_norm

    r = b - A @ x
    r_norm = float(np.linalg.norm(r))
    history = [r_norm / b_norm]
    if r_norm <= target:
        return x, SolveStats(0, r_norm / b_norm, True, M.name, history)

    z = M.apply(r)
    p = z.copy()
    rz = float(r @ z)
    iterations = 0
    converged = False
    while iterations < max_iter:
        Ap = A @ p
        pAp = float(p @ Ap)
        if pAp <= 0.0:
            logger.warning(f"CG: 正定値でない方向を検出しました (p^T A p={pAp:.3e})")
            break
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        iterations += 1
        if callback is not None:
            callback(x)
        r_norm = float(np.linalg.norm(r))
        history.append(r_norm / b_norm)
        if r_norm <= target:
            r = b - A @ x
            r_norm = float(np.linalg.norm(r))
            if r_norm <= target:
                converged = True
                break
            logger.debug(f"CG: 真の残差が許容値を超えたため再スタートします ({r_norm / b_norm:.3e})")
            z = M.apply(r)
            p = z.copy()
            rz = float(r @ z)
            continue
        z = M.apply(r)
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new

    if not converged:
        r_norm = float(np.linalg.norm(b - A @ x))
        logger.warning(
            f"CGが収束しませんでした: iterations={iterations}, residual={r_norm / b_norm:.3e}, rtol={rtol:.1e}, precond={M.name}"
        )
    return x, SolveStats(iterations, r_norm / b_norm, converged, M.name, history)
