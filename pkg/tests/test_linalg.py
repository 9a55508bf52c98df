#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
common パッケージ（疎行列・CG・ILU(0)・密LU・固有値）のテスト
"""

import numpy as np
import pytest
import scipy.linalg
import scipy.sparse as sp

from common.dense import dense_lu_solve
from common.errors import FactorizationError, InvalidArgumentError, SingularMatrixError
from common.krylov import cg_solve, ilu0_factor
from common.matrix_io import dump_matrix, dump_vector, load_matrix
from common.sparse import as_csr, max_asymmetry, min_eigenvalue, spmv, triple_product


def laplacian_1d(n: int, neumann: bool = False) -> sp.csr_matrix:
    A = sp.diags([-np.ones(n - 1), 2.0 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1], format="lil")
    if neumann:
        A[0, 0] = 1.0
        A[n - 1, n - 1] = 1.0
    return as_csr(A)


def laplacian_2d(m: int) -> sp.csr_matrix:
    T = laplacian_1d(m)
    I = sp.identity(m)
    return as_csr(sp.kron(I, T) + sp.kron(T, I))


class TestSpmv:
    def test_identity(self):
        x = np.array([1.0, -2.0, 3.0])
        np.testing.assert_array_equal(spmv(sp.identity(3, format="csr"), x), x)

    def test_constant_nullspace(self):
        np.testing.assert_array_equal(spmv(as_csr([[1.0, -1.0], [-1.0, 1.0]]), np.ones(2)), [0.0, 0.0])

    def test_diagonal(self):
        np.testing.assert_array_equal(spmv(as_csr([[2.0, 0.0], [0.0, 3.0]]), np.array([1.0, 2.0])), [2.0, 6.0])

    def test_dimension_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            spmv(sp.identity(3, format="csr"), np.ones(2))

    def test_csr_invariants(self):
        A = as_csr(sp.coo_matrix(([1.0, 2.0, 3.0], ([0, 0, 0], [2, 0, 2])), shape=(2, 3)))
        assert A.nnz == 2
        assert list(A.indices[A.indptr[0]:A.indptr[1]]) == [0, 2]
        assert A.indptr[-1] == A.nnz
        assert A[0, 2] == 4.0


class TestCg:
    def test_identity(self, rng):
        b = rng.standard_normal(10)
        x, stats = cg_solve(sp.identity(10, format="csr"), b, precond="none")
        np.testing.assert_allclose(x, b)
        assert stats.converged and stats.iterations <= 1

    def test_jacobi_diagonal(self):
        x, stats = cg_solve(sp.diags([1.0, 2.0, 4.0], format="csr"), np.array([1.0, 2.0, 4.0]), precond="jacobi")
        np.testing.assert_allclose(x, [1.0, 1.0, 1.0], rtol=1e-12)
        assert stats.converged

    def test_ilu0_beats_unpreconditioned_1d(self, rng):
        A = as_csr(laplacian_1d(32) + sp.identity(32))
        b = rng.standard_normal(32)
        x_none, s_none = cg_solve(A, b, precond="none", rtol=1e-10)
        x_ilu, s_ilu = cg_solve(A, b, precond="ilu0", rtol=1e-10)
        for x, stats in ((x_none, s_none), (x_ilu, s_ilu)):
            assert stats.converged
            assert np.linalg.norm(b - A @ x) <= 1e-10 * np.linalg.norm(b)
        assert s_ilu.iterations < s_none.iterations

    def test_ilu0_beats_unpreconditioned_2d(self, rng):
        A = laplacian_2d(4)
        b = rng.standard_normal(16)
        _, s_none = cg_solve(A, b, precond="none", rtol=1e-10)
        _, s_ilu = cg_solve(A, b, precond="ilu0", rtol=1e-10)
        assert s_ilu.converged and s_none.converged
        assert s_ilu.iterations < s_none.iterations

    def test_energy_error_decreases(self, rng):
        A = laplacian_2d(8)
        b = rng.standard_normal(64)
        x_exact = np.linalg.solve(A.toarray(), b)
        errors = []

        def record(x):
            e = x - x_exact
            errors.append(float(e @ (A @ e)))

        cg_solve(A, b, precond="ilu0", rtol=1e-8, callback=record)
        assert len(errors) > 1
        assert all(b_ <= a_ * (1.0 + 1e-8) + 1e-24 for a_, b_ in zip(errors, errors[1:]))

    def test_non_convergence_is_flagged(self, rng):
        A = laplacian_2d(8)
        b = rng.standard_normal(64)
        x, stats = cg_solve(A, b, precond="none", rtol=1e-12, max_iter=2)
        assert not stats.converged
        assert stats.iterations == 2
        assert stats.residual > 1e-12

    def test_converged_implies_tolerance(self, rng):
        A = as_csr(laplacian_1d(50) + 0.1 * sp.identity(50))
        b = rng.standard_normal(50)
        _, stats = cg_solve(A, b, precond="jacobi", rtol=1e-9)
        assert stats.converged and stats.residual <= 1e-9

    def test_zero_rhs(self):
        x, stats = cg_solve(laplacian_1d(5), np.zeros(5))
        np.testing.assert_array_equal(x, 0.0)
        assert stats.converged and stats.iterations == 0


class TestIlu0:
    def test_diagonal_is_exact_inverse(self):
        pre = ilu0_factor(sp.diags([2.0, 4.0, 8.0], format="csr"))
        np.testing.assert_allclose(pre.apply(np.array([2.0, 4.0, 8.0])), [1.0, 1.0, 1.0])

    def test_tridiagonal_equals_exact_lu(self):
        A = as_csr(laplacian_1d(12) + sp.identity(12))
        pre = ilu0_factor(A)
        np.testing.assert_allclose((pre.lower @ pre.upper).toarray(), A.toarray(), atol=1e-13)
        P, L, U = scipy.linalg.lu(A.toarray())
        np.testing.assert_allclose(P, np.eye(12))
        np.testing.assert_allclose(pre.upper.toarray(), U, atol=1e-13)

    def test_zero_pivot_names_row(self):
        with pytest.raises(FactorizationError) as info:
            ilu0_factor(as_csr([[1.0, 1.0], [1.0, 1.0]]))
        assert info.value.row == 1

    def test_missing_diagonal(self):
        with pytest.raises(FactorizationError) as info:
            ilu0_factor(as_csr([[0.0, 1.0], [1.0, 2.0]]))
        assert info.value.row == 0


class TestDenseLu:
    def test_identity(self, rng):
        B = rng.standard_normal((4, 3))
        np.testing.assert_allclose(dense_lu_solve(np.eye(4), B), B)

    def test_requires_pivoting(self):
        np.testing.assert_allclose(dense_lu_solve(np.array([[0.0, 1.0], [1.0, 0.0]]), np.array([1.0, 2.0])), [2.0, 1.0])

    def test_saddle(self):
        np.testing.assert_allclose(dense_lu_solve(np.array([[2.0, 1.0], [1.0, 0.0]]), np.array([0.0, 1.0])), [1.0, -2.0])

    def test_random_inverse(self, rng):
        for _ in range(5):
            A = rng.standard_normal((8, 8)) + 4.0 * np.eye(8)
            B = rng.standard_normal((8, 2))
            X = dense_lu_solve(A, B)
            assert np.linalg.norm(A @ X - B) <= 1e-10 * np.linalg.norm(B)

    def test_singular(self):
        with pytest.raises(SingularMatrixError):
            dense_lu_solve(np.array([[1.0, 2.0], [2.0, 4.0]]), np.array([1.0, 1.0]))


class TestTripleProduct:
    def test_identity_projection(self):
        A = laplacian_1d(5)
        np.testing.assert_allclose(triple_product(sp.identity(5, format="csr"), A).toarray(), A.toarray())

    def test_sum_row(self):
        result = triple_product(as_csr(np.ones((1, 3))), sp.identity(3, format="csr"))
        assert result.toarray()[0, 0] == pytest.approx(3.0)

    def test_dense_oracle(self, rng):
        R = as_csr(sp.random(3, 6, density=0.6, random_state=7))
        S = rng.standard_normal((6, 6))
        A = as_csr(S + S.T)
        result = triple_product(R, A)
        np.testing.assert_allclose(result.toarray(), R.toarray() @ A.toarray() @ R.toarray().T, atol=1e-12)
        assert max_asymmetry(result) == 0.0

    def test_dimension_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            triple_product(as_csr(np.ones((2, 4))), sp.identity(3, format="csr"))


class TestMinEigenvalue:
    def test_diagonal(self):
        assert min_eigenvalue(sp.diags([1.0, 2.0, 3.0], format="csr")) == pytest.approx(1.0)

    def test_indefinite(self):
        assert min_eigenvalue(as_csr([[0.0, 1.0], [1.0, 0.0]])) == pytest.approx(-1.0)

    def test_neumann_nullspace(self):
        assert abs(min_eigenvalue(laplacian_1d(8, neumann=True))) <= 1e-10

    def test_inverse_iteration_path(self):
        S = sp.diags(np.arange(1.0, 2102.0), format="csr")
        assert min_eigenvalue(S) == pytest.approx(1.0, abs=1e-6)

    def test_stiff_large_matrix(self):
        # 拡散係数 1e6 の Neumann ラプラシアンから 0.5 I を引いたもの（最小固有値 -0.5）
        n = 2500
        S = as_csr(1e6 * laplacian_1d(n, neumann=True) - 0.5 * sp.identity(n))
        assert min_eigenvalue(S) == pytest.approx(-0.5, abs=1e-6)

    def test_stiff_large_matrix_with_loose_lower_bound(self):
        n = 2200
        S = as_csr(1e6 * laplacian_1d(n) + sp.diags(np.linspace(-3.0, 1.0, n)))
        expected = scipy.linalg.eigvalsh(S.toarray(), subset_by_index=[0, 0])[0]
        assert min_eigenvalue(S) == pytest.approx(expected, rel=1e-8, abs=1e-8)


def test_matrix_market_dump(tmp_path):
    A = laplacian_1d(4)
    path = dump_matrix(A, tmp_path / "A.mtx")
    assert path.read_text().startswith("%%MatrixMarket matrix coordinate real general")
    np.testing.assert_allclose(load_matrix(path).toarray(), A.toarray())
    v = dump_vector(np.array([1.0, 2.0, 3.0]), tmp_path / "v.mtx")
    np.testing.assert_allclose(load_matrix(v), [1.0, 2.0, 3.0])
