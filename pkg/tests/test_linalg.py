import numpy as np
import pytest
import scipy.linalg as la
import scipy.sparse as sp
from hypothesis import given, strategies as st

from mvcca.exceptions import SingularityError, ValidationError
from mvcca.linalg import (
    center_columns,
    cholesky,
    fix_signs,
    pca_apply,
    pca_fit,
    sym_generalized_eig,
    truncated_svd,
)

from conftest import random_spd


FROZEN_GEN_EIG = [3.783611624891224, 2.0, 1.3592455179659184]


def whitening_oracle(A, B):
    L = np.linalg.cholesky(B)
    Li = np.linalg.inv(L)
    ev = np.linalg.eigvalsh(Li @ A @ Li.T)
    return ev[::-1]


class TestSymGeneralizedEig:
    def test_identity(self):
        res = sym_generalized_eig(np.eye(3), np.eye(3), 3)
        np.testing.assert_allclose(res.eigenvalues, [1, 1, 1])

    def test_two_by_two_closed_form(self):
        res = sym_generalized_eig(np.array([[2.0, 1.0], [1.0, 2.0]]), np.eye(2), 2)
        np.testing.assert_allclose(res.eigenvalues, [3, 1], atol=1e-14)
        s = 1 / np.sqrt(2)
        W = res.eigenvectors
        np.testing.assert_allclose(np.abs(W[:, 0]), [s, s], atol=1e-14)
        np.testing.assert_allclose(np.abs(W[:, 1]), [s, s], atol=1e-14)
        assert np.sign(W[0, 1]) == -np.sign(W[1, 1])

    def test_whitening_oracle(self, rng):
        M = rng.standard_normal((6, 6))
        A = M + M.T
        B = random_spd(rng, 6)
        res = sym_generalized_eig(A, B, 6)
        assert np.max(np.abs(res.eigenvalues - whitening_oracle(A, B))) <= 1e-10

    def test_frozen_eigenvalues(self):
        # values from LAPACK's generalized solver (sygvd), frozen
        A = np.array([[4.0, 1.0, 0.0], [1.0, 3.0, 1.0], [0.0, 1.0, 2.0]])
        B = np.array([[2.0, 0.5, 0.0], [0.5, 1.0, 0.0], [0.0, 0.0, 1.0]])
        res = sym_generalized_eig(A, B, 3)
        np.testing.assert_allclose(res.eigenvalues, FROZEN_GEN_EIG, atol=1e-12)

    def test_scipy_generalized_oracle(self, rng):
        M = rng.standard_normal((5, 5))
        A, B = M + M.T, random_spd(rng, 5)
        res = sym_generalized_eig(A, B, 5)
        np.testing.assert_allclose(res.eigenvalues, la.eigh(A, B, eigvals_only=True)[::-1],
                                   atol=1e-10)

    def test_top_k_subset(self, rng):
        M = rng.standard_normal((8, 8))
        A, B = M @ M.T, random_spd(rng, 8)
        full = sym_generalized_eig(A, B, 8)
        top = sym_generalized_eig(A, B, 3)
        np.testing.assert_allclose(top.eigenvalues, full.eigenvalues[:3], rtol=1e-12)
        np.testing.assert_allclose(top.eigenvectors, full.eigenvectors[:, :3], atol=1e-10)

    def test_nonsymmetric_rejected(self):
        A = np.array([[1.0, 2.0], [0.0, 1.0]])
        with pytest.raises(ValidationError):
            sym_generalized_eig(A, np.eye(2), 1)

    def test_not_pd_names_pivot(self):
        B = np.diag([1.0, 2.0, -1.0])
        with pytest.raises(SingularityError) as exc:
            sym_generalized_eig(np.eye(3), B, 1)
        assert exc.value.pivot == 2
        assert "2" in str(exc.value)

    def test_k_too_large(self):
        with pytest.raises(ValidationError):
            sym_generalized_eig(np.eye(2), np.eye(2), 3)

    @given(st.integers(2, 7), st.integers(0, 10_000))
    def test_residual_and_b_orthonormality(self, n, seed):
        r = np.random.default_rng(seed)
        M = r.standard_normal((n, n))
        A = M + M.T
        B = random_spd(r, n, cond=50.0)
        res = sym_generalized_eig(A, B, n)
        W, lam = res.eigenvectors, res.eigenvalues
        scale = np.abs(A).sum(axis=1).max()
        assert np.max(np.abs(A @ W - B @ W * lam)) <= 1e-8 * scale
        assert np.max(np.abs(W.T @ B @ W - np.eye(n))) <= 1e-8
        assert np.all(np.diff(lam) <= 1e-12)
        idx = np.argmax(np.abs(W), axis=0)
        assert np.all(W[idx, np.arange(n)] > 0)

    @given(st.integers(2, 4), st.integers(1, 4), st.integers(0, 10_000))
    def test_rayleigh_bound_for_view_blocks(self, m, dim, seed):
        r = np.random.default_rng(seed)
        n = 30
        Z = np.hstack([r.standard_normal((n, dim)) for _ in range(m)])
        Z -= Z.mean(axis=0)
        A = Z.T @ Z / n
        B = np.zeros_like(A)
        for v in range(m):
            s = slice(v * dim, (v + 1) * dim)
            B[s, s] = A[s, s]
        B += 1e-6 * np.eye(m * dim)
        lam = sym_generalized_eig(A, B, m * dim).eigenvalues
        assert lam[-1] >= -1e-9
        assert lam[0] <= m + 1e-9
        assert lam[0] >= 1 - 1e-6


class TestCholesky:
    def test_factor(self, rng):
        B = random_spd(rng, 5)
        L = cholesky(B)
        np.testing.assert_allclose(L @ L.T, B, atol=1e-12)
        assert np.allclose(L, np.tril(L))

    def test_singular(self):
        with pytest.raises(SingularityError) as exc:
            cholesky(np.array([[1.0, 1.0], [1.0, 1.0]]))
        assert exc.value.pivot == 1


def test_fix_signs():
    W = np.array([[0.1, -3.0], [-2.0, 1.0]])
    out = fix_signs(W)
    np.testing.assert_array_equal(out, [[-0.1, 3.0], [2.0, -1.0]])


class TestPCA:
    def test_collinear(self):
        X = np.array([[1.0, 1.0], [-1.0, -1.0], [2.0, 2.0], [-2.0, -2.0]])
        m = pca_fit(X, 2)
        s = 1 / np.sqrt(2)
        np.testing.assert_allclose(np.abs(m.components[:, 0]), [s, s], atol=1e-12)
        assert abs(m.component_variances[1]) <= 1e-12

    def test_full_rank_reconstruction(self, rng):
        X = rng.standard_normal((20, 6))
        m = pca_fit(X, 6)
        R = pca_apply(m, X) @ m.components.T + m.mean
        np.testing.assert_allclose(R, X, atol=1e-10)

    def test_reconstruction_loss_equals_discarded_eigenvalues(self, rng):
        X = rng.standard_normal((20, 6)) @ rng.standard_normal((6, 6))
        m = pca_fit(X, 3)
        Xc = X - X.mean(axis=0)
        R = pca_apply(m, X) @ m.components.T
        loss = np.sum((Xc - R) ** 2) / X.shape[0]
        ev = np.linalg.eigvalsh(Xc.T @ Xc / X.shape[0])
        np.testing.assert_allclose(loss, ev[:3].sum(), rtol=1e-8)

    def test_apply_mean_row_and_identity(self, rng):
        X = rng.standard_normal((10, 4))
        m = pca_fit(X, 2)
        np.testing.assert_allclose(pca_apply(m, m.mean[None, :]), 0.0, atol=1e-14)
        from mvcca.linalg import PCAModel

        ident = PCAModel(np.zeros(4), np.eye(4), np.ones(4))
        np.testing.assert_array_equal(pca_apply(ident, X), X)

    def test_training_projection_centered_and_decorrelated(self, rng):
        X = rng.standard_normal((50, 5)) @ rng.standard_normal((5, 5)) + 3.0
        m = pca_fit(X, 4)
        P = pca_apply(m, X)
        assert np.max(np.abs(P.mean(axis=0))) <= 1e-10
        C = P.T @ P / X.shape[0]
        assert np.max(np.abs(C - np.diag(np.diag(C)))) <= 1e-8
        np.testing.assert_allclose(m.components.T @ m.components, np.eye(4), atol=1e-10)
        assert np.all(np.diff(m.component_variances) <= 1e-12)

    def test_errors(self, rng):
        X = rng.standard_normal((5, 3))
        with pytest.raises(ValidationError):
            pca_fit(X, 4)
        with pytest.raises(ValidationError):
            pca_fit(X[:1], 1)
        m = pca_fit(X, 2)
        with pytest.raises(ValidationError):
            pca_apply(m, np.ones((2, 4)))


class TestTruncatedSVD:
    def test_diagonal(self):
        U, S, Vt = truncated_svd(sp.diags([3.0, 2.0, 1.0]).tocsr(), 2)
        np.testing.assert_allclose(S, [3, 2], atol=1e-12)

    def test_rank_one(self, rng):
        u, v = rng.standard_normal(30), rng.standard_normal(20)
        X = sp.csr_matrix(np.outer(u, v))
        U, S, Vt = truncated_svd(X, 1, dense_limit=0)
        np.testing.assert_allclose(S[0], np.linalg.norm(u) * np.linalg.norm(v), rtol=1e-10)
        assert np.linalg.norm(X.toarray() - (U * S) @ Vt) <= 1e-9 * S[0]

    @pytest.mark.parametrize("dense_limit", [0, 10_000_000])
    def test_dense_oracle_random_sparse(self, dense_limit):
        X = sp.random(100, 50, density=0.05, random_state=3, format="csr")
        U, S, Vt = truncated_svd(X, 10, seed=0, dense_limit=dense_limit)
        ref = np.linalg.svd(X.toarray(), compute_uv=False)[:10]
        assert np.max(np.abs(S - ref) / ref) <= 1e-6
        np.testing.assert_allclose(U.T @ U, np.eye(10), atol=1e-8)
        np.testing.assert_allclose(Vt @ Vt.T, np.eye(10), atol=1e-8)

    def test_randomized_path_200(self):
        X = sp.random(200, 200, density=0.03, random_state=7, format="csr")
        _, S, _ = truncated_svd(X, 20, seed=1, dense_limit=0)
        ref = np.linalg.svd(X.toarray(), compute_uv=False)[:20]
        assert np.max(np.abs(S - ref) / ref) <= 1e-6

    def test_dense_input_and_sign_convention(self, rng):
        X = rng.standard_normal((15, 8))
        U, S, Vt = truncated_svd(X, 3, dense_limit=0)
        idx = np.argmax(np.abs(U), axis=0)
        assert np.all(U[idx, np.arange(3)] > 0)
        np.testing.assert_allclose(S, np.linalg.svd(X, compute_uv=False)[:3], rtol=1e-8)

    def test_k_too_large(self):
        with pytest.raises(ValidationError):
            truncated_svd(sp.eye(4).tocsr(), 5)

    @given(st.integers(0, 1000))
    def test_residual_non_increasing_in_k(self, seed):
        X = sp.random(40, 25, density=0.2, random_state=seed, format="csr")
        prev = np.inf
        for k in range(1, 9):
            U, S, Vt = truncated_svd(X, k, seed=seed, dense_limit=0)
            res = np.linalg.norm(X.toarray() - (U * S) @ Vt)
            assert res <= prev + 1e-9
            prev = res

    def test_deterministic(self):
        X = sp.random(60, 40, density=0.1, random_state=0, format="csr")
        a = truncated_svd(X, 5, seed=4, dense_limit=0)
        b = truncated_svd(X, 5, seed=4, dense_limit=0)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x, y)


def test_center_columns(rng):
    X = rng.standard_normal((7, 3)) + 5
    Xc, mean = center_columns(X)
    np.testing.assert_allclose(Xc.mean(axis=0), 0, atol=1e-14)
    np.testing.assert_allclose(Xc + mean, X)
