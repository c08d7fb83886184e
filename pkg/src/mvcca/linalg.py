"""Dense and sparse numerical primitives.

Everything here is a pure function of its inputs. The symmetric generalized
eigensolver whitens with a Cholesky factor of ``B`` and then solves a
standard symmetric problem, so symmetry is preserved end to end.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from ._validation import as_dense, check_count, check_symmetric
from .exceptions import SingularityError, ValidationError


@dataclass(frozen=True)
class EigResult:
    """Top eigenpairs, eigenvalues descending, one eigenvector per column."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


@dataclass(frozen=True)
class PCAModel:
    mean: np.ndarray
    components: np.ndarray
    component_variances: np.ndarray

    @property
    def n_components(self):
        return self.components.shape[1]


def fix_signs(vectors):
    """Flip each column so its largest-magnitude entry is positive."""
    vectors = np.array(vectors, dtype=np.float64, copy=True)
    if vectors.size == 0:
        return vectors
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def cholesky(B):
    """Lower Cholesky factor of ``B``.

    Raises :class:`SingularityError` naming the first non-positive pivot.
    """
    B = as_dense(B, "B")
    check_symmetric(B, name="B")
    L, info = la.lapack.dpotrf(B, lower=1, clean=1)
    if info > 0:
        raise SingularityError(
            f"B is not positive definite: Cholesky pivot {info - 1} "
            f"(zero-based) is non-positive",
            pivot=info - 1,
        )
    if info < 0:  # pragma: no cover - LAPACK argument error
        raise ValidationError(f"dpotrf argument {-info} invalid")
    return L


def sym_generalized_eig(A, B, k, sym_tol=1e-10):
    """Top-``k`` solutions of ``A w = lambda B w`` for symmetric ``A`` and
    symmetric positive-definite ``B``.

    Parameters
    ----------
    A : array-like, shape (m, m)
    B : array-like, shape (m, m)
    k : int
        Number of leading eigenpairs, ``1 <= k <= m``.
    sym_tol : float
        Relative tolerance for the symmetry check on ``A``.

    Returns
    -------
    EigResult
        Eigenvalues descending; eigenvectors B-orthonormal with the
        largest-magnitude entry of each made positive.
    """
    A = as_dense(A, "A")
    check_symmetric(A, tol=sym_tol, name="A")
    B = as_dense(B, "B")
    if B.shape != A.shape:
        raise ValidationError(f"A {A.shape} and B {B.shape} differ in shape")
    m = A.shape[0]
    k = check_count(k, "k", 1, m)

    L = cholesky(B)
    # C = L^-1 A L^-T
    tmp = la.solve_triangular(L, A, lower=True)
    C = la.solve_triangular(L, tmp.T, lower=True)
    C = 0.5 * (C + C.T)
    vals, Y = la.eigh(C, subset_by_index=(m - k, m - 1))
    vals = vals[::-1]
    Y = Y[:, ::-1]
    W = la.solve_triangular(L.T, Y, lower=False)
    return EigResult(eigenvalues=vals, eigenvectors=fix_signs(W))


def pca_fit(X, d):
    """Fit a ``d``-component PCA on the column-centered covariance of ``X``."""
    X = as_dense(X, "X", min_samples=2)
    n, p = X.shape
    d = check_count(d, "d", 1, min(n, p))
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = (Xc.T @ Xc) / n
    cov = 0.5 * (cov + cov.T)
    vals, vecs = la.eigh(cov, subset_by_index=(p - d, p - 1))
    vals = np.clip(vals[::-1], 0.0, None)
    vecs = fix_signs(vecs[:, ::-1])
    return PCAModel(mean=mean, components=vecs, component_variances=vals)


def pca_apply(model, X):
    """Project rows of ``X``: ``(X - mean) @ components``."""
    X = as_dense(X, "X")
    if X.shape[1] != model.mean.shape[0]:
        raise ValidationError(
            f"X has {X.shape[1]} columns, PCA model expects {model.mean.shape[0]}"
        )
    return (X - model.mean) @ model.components


def _orthonormalize(Y):
    Q, _ = la.qr(Y, mode="economic", check_finite=False)
    return Q


def truncated_svd(
    X,
    k,
    oversampling=10,
    power_iters=2,
    seed=0,
    tol=1e-12,
    max_power_iters=300,
    dense_limit=10_000_000,
):
    """Randomized truncated SVD of a sparse or dense matrix.

    A Gaussian sketch of width ``k + oversampling`` is refined by at least
    ``power_iters`` subspace iterations. When ``tol`` is not None the
    iteration continues until the leading ``k`` singular values change by
    less than ``tol`` (relative), up to ``max_power_iters``. Matrices with
    at most ``dense_limit`` entries, or whose sketch would span a full
    dimension, are decomposed exactly with a dense SVD instead.

    Returns
    -------
    U : ndarray, shape (rows, k)
    S : ndarray, shape (k,)
        Nonnegative, descending.
    Vt : ndarray, shape (k, cols)
    """
    if not sp.issparse(X):
        X = as_dense(X, "X")
    else:
        X = sp.csr_matrix(X, dtype=np.float64)
    m, n = X.shape
    k = check_count(k, "k", 1, min(m, n))
    oversampling = check_count(oversampling, "oversampling", 0)
    power_iters = check_count(power_iters, "power_iters", 0)
    width = min(k + oversampling, min(m, n))
    rng = np.random.default_rng(seed)

    if width == min(m, n) or m * n <= dense_limit:
        dense = X.toarray() if sp.issparse(X) else X
        U, S, Vt = la.svd(dense, full_matrices=False)
        return _finalize_svd(U[:, :k], S[:k], Vt[:k])

    XT = X.T.tocsr() if sp.issparse(X) else X.T
    Q = _orthonormalize(X @ rng.standard_normal((n, width)))

    def project(Q):
        Bt = XT @ Q  # (n, width) = (Q^T X)^T
        _, S, _ = la.svd(Bt.T, full_matrices=False)
        return S[:k]

    previous = None
    it = 0
    while True:
        if it >= power_iters:
            if tol is None:
                break
            current = project(Q)
            if previous is not None and np.all(
                np.abs(current - previous) <= tol * max(current[0], np.finfo(float).tiny)
            ):
                break
            previous = current
            if it >= max_power_iters:
                break
        Z = _orthonormalize(XT @ Q)
        Q = _orthonormalize(X @ Z)
        it += 1

    Bt = np.asarray(XT @ Q)
    Ub, S, Vt = la.svd(Bt.T, full_matrices=False)
    U = Q @ Ub[:, :k]
    return _finalize_svd(U, S[:k], Vt[:k])


def _finalize_svd(U, S, Vt):
    # sign convention on U columns, mirrored into Vt
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[idx, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    return U * signs, np.clip(S, 0.0, None), Vt * signs[:, None]


def center_columns(X):
    """Return ``(X - mean, mean)`` with column means taken over rows."""
    X = as_dense(X, "X")
    mean = X.mean(axis=0)
    return X - mean, mean
