"""Input validation helpers that raise :class:`ValidationError`."""

import numpy as np
import scipy.sparse as sp
from sklearn.utils import check_array

from .exceptions import ValidationError


def as_dense(X, name="X", ensure_2d=True, min_samples=1):
    """Validate and return a finite float64 ndarray."""
    try:
        return check_array(
            X,
            dtype=np.float64,
            ensure_2d=ensure_2d,
            ensure_min_samples=min_samples,
            ensure_all_finite=True,
        )
    except (ValueError, TypeError) as exc:
        raise ValidationError(f"{name}: {exc}") from exc


def as_sparse(X, name="X", nonnegative=False):
    """Validate and return a finite float64 CSR matrix (dense input is
    converted)."""
    try:
        X = check_array(
            X,
            accept_sparse="csr",
            dtype=np.float64,
            ensure_all_finite=True,
            ensure_min_samples=1,
        )
    except (ValueError, TypeError) as exc:
        raise ValidationError(f"{name}: {exc}") from exc
    X = sp.csr_matrix(X)
    X.sum_duplicates()
    if nonnegative and X.nnz and X.data.min() < 0:
        raise ValidationError(f"{name} must be nonnegative")
    return X


def as_vector(x, name="x"):
    try:
        x = np.asarray(x, dtype=np.float64)
    except (ValueError, TypeError) as exc:
        raise ValidationError(f"{name}: {exc}") from exc
    if x.ndim != 1:
        raise ValidationError(f"{name} must be one-dimensional, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValidationError(f"{name} contains non-finite values")
    return x


def check_count(value, name, low=1, high=None):
    if isinstance(value, (bool, np.bool_)) or not isinstance(value, (int, np.integer)):
        raise ValidationError(f"{name} must be an integer, got {value!r}")
    if value < low or (high is not None and value > high):
        bound = f"[{low}, {high}]" if high is not None else f">= {low}"
        raise ValidationError(f"{name}={value} out of range {bound}")
    return int(value)


def check_positive(value, name):
    if not np.isfinite(value) or value <= 0:
        raise ValidationError(f"{name} must be positive and finite, got {value!r}")
    return float(value)


def check_symmetric(A, tol=1e-10, name="A"):
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValidationError(f"{name} must be square, got shape {A.shape}")
    scale = max(1.0, float(np.max(np.abs(A)))) if A.size else 1.0
    if np.max(np.abs(A - A.T), initial=0.0) > tol * scale:
        raise ValidationError(f"{name} is not symmetric within {tol}")
    return A
