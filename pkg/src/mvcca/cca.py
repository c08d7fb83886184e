"""Multi-view CCA with explicit feature maps.

Given centered view matrices ``Z_1 .. Z_m`` the model solves

    A w = lambda B w,   A = [S_ij],  B = blockdiag(S_ii) + eps I,
    S_ij = Z_i^T Z_j / n

and slices the top-``d`` stacked eigenvectors into per-view projections.
All eigenvalues lie in ``[0, m]``; for two views ``lambda = 1 + rho`` with
``rho`` the canonical correlations (as ``eps -> 0``).
"""

import copy
import warnings

import numpy as np
from sklearn.base import BaseEstimator, clone
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_is_fitted

from ._validation import as_dense, check_count
from .exceptions import ValidationError
from .kernel_maps import FeatureAssembler
from .linalg import sym_generalized_eig
from .text import TagFeaturizer

DEFAULT_CANDIDATE_DIMS = (16, 32, 64, 128, 256, 512, 1024)


class MultiViewCCA(BaseEstimator):
    """Regularized multi-view CCA.

    Parameters
    ----------
    n_components : int
        Latent dimension ``d``; capped at the total view dimension when
        ``cap_components`` is True.
    epsilon : float
        Ridge added to the diagonal of every within-view covariance block.
    preprocessors : list or None
        One entry per view: a transformer mapping raw view input to a
        feature matrix (e.g. :class:`FeatureAssembler`,
        :class:`TagFeaturizer`) or None for dense passthrough.
    view_names : list of str or None
        Optional names usable wherever a view index is expected.
    prefit : bool
        If True the preprocessors are already fitted and only ``transform``
        is called; otherwise they are cloned and fitted.
    cap_components : bool

    Attributes
    ----------
    eigenvalues_ : ndarray, shape (d,)
    projections_ : list of ndarray, shapes (d_i, d)
    means_ : list of ndarray
    preprocessors_ : list
    view_dims_ : list of int
    """

    def __init__(self, n_components=128, epsilon=1e-4, preprocessors=None, view_names=None,
                 prefit=False, cap_components=False):
        self.n_components = n_components
        self.epsilon = epsilon
        self.preprocessors = preprocessors
        self.view_names = view_names
        self.prefit = prefit
        self.cap_components = cap_components

    # -- fitting -------------------------------------------------------
    def _features(self, Xs):
        if not isinstance(Xs, (list, tuple)) or len(Xs) < 2:
            raise ValidationError("Xs must be a list of at least two views")
        pres = self.preprocessors or [None] * len(Xs)
        if len(pres) != len(Xs):
            raise ValidationError(f"{len(Xs)} views but {len(pres)} preprocessors")
        fitted, Zs = [], []
        for i, (pre, X) in enumerate(zip(pres, Xs)):
            if pre is None:
                Z = as_dense(X, f"view {i}")
            elif self.prefit:
                Z = pre.transform(X)
            else:
                pre = clone(pre)
                Z = pre.fit_transform(X)
            fitted.append(pre)
            Zs.append(np.asarray(Z, dtype=np.float64))
        return fitted, Zs

    def fit(self, Xs, y=None):
        """Fit on a list of raw views sharing one item order."""
        self.fit_transform(Xs)
        return self

    def fit_transform(self, Xs, y=None):
        """Fit and return the in-fit latent projections of every view."""
        fitted, Zs = self._features(Xs)
        return self._fit_features(fitted, Zs)

    def _fit_features(self, fitted, Zs):
        rows = {Z.shape[0] for Z in Zs}
        if len(rows) != 1:
            raise ValidationError(f"views disagree on row count: {sorted(rows)}")
        n = rows.pop()
        dims = [Z.shape[1] for Z in Zs]
        total = sum(dims)
        d = self.n_components
        if self.cap_components:
            d = min(d, total)
        d = check_count(d, "n_components", 1, total)
        if self.epsilon < 0 or not np.isfinite(self.epsilon):
            raise ValidationError(f"epsilon must be >= 0, got {self.epsilon}")
        if n <= max(dims):
            warnings.warn(
                f"n={n} does not exceed the largest view dimension {max(dims)}; "
                "covariances are rank deficient",
                RuntimeWarning,
                stacklevel=3,
            )
        means = [Z.mean(axis=0) for Z in Zs]
        Zc = np.hstack([Z - m for Z, m in zip(Zs, means)])
        A = (Zc.T @ Zc) / n
        A = 0.5 * (A + A.T)
        B = np.zeros_like(A)
        offsets = np.concatenate([[0], np.cumsum(dims)])
        for a, b in zip(offsets[:-1], offsets[1:]):
            B[a:b, a:b] = A[a:b, a:b]
        B[np.diag_indices_from(B)] += self.epsilon
        eig = sym_generalized_eig(A, B, d)

        self.preprocessors_ = fitted
        self.means_ = means
        self.view_dims_ = dims
        self.eigenvalues_ = eig.eigenvalues
        self.projections_ = [eig.eigenvectors[a:b] for a, b in zip(offsets[:-1], offsets[1:])]
        self.n_components_ = d
        self.n_views_ = len(Zs)
        self.n_samples_fit_ = n
        return [
            Zc[:, a:b] @ W for (a, b), W in zip(zip(offsets[:-1], offsets[1:]), self.projections_)
        ]

    def fit_features(self, Zs, preprocessors=None):
        """Fit directly on already-featurized view matrices.

        ``preprocessors`` (fitted, one per view or None) are attached so
        raw inputs can be projected later.
        """
        Zs = [as_dense(Z, f"view {i}") for i, Z in enumerate(Zs)]
        if len(Zs) < 2:
            raise ValidationError("at least two views are required")
        pres = list(preprocessors) if preprocessors is not None else [None] * len(Zs)
        if len(pres) != len(Zs):
            raise ValidationError(f"{len(Zs)} views but {len(pres)} preprocessors")
        self._fit_features(pres, Zs)
        return self

    # -- projection ----------------------------------------------------
    def view_index(self, view):
        if isinstance(view, str):
            names = list(self.view_names or [])
            if view not in names:
                raise ValidationError(f"unknown view {view!r}; known: {names}")
            return names.index(view)
        n_views = getattr(self, "n_views_", None) or len(self.preprocessors or [])
        if not isinstance(view, (int, np.integer)) or not 0 <= view < n_views:
            raise ValidationError(f"view index {view!r} out of range")
        return int(view)

    def featurize(self, X, view):
        """Apply the view's preprocessing chain (not the projection)."""
        check_is_fitted(self, "projections_")
        i = self.view_index(view)
        pre = self.preprocessors_[i]
        Z = as_dense(X, f"view {i}") if pre is None else np.asarray(pre.transform(X))
        if Z.ndim != 2 or Z.shape[1] != self.view_dims_[i]:
            raise ValidationError(
                f"view {i} expects {self.view_dims_[i]} features, got shape {Z.shape}"
            )
        return Z

    def transform_view(self, X, view):
        """Latent coordinates (rows) for a batch of raw single-view inputs."""
        i = self.view_index(view)
        Z = self.featurize(X, i)
        return (Z - self.means_[i]) @ self.projections_[i]

    def transform(self, Xs):
        """Latent coordinates for every view of a list of raw views."""
        check_is_fitted(self, "projections_")
        if len(Xs) != self.n_views_:
            raise ValidationError(f"expected {self.n_views_} views, got {len(Xs)}")
        return [self.transform_view(X, i) for i, X in enumerate(Xs)]

    def project(self, x, view):
        """Latent vector of one raw item observed in a single view."""
        i = self.view_index(view)
        pre = self.preprocessors_[i]
        if isinstance(pre, FeatureAssembler):
            if isinstance(x, np.ndarray) and x.ndim == 1:
                x = [x]
            batch = [np.asarray(b, dtype=np.float64).reshape(1, -1) for b in x]
        elif isinstance(pre, TagFeaturizer):
            batch = [x]
        else:
            batch = np.asarray(x, dtype=np.float64).reshape(1, -1)
        return self.transform_view(batch, i)[0]

    def truncate(self, d):
        """Copy keeping only the leading ``d`` latent dimensions."""
        check_is_fitted(self, "projections_")
        d = check_count(d, "d", 1, self.n_components_)
        out = copy.copy(self)
        out.n_components = d
        out.n_components_ = d
        out.eigenvalues_ = self.eigenvalues_[:d].copy()
        out.projections_ = [W[:, :d].copy() for W in self.projections_]
        return out

    def stacked_projection(self):
        check_is_fitted(self, "projections_")
        return np.vstack(self.projections_)


def select_dimension(model, evaluate, candidate_ds=DEFAULT_CANDIDATE_DIMS):
    """Pick the latent dimension with the best mean validation score.

    ``model`` is fitted once with at least the largest usable candidate;
    smaller candidates are leading-column slices of the same solution.
    ``evaluate(truncated_model)`` returns per-query scores. Ties go to
    the smaller dimension.
    """
    if getattr(model, "n_components_", None) is None:
        raise NotFittedError("select_dimension needs a fitted model")
    cands = sorted({int(d) for d in candidate_ds})
    if not cands:
        raise ValidationError("no candidate dimensions")
    usable = [d for d in cands if d <= model.n_components_] or [model.n_components_]
    best_d, best_score = None, -np.inf
    for d in usable:
        scores = np.asarray(list(evaluate(model.truncate(d))), dtype=np.float64)
        if scores.size == 0:
            raise ValidationError("empty validation set")
        score = float(scores.mean())
        if score > best_score:
            best_d, best_score = d, score
    return best_d


def fit_cca(views, d, epsilon=1e-4, **kwargs):
    """Functional wrapper: fit :class:`MultiViewCCA` on featurized views."""
    return MultiViewCCA(n_components=d, epsilon=epsilon, **kwargs).fit_features(views)
