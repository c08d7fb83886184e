"""Structural-learning (multi-task ridge) embedding baseline."""

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .._validation import as_dense, check_count, check_positive
from ..exceptions import DegenerateError, ValidationError
from ..linalg import fix_signs


def ridge_predictors(V, T, rho):
    """``W = (V^T V + rho I)^{-1} V^T T``."""
    V = as_dense(V, "V")
    rho = check_positive(rho, "rho")
    M = T.matrix if hasattr(T, "matrix") else T
    if M.shape[0] != V.shape[0]:
        raise ValidationError(f"V has {V.shape[0]} rows, T has {M.shape[0]}")
    VtT = np.asarray((M.T @ V).T) if sp.issparse(M) else V.T @ as_dense(M, "T")
    G = V.T @ V
    gram_norm = np.linalg.norm(G, 2)
    G[np.diag_indices_from(G)] += rho
    return la.solve(G, VtT, assume_a="pos"), VtT, gram_norm


def structural_learning_embed(V, T, rho, d, degenerate_tol=1e-12):
    """Top-``d`` left singular vectors of the ridge predictor matrix.

    Raises :class:`DegenerateError` when the regularizer swamps the data
    so that ``W`` is numerically zero relative to ``V^T T``.
    """
    W, VtT, gram = ridge_predictors(V, T, rho)
    d = check_count(d, "d", 1, min(W.shape))
    data_scale = np.linalg.norm(VtT) / gram if gram > 0 else 0.0
    if data_scale == 0 or np.linalg.norm(W) <= degenerate_tol * data_scale:
        raise DegenerateError("ridge predictors are numerically zero; rho is too large")
    U, _, _ = la.svd(W, full_matrices=False)
    return fix_signs(U[:, :d])


class StructuralLearning(TransformerMixin, BaseEstimator):
    """Embed visual features as ``V U_1`` where ``U_1`` spans the leading
    left singular subspace of the ridge tag predictors."""

    def __init__(self, n_components=128, rho=1.0):
        self.n_components = n_components
        self.rho = rho

    def fit(self, V, T):
        V = as_dense(V, "V")
        self.mean_ = V.mean(axis=0)
        W, _, _ = ridge_predictors(V - self.mean_, T, self.rho)
        U, S, _ = la.svd(W, full_matrices=False)
        d = min(self.n_components, U.shape[1])
        self.components_ = fix_signs(U[:, :d])
        self.singular_values_ = S[:d]
        return self

    def transform(self, V):
        check_is_fitted(self, "components_")
        return (as_dense(V, "V") - self.mean_) @ self.components_

    def truncate(self, d):
        out = StructuralLearning(d, self.rho)
        out.mean_ = self.mean_
        out.components_ = self.components_[:, :d]
        out.singular_values_ = self.singular_values_[:d]
        return out
