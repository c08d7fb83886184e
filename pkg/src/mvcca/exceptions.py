"""Exception hierarchy shared across the package."""

import numpy as np


class ValidationError(ValueError):
    """Input failed a shape, range or type check."""


class EmptyVocabularyError(ValidationError):
    """No term survived vocabulary filtering."""


class UndefinedSimilarityError(ValidationError):
    """A scaled latent projection has zero norm, so the normalized
    correlation is undefined."""


class NumericalError(ArithmeticError):
    """Base class for numerical failures (singular systems, degenerate
    factorizations)."""


class SingularityError(NumericalError, np.linalg.LinAlgError):
    """A matrix expected to be positive definite is not.

    Attributes
    ----------
    pivot : int or None
        Zero-based index of the failing Cholesky pivot, when known.
    """

    def __init__(self, message, pivot=None):
        super().__init__(message)
        self.pivot = pivot


class DegenerateError(NumericalError):
    """A factorization was requested of a (numerically) zero matrix."""


class EmptyInputWarning(UserWarning):
    """A query or item carried no usable information (e.g. only
    out-of-vocabulary tags)."""
