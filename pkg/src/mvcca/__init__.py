"""Multi-view CCA embeddings for joint image, tag and semantic retrieval."""

from .cca import MultiViewCCA, fit_cca, select_dimension
from .exceptions import (
    DegenerateError,
    EmptyInputWarning,
    EmptyVocabularyError,
    NumericalError,
    SingularityError,
    UndefinedSimilarityError,
    ValidationError,
)
from .kernel_maps import FeatureAssembler, RandomFourierFeatures, assemble_features, sqrt_map
from .retrieval import (
    LatentIndex,
    annotate,
    build_index,
    per_keyword_precision_at_p,
    precision_at_p,
    query,
    similarity,
)
from .semantics import TagClusterer
from .text import TagFeaturizer

__version__ = "0.1.0"

__all__ = [
    "DegenerateError",
    "EmptyInputWarning",
    "EmptyVocabularyError",
    "FeatureAssembler",
    "LatentIndex",
    "MultiViewCCA",
    "NumericalError",
    "RandomFourierFeatures",
    "SingularityError",
    "TagClusterer",
    "TagFeaturizer",
    "UndefinedSimilarityError",
    "ValidationError",
    "annotate",
    "assemble_features",
    "build_index",
    "fit_cca",
    "per_keyword_precision_at_p",
    "precision_at_p",
    "query",
    "select_dimension",
    "similarity",
    "sqrt_map",
]
