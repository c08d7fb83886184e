"""Tag view: vocabulary, binary tag matrix, tf-idf and SVD compression."""

from collections import Counter
from collections.abc import Mapping
from dataclasses import dataclass, field
import warnings

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import as_dense, check_count
from .exceptions import EmptyInputWarning, EmptyVocabularyError, ValidationError
from .linalg import truncated_svd


@dataclass(frozen=True)
class TagVocabulary:
    terms: tuple
    document_frequencies: tuple
    index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "index", {t: i for i, t in enumerate(self.terms)})
        if len(self.index) != len(self.terms):
            raise ValidationError("vocabulary terms must be unique")

    def __len__(self):
        return len(self.terms)

    def __contains__(self, term):
        return term in self.index


@dataclass(frozen=True)
class TagMatrix:
    """Sparse n x t tag matrix plus the rows that ended up empty.

    ``oov_counts[i]`` is the number of distinct out-of-vocabulary tags
    dropped from document ``i``.
    """

    matrix: sp.csr_matrix
    binary: bool = True
    empty_rows: tuple = ()
    oov_counts: tuple = ()


@dataclass(frozen=True)
class TagCompression:
    basis: np.ndarray  # (t, d), orthonormal columns (right singular vectors)
    singular_values: np.ndarray

    def project(self, T):
        return np.asarray(T @ self.basis)


def read_corpus(path):
    """One document per line, whitespace-separated tags (UTF-8)."""
    with open(path, encoding="utf-8") as fh:
        return [line.split() for line in fh.read().splitlines()]


def read_stopwords(path):
    with open(path, encoding="utf-8") as fh:
        return {w.strip() for w in fh if w.strip()}


def build_vocabulary(documents, min_count=1, stopwords=(), max_terms=None):
    """Terms with document frequency >= ``min_count``, minus stopwords,
    ordered by descending frequency then lexicographically."""
    min_count = check_count(min_count, "min_count", 1)
    stop = set(stopwords)
    df = Counter()
    for doc in documents:
        df.update(set(doc) - stop)
    kept = sorted(((t, c) for t, c in df.items() if c >= min_count),
                  key=lambda tc: (-tc[1], tc[0]))
    if max_terms is not None:
        kept = kept[:max_terms]
    if not kept:
        raise EmptyVocabularyError(
            f"no tag reaches min_count={min_count} after stop-word removal"
        )
    return TagVocabulary(tuple(t for t, _ in kept), tuple(c for _, c in kept))


def _parse_doc(doc):
    """A document is an iterable of tags or a mapping tag -> weight."""
    if isinstance(doc, str):
        raise ValidationError("a document must be a list of tags, not a string")
    if isinstance(doc, Mapping):
        return dict(doc), False
    return {t: 1.0 for t in doc}, True


def vectorize(documents, vocab, tag_weights=None):
    """Build the n x t tag matrix.

    Plain tag lists give binary rows (duplicates stored once).
    A mapping ``{tag: weight}`` or a ``tag_weights`` override gives
    weighted rows. Out-of-vocabulary tags are dropped and counted.
    """
    if len(vocab) == 0:
        raise EmptyVocabularyError("empty vocabulary")
    rows, cols, vals, empty, oov = [], [], [], [], []
    binary = tag_weights is None
    for i, doc in enumerate(documents):
        weights, plain = _parse_doc(doc)
        binary = binary and plain
        if tag_weights:
            for t, w in tag_weights.items():
                if t in weights:
                    weights[t] = weights[t] * float(w)
        dropped = 0
        n_before = len(rows)
        for t, w in weights.items():
            j = vocab.index.get(t)
            if j is None:
                dropped += 1
                continue
            w = float(w)
            if not np.isfinite(w) or w < 0:
                raise ValidationError(f"tag weight for {t!r} must be finite and >= 0, got {w}")
            if w == 0:
                continue
            rows.append(i)
            cols.append(j)
            vals.append(w)
        if len(rows) == n_before:
            empty.append(i)
        oov.append(dropped)
    n = len(oov)
    M = sp.csr_matrix((vals, (rows, cols)), shape=(n, len(vocab)), dtype=np.float64)
    M.sort_indices()
    return TagMatrix(M, binary, tuple(empty), tuple(oov))


def idf_weights(T):
    """``ln(n / df)`` per column; columns with df = 0 get weight 0."""
    M = sp.csr_matrix(T.matrix if isinstance(T, TagMatrix) else T)
    n = M.shape[0]
    df = np.bincount(M.indices, minlength=M.shape[1]).astype(np.float64)
    idf = np.zeros_like(df)
    nz = df > 0
    idf[nz] = np.log(n / df[nz])
    return idf


def tfidf_weight(T, idf=None):
    """Binary tf times ``ln(n / df)``. Explicit zeros are dropped."""
    if not T.binary:
        raise ValidationError("tf-idf weighting expects a binary tag matrix")
    if idf is None:
        idf = idf_weights(T)
    W = sp.csr_matrix(T.matrix @ sp.diags(idf))
    W.eliminate_zeros()
    empty = tuple(int(i) for i in np.flatnonzero(np.diff(W.indptr) == 0))
    return TagMatrix(W, False, empty, T.oov_counts)


def compress_tags(T, d=500, seed=0, oversampling=10, power_iters=2):
    """Top-``d`` columns of ``U S`` from a truncated SVD of the (uncentered)
    tag matrix. New rows project as ``q @ V`` which reproduces ``U S`` on
    training rows."""
    M = T.matrix if isinstance(T, TagMatrix) else sp.csr_matrix(T)
    d = check_count(d, "d", 1, min(M.shape))
    U, S, Vt = truncated_svd(M, d, oversampling=oversampling, power_iters=power_iters, seed=seed)
    return U * S, TagCompression(basis=np.ascontiguousarray(Vt.T), singular_values=S)


class TagFeaturizer(TransformerMixin, BaseEstimator):
    """Documents to compressed tag features.

    ``fit`` builds the vocabulary, the (optionally tf-idf weighted) tag
    matrix and its SVD compression. ``transform`` accepts tag lists or
    ``{tag: weight}`` mappings.

    Parameters
    ----------
    n_components : int
        Compressed dimension (capped by the matrix rank bound).
    min_count : int
    stopwords : iterable of str
    max_terms : int or None
        Keep only the most frequent terms.
    tfidf : bool
    random_state : int
    """

    def __init__(self, n_components=500, min_count=1, stopwords=(), max_terms=None,
                 tfidf=False, random_state=0):
        self.n_components = n_components
        self.min_count = min_count
        self.stopwords = stopwords
        self.max_terms = max_terms
        self.tfidf = tfidf
        self.random_state = random_state

    def fit(self, X, y=None):
        self.fit_transform(X)
        return self

    def fit_transform(self, X, y=None):
        docs = list(X)
        self.vocabulary_ = build_vocabulary(docs, self.min_count, self.stopwords, self.max_terms)
        T = vectorize(docs, self.vocabulary_)
        if self.tfidf:
            self.idf_ = idf_weights(T)
            T = tfidf_weight(T, self.idf_)
        else:
            self.idf_ = None
        d = min(self.n_components, *T.matrix.shape)
        feats, self.compression_ = compress_tags(T, d, seed=self.random_state)
        return feats

    def tag_matrix(self, X, tag_weights=None):
        """Vectorize (and weight) documents without compressing."""
        check_is_fitted(self, "compression_")
        T = vectorize(list(X), self.vocabulary_, tag_weights)
        if self.idf_ is not None:
            M = sp.csr_matrix(T.matrix @ sp.diags(self.idf_))
            M.eliminate_zeros()
            empty = tuple(int(i) for i in np.flatnonzero(np.diff(M.indptr) == 0))
            T = TagMatrix(M, False, empty, T.oov_counts)
        return T

    def transform(self, X, tag_weights=None):
        if sp.issparse(X) or isinstance(X, np.ndarray):
            M = X if sp.issparse(X) else as_dense(X)
            if M.shape[1] != self.compression_.basis.shape[0]:
                raise ValidationError(
                    f"tag matrix has {M.shape[1]} columns, vocabulary has "
                    f"{self.compression_.basis.shape[0]}"
                )
            return self.compression_.project(M)
        T = self.tag_matrix(X, tag_weights)
        if T.empty_rows:
            warnings.warn(
                f"{len(T.empty_rows)} document(s) have no in-vocabulary tags",
                EmptyInputWarning,
                stacklevel=2,
            )
        return self.compression_.project(T.matrix)
