"""Latent-space similarity, exhaustive top-k search, tag transfer and
precision metrics.

The default similarity scales every latent coordinate by the ``p``-th
power of its eigenvalue and takes the normalized correlation (cosine) of
the scaled vectors. Vectors are stored pre-scaled and unit-normalized, so
a dot product with a processed query equals the similarity exactly.
"""

from collections import Counter
from dataclasses import dataclass, field
import warnings

import numpy as np

from ._validation import as_dense, as_vector, check_count
from .exceptions import UndefinedSimilarityError, ValidationError
from .text import TagFeaturizer

METRICS = ("scaled_correlation", "scaled_euclidean", "euclidean", "correlation")


class ShortResultWarning(UserWarning):
    """Fewer results than the requested cutoff were available."""


def eigen_scale(eigenvalues, p):
    return np.asarray(eigenvalues, dtype=np.float64) ** p


def _prepare(Z, scale, metric):
    """Apply the metric's scaling/normalization to latent rows.

    Returns the processed rows and a mask of zero-norm rows.
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
    if metric in ("scaled_correlation", "scaled_euclidean"):
        Z = Z * scale
    if metric in ("scaled_correlation", "correlation"):
        norms = np.linalg.norm(Z, axis=1)
        zero = norms <= 0
        safe = np.where(zero, 1.0, norms)
        return Z / safe[:, None], zero
    return Z, np.zeros(Z.shape[0], dtype=bool)


def _check_metric(metric):
    if metric not in METRICS:
        raise ValidationError(f"unknown metric {metric!r}; choose from {METRICS}")


def similarity(model, query, item, p=4):
    """Eigenvalue-scaled normalized correlation of two single-view inputs.

    ``query`` and ``item`` are ``(view, raw_input)`` pairs; views may
    differ. Raises :class:`UndefinedSimilarityError` if either scaled
    projection is zero.
    """
    (vi, x), (vj, y) = query, item
    zx = model.project(x, vi)
    zy = model.project(y, vj)
    return latent_similarity(zx, zy, model.eigenvalues_, p)


def latent_similarity(zx, zy, eigenvalues, p=4):
    s = eigen_scale(eigenvalues, p)
    a, b = as_vector(zx) * s, as_vector(zy) * s
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na <= 0 or nb <= 0:
        raise UndefinedSimilarityError("zero-norm scaled projection")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


@dataclass(frozen=True)
class RankedResult:
    """Ranked ``(item id, score)`` pairs, best first.

    Scores are similarities for correlation metrics and negated distances
    for Euclidean ones.
    """

    ids: tuple
    scores: np.ndarray

    def __len__(self):
        return len(self.ids)

    def __iter__(self):
        return iter(zip(self.ids, self.scores.tolist()))

    def top(self, p):
        return self.ids[:p]


@dataclass(frozen=True)
class LatentIndex:
    """Exhaustive-search database of processed latent vectors.

    Build with :func:`build_index` or :meth:`from_latent`. Rows whose
    processed vector has zero norm are kept but never returned.
    """

    ids: tuple
    vectors: np.ndarray
    eigenvalues: np.ndarray
    p: float = 4
    metric: str = "scaled_correlation"
    view: object = None
    tags: tuple | None = None
    keywords: tuple | None = None
    excluded: tuple = ()
    _id_rank: np.ndarray = field(default=None, repr=False, compare=False)
    _valid: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if len(self.ids) != self.vectors.shape[0]:
            raise ValidationError("ids and vectors differ in length")
        if len(set(self.ids)) != len(self.ids):
            raise ValidationError("item ids must be unique")
        order = np.argsort(np.asarray(self.ids, dtype=object), kind="stable")
        rank = np.empty(len(self.ids), dtype=np.int64)
        rank[order] = np.arange(len(self.ids))
        object.__setattr__(self, "_id_rank", rank)
        valid = np.ones(len(self.ids), dtype=bool)
        valid[list(self.excluded)] = False
        object.__setattr__(self, "_valid", valid)

    def __len__(self):
        return len(self.ids)

    @property
    def scale(self):
        return eigen_scale(self.eigenvalues, self.p)

    @classmethod
    def from_latent(cls, Z, ids=None, eigenvalues=None, p=4, metric="scaled_correlation",
                    view=None, tags=None, keywords=None):
        _check_metric(metric)
        Z = as_dense(Z, "latent vectors")
        if eigenvalues is None:
            eigenvalues = np.ones(Z.shape[1])
        ids = tuple(range(Z.shape[0])) if ids is None else tuple(ids)
        V, zero = _prepare(Z, eigen_scale(eigenvalues, p), metric)
        if zero.any():
            warnings.warn(f"{int(zero.sum())} item(s) have zero-norm projections and "
                          "are excluded from results", RuntimeWarning, stacklevel=2)
        return cls(ids, V, np.asarray(eigenvalues, dtype=np.float64), p, metric, view,
                   None if tags is None else tuple(tuple(t) for t in tags),
                   None if keywords is None else tuple(frozenset(k) for k in keywords),
                   tuple(int(i) for i in np.flatnonzero(zero)))

    def process(self, Z):
        """Scale/normalize query latents the way stored vectors were."""
        Q, zero = _prepare(Z, self.scale, self.metric)
        if zero.any():
            raise UndefinedSimilarityError("query has a zero-norm scaled projection")
        return Q

    def scores(self, Q):
        """Score matrix (queries x items) for processed queries."""
        if self.metric.endswith("correlation"):
            return Q @ self.vectors.T
        d2 = (np.einsum("ij,ij->i", Q, Q)[:, None] - 2.0 * Q @ self.vectors.T
              + np.einsum("ij,ij->i", self.vectors, self.vectors)[None, :])
        return -np.sqrt(np.maximum(d2, 0.0))

    def search_latent(self, Z, k):
        """Top-``k`` results for each row of raw latent queries ``Z``."""
        Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
        if Z.shape[1] != self.vectors.shape[1]:
            raise ValidationError(
                f"query dimension {Z.shape[1]} != index dimension {self.vectors.shape[1]}"
            )
        k = check_count(k, "k", 1)
        S = self.scores(self.process(Z))
        S[:, ~self._valid] = -np.inf
        n_valid = int(self._valid.sum())
        k_eff = min(k, n_valid)
        out = []
        for s in S:
            if k_eff == 0:
                out.append(RankedResult((), np.empty(0)))
                continue
            kth = np.partition(s, len(s) - k_eff)[len(s) - k_eff]
            cand = np.flatnonzero(s >= kth)
            order = cand[np.lexsort((self._id_rank[cand], -s[cand]))][:k_eff]
            out.append(RankedResult(tuple(self.ids[i] for i in order), s[order].copy()))
        return out

    def positions(self, result):
        lookup = {i: n for n, i in enumerate(self.ids)}
        return [lookup[i] for i in result.ids]


def build_index(model, view, items, ids=None, tags=None, keywords=None, p=4,
                metric="scaled_correlation"):
    """Project raw single-view items and store them for search."""
    Z = model.transform_view(items, view)
    return LatentIndex.from_latent(Z, ids, model.eigenvalues_, p, metric,
                                   model.view_index(view), tags, keywords)


def query(index, model, view, raw_query, k=50, tag_weights=None):
    """Exact top-``k`` search for one raw query observed in ``view``.

    ``tag_weights`` multiplies the named tag entries of a tag query before
    compression. A tag query with no in-vocabulary tags is rejected.
    """
    i = model.view_index(view)
    pre = model.preprocessors_[i]
    if isinstance(pre, TagFeaturizer):
        T = pre.tag_matrix([raw_query], tag_weights)
        if T.empty_rows:
            raise UndefinedSimilarityError("tag query has no in-vocabulary tags")
        Z = model.transform_view(T.matrix, i)
    else:
        if tag_weights:
            raise ValidationError("tag_weights only apply to tag-view queries")
        Z = model.project(raw_query, i)[None, :]
    return index.search_latent(Z, k)[0]


def count_tags(neighbor_tags, n_tags):
    counts = Counter()
    for tags in neighbor_tags:
        counts.update(set(tags))
    ranked = sorted(counts.items(), key=lambda tc: (-tc[1], tc[0]))
    return [t for t, _ in ranked[:n_tags]]


def annotate_latent(index, z, n_neighbors=50, n_tags=5):
    """Tags for one latent query: the ``n_tags`` most frequent tags among
    its ``n_neighbors`` nearest indexed items (ties alphabetical)."""
    if len(index) == 0:
        raise ValidationError("cannot annotate against an empty index")
    if index.tags is None:
        raise ValidationError("index items carry no tag metadata")
    n_neighbors = check_count(n_neighbors, "n_neighbors", 1)
    n_tags = check_count(n_tags, "n_tags", 1)
    res = index.search_latent(z, n_neighbors)[0]
    pos = index.positions(res)
    return count_tags((index.tags[i] for i in pos), n_tags)


def annotate(index, model, query_features, view=0, n_neighbors=50, n_tags=5):
    """Transfer tags to a raw query (an image, by default view 0)."""
    if len(index) == 0:
        raise ValidationError("cannot annotate against an empty index")
    z = model.project(query_features, view)
    return annotate_latent(index, z, n_neighbors, n_tags)


def precision_at_p(result, relevant, p):
    """Fraction of the top ``p`` ids that are relevant. Short results are
    scored over the available length (with a warning)."""
    p = check_count(p, "p", 1)
    top = list(result.ids[:p]) if isinstance(result, RankedResult) else list(result)[:p]
    if len(top) < p:
        warnings.warn(f"only {len(top)} results for cutoff {p}", ShortResultWarning,
                      stacklevel=2)
    if not top:
        return 0.0
    relevant = set(relevant)
    return sum(1 for i in top if i in relevant) / len(top)


def per_keyword_precision_at_p(result, query_keywords, item_keywords, p):
    """``a / (p q)``: keyword hits ``a`` over the top ``p`` items for a query
    with ``q`` keywords."""
    p = check_count(p, "p", 1)
    q_kw = set(query_keywords)
    if not q_kw:
        raise ValidationError("query has no keywords (q = 0)")
    top = list(result.ids[:p]) if isinstance(result, RankedResult) else list(result)[:p]
    if len(top) < p:
        warnings.warn(f"only {len(top)} results for cutoff {p}", ShortResultWarning,
                      stacklevel=2)
    a = sum(len(q_kw & set(item_keywords.get(i, ()))) for i in top)
    return a / (p * len(q_kw))
