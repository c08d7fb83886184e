"""Explicit kernel feature maps and assembly of several mapped visual
features into one centered matrix.

Two maps are provided: paired cos/sin random Fourier features for the
Gaussian kernel, and the term-wise square root that realizes the
Bhattacharyya kernel on histograms exactly. Concatenating mapped blocks
realizes the sum (hence, up to a global factor, the average) of the
per-feature kernels.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.spatial.distance import cdist
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import as_dense, as_vector, check_count, check_positive
from .exceptions import ValidationError
from .linalg import PCAModel, pca_apply, pca_fit


class MapKind(str, Enum):
    RFF = "rff"
    SQRT = "sqrt"
    NONE = "none"


def estimate_sigma(X, k=50, sample=2000, seed=0):
    """Mean distance from a row to its ``k``-th nearest other row.

    At most ``sample`` rows are drawn (without replacement) and neighbours
    are searched among the drawn rows. Returns 0.0 for degenerate data;
    callers decide whether that is acceptable.
    """
    X = as_dense(X, "X")
    k = check_count(k, "k", 1)
    n = X.shape[0]
    if n < k + 1:
        raise ValidationError(f"need at least k+1={k + 1} rows, got {n}")
    sample = check_count(sample, "sample", k + 1)
    if n > sample:
        rows = np.sort(np.random.default_rng(seed).choice(n, size=sample, replace=False))
        X = X[rows]
    m = X.shape[0]
    kth = np.empty(m)
    chunk = 512
    for start in range(0, m, chunk):
        D = cdist(X[start:start + chunk], X)
        # exclude self-distance
        D[np.arange(D.shape[0]), np.arange(start, start + D.shape[0])] = np.inf
        kth[start:start + chunk] = np.partition(D, k - 1, axis=1)[:, k - 1]
    return float(kth.mean())


@dataclass(frozen=True)
class RFFMap:
    """Random Fourier feature map. Frequencies are regenerated from the
    seed, so only ``(input_dim, output_dim, sigma, seed)`` need storing."""

    input_dim: int
    output_dim: int
    sigma: float
    seed: int

    @property
    def frequencies(self):
        rng = np.random.default_rng(self.seed)
        return rng.normal(0.0, 1.0 / self.sigma, size=(self.input_dim, self.output_dim // 2))


def rff_fit(input_dim, output_dim, sigma, seed=0):
    input_dim = check_count(input_dim, "input_dim", 1)
    output_dim = check_count(output_dim, "output_dim", 2)
    if output_dim % 2:
        raise ValidationError(f"output_dim must be even, got {output_dim}")
    sigma = check_positive(sigma, "sigma")
    return RFFMap(input_dim, output_dim, sigma, int(seed))


def _rff_rows(rff, X, frequencies=None):
    if X.shape[1] != rff.input_dim:
        raise ValidationError(f"expected {rff.input_dim} input features, got {X.shape[1]}")
    omega = rff.frequencies if frequencies is None else frequencies
    proj = X @ omega
    out = np.empty((X.shape[0], rff.output_dim))
    out[:, 0::2] = np.cos(proj)
    out[:, 1::2] = np.sin(proj)
    out *= np.sqrt(2.0 / rff.output_dim)
    return out


def rff_apply(rff, x):
    """Map one vector (1-D) or a batch of rows (2-D)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        return _rff_rows(rff, as_vector(x)[None, :])[0]
    return _rff_rows(rff, as_dense(x))


def sqrt_map(x):
    """Term-wise square root; input must be nonnegative."""
    x = np.asarray(x, dtype=np.float64)
    x = as_vector(x) if x.ndim == 1 else as_dense(x)
    neg = np.flatnonzero((x < 0).ravel())
    if neg.size:
        idx = np.unravel_index(neg[0], x.shape)
        idx = idx[0] if x.ndim == 1 else tuple(int(i) for i in idx)
        raise ValidationError(f"sqrt_map needs nonnegative input; entry {idx} is {x[idx]}")
    return np.sqrt(x)


class RandomFourierFeatures(TransformerMixin, BaseEstimator):
    """Gaussian-kernel random Fourier features.

    Parameters
    ----------
    n_components : int
        Output dimension (even).
    sigma : float or "auto"
        Kernel bandwidth. ``"auto"`` uses :func:`estimate_sigma`.
    n_neighbors : int
        Neighbour rank used by the automatic bandwidth.
    sigma_sample : int
        Row cap for the automatic bandwidth.
    random_state : int
    """

    def __init__(self, n_components=3000, sigma="auto", n_neighbors=50,
                 sigma_sample=2000, random_state=0):
        self.n_components = n_components
        self.sigma = sigma
        self.n_neighbors = n_neighbors
        self.sigma_sample = sigma_sample
        self.random_state = random_state

    def fit(self, X, y=None):
        X = as_dense(X)
        sigma = self.sigma
        if sigma == "auto":
            k = min(self.n_neighbors, X.shape[0] - 1)
            sigma = estimate_sigma(X, k=k, sample=max(self.sigma_sample, k + 1),
                                   seed=self.random_state)
            if sigma <= 0:
                raise ValidationError(
                    "estimated RFF bandwidth is 0: too many duplicate rows"
                )
        self.sigma_ = float(sigma)
        self.map_ = rff_fit(X.shape[1], self.n_components, sigma, self.random_state)
        self.frequencies_ = self.map_.frequencies
        return self

    def transform(self, X):
        check_is_fitted(self, "map_")
        return _rff_rows(self.map_, as_dense(X), self.frequencies_)


@dataclass
class FeatureBlock:
    kind: MapKind
    pca: PCAModel | None
    dim: int
    rff: RFFMap | None = None
    input_dim: int | None = None


class FeatureAssembler(TransformerMixin, BaseEstimator):
    """Kernel-map, PCA-reduce and concatenate several feature matrices,
    then center every output column.

    ``fit``/``transform`` take a list of matrices (one per visual feature)
    sharing a row count.

    Parameters
    ----------
    map_kinds : sequence of {"rff", "sqrt", "none"}
        Map applied to each block.
    pca_dim : int or None
        Per-block PCA dimension; None keeps the mapped block as is.
    rff_dim : int
        Output dimension for RFF blocks.
    sigma : float or "auto"
    random_state : int
        Seed for RFF frequencies; block ``b`` uses ``random_state + b``.
    """

    def __init__(self, map_kinds=("rff",), pca_dim=500, rff_dim=3000, sigma="auto",
                 n_neighbors=50, sigma_sample=2000, random_state=0):
        self.map_kinds = map_kinds
        self.pca_dim = pca_dim
        self.rff_dim = rff_dim
        self.sigma = sigma
        self.n_neighbors = n_neighbors
        self.sigma_sample = sigma_sample
        self.random_state = random_state

    def _check_blocks(self, blocks):
        if isinstance(blocks, np.ndarray) and blocks.ndim == 2:
            blocks = [blocks]
        blocks = [as_dense(b, f"block {i}") for i, b in enumerate(blocks)]
        if not blocks:
            raise ValidationError("at least one feature block is required")
        rows = {b.shape[0] for b in blocks}
        if len(rows) != 1:
            raise ValidationError(f"feature blocks disagree on row count: {sorted(rows)}")
        return blocks

    def _map(self, block, kind, rff):
        if kind is MapKind.RFF:
            return _rff_rows(rff, block)
        if kind is MapKind.SQRT:
            return sqrt_map(block)
        return block

    def fit(self, X, y=None):
        self.fit_transform(X)
        return self

    def fit_transform(self, X, y=None):
        blocks = self._check_blocks(X)
        kinds = [MapKind(k) for k in self.map_kinds]
        if len(kinds) != len(blocks):
            raise ValidationError(
                f"{len(blocks)} feature blocks but {len(kinds)} map kinds"
            )
        out, fitted = [], []
        for b, (block, kind) in enumerate(zip(blocks, kinds)):
            rff = None
            if kind is MapKind.RFF:
                est = RandomFourierFeatures(self.rff_dim, self.sigma, self.n_neighbors,
                                            self.sigma_sample, self.random_state + b)
                rff = est.fit(block).map_
            mapped = self._map(block, kind, rff)
            pca = None
            if self.pca_dim is not None:
                if self.pca_dim > mapped.shape[1]:
                    raise ValidationError(
                        f"pca_dim={self.pca_dim} exceeds mapped dimension "
                        f"{mapped.shape[1]} of block {b}"
                    )
                pca = pca_fit(mapped, self.pca_dim)
                mapped = pca_apply(pca, mapped)
            fitted.append(FeatureBlock(kind, pca, mapped.shape[1], rff, block.shape[1]))
            out.append(mapped)
        Z = np.hstack(out)
        self.blocks_ = fitted
        self.means_ = Z.mean(axis=0)
        self.n_features_in_ = len(blocks)
        return Z - self.means_

    def transform(self, X):
        check_is_fitted(self, "blocks_")
        blocks = self._check_blocks(X)
        if len(blocks) != len(self.blocks_):
            raise ValidationError(
                f"expected {len(self.blocks_)} feature blocks, got {len(blocks)}"
            )
        out = []
        for b, (block, fb) in enumerate(zip(blocks, self.blocks_)):
            if fb.input_dim is not None and block.shape[1] != fb.input_dim:
                raise ValidationError(
                    f"block {b} has {block.shape[1]} columns, expected {fb.input_dim}"
                )
            mapped = self._map(block, fb.kind, fb.rff)
            if fb.pca is not None:
                mapped = pca_apply(fb.pca, mapped)
            out.append(mapped)
        return np.hstack(out) - self.means_

    @property
    def n_output_features_(self):
        return int(self.means_.shape[0])


def assemble_features(feature_matrices, map_kinds, per_block_pca_dim=500, **kwargs):
    """Functional wrapper around :class:`FeatureAssembler`.

    Returns the centered assembled matrix and the fitted assembler, which
    replays the identical transform on new rows.
    """
    assembler = FeatureAssembler(map_kinds=tuple(map_kinds), pca_dim=per_block_pca_dim, **kwargs)
    Z = assembler.fit_transform(feature_matrices)
    return Z, assembler
