"""Third-view construction: hard cluster indicators from tags (k-means,
normalized cut, NMF, pLSA) or multi-hot keyword matrices."""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator, ClusterMixin

from ._validation import as_dense, as_sparse, check_count
from .exceptions import ValidationError
from .linalg import truncated_svd


@dataclass(frozen=True)
class ClusterAssignment:
    labels: np.ndarray
    n_clusters: int
    method: str
    seed: int
    report: dict = field(default_factory=dict, compare=False)
    trace: tuple = field(default=(), compare=False)

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.size and (labels.min() < 0 or labels.max() >= self.n_clusters):
            raise ValidationError("cluster labels must lie in [0, n_clusters)")


@dataclass(frozen=True)
class IndicatorMatrix:
    matrix: np.ndarray
    kind: str = "hard"  # "hard" | "multi" | "soft"
    empty_rows: tuple = ()


def _child_seeds(seed, n):
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


def _row_sq_norms(X):
    if sp.issparse(X):
        return np.asarray(X.multiply(X).sum(axis=1)).ravel()
    return np.einsum("ij,ij->i", X, X)


def _sq_dists(X, x_sq, centers):
    cross = np.asarray(X @ centers.T)
    d = x_sq[:, None] - 2.0 * cross + np.einsum("ij,ij->i", centers, centers)[None, :]
    return np.maximum(d, 0.0)


def _kmeans_pp(X, x_sq, c, rng):
    n = X.shape[0]
    first = rng.integers(n)
    idx = [first]
    d2 = _sq_dists(X, x_sq, _rows(X, [first]))[:, 0]
    for _ in range(1, c):
        total = d2.sum()
        if total <= 0:
            # all remaining points coincide with chosen centers
            nxt = int(rng.integers(n))
        else:
            nxt = int(rng.choice(n, p=d2 / total))
        idx.append(nxt)
        d2 = np.minimum(d2, _sq_dists(X, x_sq, _rows(X, [nxt]))[:, 0])
    return _rows(X, idx)


def _rows(X, idx):
    R = X[idx]
    return R.toarray() if sp.issparse(R) else np.array(R, dtype=np.float64)


def _lloyd(X, x_sq, centers, max_iter, tol):
    n, c = X.shape[0], centers.shape[0]
    labels = None
    reseeded = 0
    for _ in range(max_iter):
        d2 = _sq_dists(X, x_sq, centers)
        new_labels = np.argmin(d2, axis=1)
        closest = d2[np.arange(n), new_labels]
        counts = np.bincount(new_labels, minlength=c)
        for j in np.flatnonzero(counts == 0):
            # re-seed from the point farthest from its center
            far = int(np.argmax(closest))
            if closest[far] <= 0:
                break
            old = new_labels[far]
            counts[old] -= 1
            new_labels[far] = j
            counts[j] = 1
            closest[far] = 0.0
            reseeded += 1
        ind = sp.csr_matrix((np.ones(n), (new_labels, np.arange(n))), shape=(c, n))
        sums = ind @ X
        sums = sums.toarray() if sp.issparse(sums) else np.asarray(sums)
        nonempty = counts > 0
        new_centers = centers.copy()
        new_centers[nonempty] = sums[nonempty] / counts[nonempty, None]
        shift = np.sum((new_centers - centers) ** 2)
        centers = new_centers
        if labels is not None and np.array_equal(labels, new_labels) and shift <= tol:
            labels = new_labels
            break
        labels = new_labels
    d2 = _sq_dists(X, x_sq, centers)
    labels = np.argmin(d2, axis=1)
    inertia = float(d2[np.arange(n), labels].sum())
    return labels, centers, inertia, reseeded


def kmeans(X, c, restarts=10, seed=0, max_iter=300, tol=1e-10):
    """Lloyd's algorithm with k-means++ seeding; best restart by
    within-cluster sum of squares. Accepts dense or sparse ``X``."""
    X = as_sparse(X) if sp.issparse(X) else as_dense(X)
    n = X.shape[0]
    c = check_count(c, "c", 1)
    if c > n:
        raise ValidationError(f"c={c} exceeds the number of items n={n}")
    restarts = check_count(restarts, "restarts", 1)
    x_sq = _row_sq_norms(X)
    best = None
    for s in _child_seeds(seed, restarts):
        rng = np.random.default_rng(s)
        centers = _kmeans_pp(X, x_sq, c, rng)
        run = _lloyd(X, x_sq, centers, max_iter, tol)
        if best is None or run[2] < best[2]:
            best = run
    labels, centers, inertia, reseeded = best
    counts = np.bincount(labels, minlength=c)
    report = {
        "inertia": inertia,
        "empty_clusters": [int(j) for j in np.flatnonzero(counts == 0)],
        "reseeded": reseeded,
    }
    return ClusterAssignment(labels, c, "kmeans", seed, report)


def _degrees(T):
    """``diag(T (T^T 1))``: each row's total co-occurrence weight."""
    col = np.asarray(T.sum(axis=0)).ravel()
    return np.asarray(T @ col).ravel()


def _assign_excluded(T, excluded, kept, kept_labels):
    """Give each excluded row the label of its nearest kept row (Euclidean,
    raw tag space; ties to the lowest index)."""
    if not len(excluded):
        return {}
    Tk = T[kept]
    k_sq = _row_sq_norms(Tk)
    out = {}
    for i in excluded:
        row = T[i]
        d = k_sq - 2.0 * np.asarray(Tk @ row.T.toarray()).ravel() + row.multiply(row).sum()
        out[int(i)] = int(kept_labels[int(np.argmin(d))])
    return out


def normalized_cut_cluster(T, c, seed=0, restarts=10, rank_tol=1e-10,
                           return_embedding=False):
    """Normalized-cut clustering of tag rows.

    Takes the top ``c`` left singular vectors of ``D^{-1/2} T``, drops those
    whose singular value is negligible, normalizes each row to unit length
    and runs k-means on the rows. Rows with zero degree are excluded and
    assigned afterwards (see report).
    """
    T = as_sparse(T, "T", nonnegative=True)
    c = check_count(c, "c", 2)
    deg = _degrees(T)
    kept = np.flatnonzero(deg > 0)
    excluded = np.flatnonzero(deg <= 0)
    if kept.size < c:
        raise ValidationError(f"only {kept.size} rows with positive degree for c={c} clusters")
    Tk = T[kept]
    Xn = sp.diags(1.0 / np.sqrt(deg[kept])) @ Tk
    k = min(c, *Xn.shape)
    U, S, _ = truncated_svd(Xn, k, seed=seed)
    keep = S > rank_tol * S[0]
    U = U[:, keep]
    norms = np.linalg.norm(U, axis=1)
    U = U / norms[:, None]
    inner = kmeans(U, c, restarts=restarts, seed=seed)
    labels = np.empty(T.shape[0], dtype=np.int64)
    labels[kept] = inner.labels
    post = _assign_excluded(T, excluded, kept, inner.labels)
    for i, lab in post.items():
        labels[i] = lab
    counts = np.bincount(labels, minlength=c)
    report = {
        "zero_degree_rows": [int(i) for i in excluded],
        "empty_clusters": [int(j) for j in np.flatnonzero(counts == 0)],
        "embedding_rank": int(keep.sum()),
    }
    result = ClusterAssignment(labels, c, "nc", seed, report)
    if return_embedding:
        return result, U
    return result


def nmf_objective(X, W, H):
    """``||X - W H||_F^2`` via the expanded form (X may be sparse)."""
    xx = X.multiply(X).sum() if sp.issparse(X) else float(np.sum(X * X))
    XHt = np.asarray(X @ H.T)
    cross = float(np.sum(W * XHt))
    quad = float(np.sum((W.T @ W) * (H @ H.T)))
    return float(xx - 2.0 * cross + quad)


def nmf(X, c, max_iters=200, seed=0, tiny=1e-300):
    """Lee-Seung multiplicative updates for the Frobenius objective.

    Returns ``(W, H, trace)`` with ``X ~ W H``, W n x c, H c x t, and the
    objective recorded before the first and after every iteration.
    """
    rng = np.random.default_rng(seed)
    n, t = X.shape
    scale = np.sqrt(max(float(X.mean()), 1e-12) / c)
    W = rng.uniform(0.0, 1.0, (n, c)) * scale + tiny
    H = rng.uniform(0.0, 1.0, (c, t)) * scale + tiny
    trace = [nmf_objective(X, W, H)]
    for _ in range(max_iters):
        H *= np.asarray(W.T @ X) / np.maximum(W.T @ W @ H, tiny)
        W *= np.asarray(X @ H.T) / np.maximum(W @ (H @ H.T), tiny)
        trace.append(nmf_objective(X, W, H))
    return W, H, trace


def nmf_cluster(T, c, max_iters=200, seed=0, restarts=1):
    """NMF clustering on ``D^{-1/2} T``.

    Document weights are rescaled topic-wise by ``1 / ||topic term row||``
    and each row is assigned to its largest entry (ties to the lowest
    index). With several restarts the lowest final objective wins.
    """
    T = as_sparse(T, "T", nonnegative=True)
    c = check_count(c, "c", 1)
    deg = _degrees(T)
    inv = np.zeros_like(deg)
    inv[deg > 0] = 1.0 / np.sqrt(deg[deg > 0])
    X = sp.csr_matrix(sp.diags(inv) @ T)
    best = None
    for s in _child_seeds(seed, check_count(restarts, "restarts", 1)):
        W, H, trace = nmf(X, c, max_iters, s)
        if best is None or trace[-1] < best[2][-1]:
            best = (W, H, trace)
    W, H, trace = best
    norms = np.sqrt(np.sum(H * H, axis=1))
    norms[norms == 0] = 1.0
    U = W / norms[None, :]
    labels = np.argmax(U, axis=1)
    counts = np.bincount(labels, minlength=c)
    report = {
        "objective": trace[-1],
        "empty_clusters": [int(j) for j in np.flatnonzero(counts == 0)],
        "zero_degree_rows": [int(i) for i in np.flatnonzero(deg <= 0)],
    }
    return ClusterAssignment(labels, c, "nmf", seed, report, tuple(trace))


def plsa(N, c, max_iters=200, seed=0):
    """EM for pLSA on a document-word count matrix without empty rows.

    Returns ``(doc_topic, topic_word, trace)`` where ``trace`` holds the
    log-likelihood before the first and after every EM step.
    """
    rng = np.random.default_rng(seed)
    n, t = N.shape
    pi = rng.uniform(0.5, 1.5, (n, c))
    pi /= pi.sum(axis=1, keepdims=True)
    theta = rng.uniform(0.5, 1.5, (c, t))
    theta /= theta.sum(axis=1, keepdims=True)
    rows = np.repeat(np.arange(n), np.diff(N.indptr))
    cols = N.indices
    counts = N.data

    def loglik(pi, theta):
        p = np.einsum("ij,ij->i", pi[rows], theta[:, cols].T)
        return float(np.sum(counts * np.log(p))), p

    ll, p = loglik(pi, theta)
    trace = [ll]
    for _ in range(max_iters):
        R = sp.csr_matrix((counts / p, N.indices, N.indptr), shape=N.shape)
        new_theta = theta * np.asarray((R.T @ pi).T)
        new_pi = pi * np.asarray(R @ theta.T)
        theta = new_theta / np.maximum(new_theta.sum(axis=1, keepdims=True), 1e-300)
        pi = new_pi / new_pi.sum(axis=1, keepdims=True)
        ll, p = loglik(pi, theta)
        trace.append(ll)
    return pi, theta, trace


def plsa_cluster(T, c, max_iters=200, seed=0, restarts=5, return_posteriors=False):
    """pLSA hard clustering: each document goes to its most probable topic.

    The best of ``restarts`` EM runs by final log-likelihood is kept.
    Empty documents receive the globally most probable topic.
    """
    T = as_sparse(T, "T", nonnegative=True)
    c = check_count(c, "c", 1)
    restarts = check_count(restarts, "restarts", 1)
    lengths = np.asarray(T.sum(axis=1)).ravel()
    kept = np.flatnonzero(lengths > 0)
    if kept.size == 0:
        raise ValidationError("every document is empty")
    N = sp.csr_matrix(T[kept])
    best = None
    for s in _child_seeds(seed, restarts):
        run = plsa(N, c, max_iters, s)
        if best is None or run[2][-1] > best[2][-1]:
            best = run
    pi, theta, trace = best
    posteriors = np.zeros((T.shape[0], c))
    posteriors[kept] = pi
    topic_mass = lengths[kept] @ pi
    global_topic = int(np.argmax(topic_mass))
    empty = np.flatnonzero(lengths <= 0)
    posteriors[empty, global_topic] = 1.0
    labels = np.argmax(posteriors, axis=1)
    counts = np.bincount(labels, minlength=c)
    report = {
        "log_likelihood": trace[-1],
        "empty_documents": [int(i) for i in empty],
        "empty_clusters": [int(j) for j in np.flatnonzero(counts == 0)],
    }
    result = ClusterAssignment(labels, c, "plsa", seed, report, tuple(trace))
    if return_posteriors:
        return result, posteriors
    return result


def to_indicator(assignment):
    labels = np.asarray(assignment.labels)
    C = np.zeros((labels.size, assignment.n_clusters))
    C[np.arange(labels.size), labels] = 1.0
    return IndicatorMatrix(C, "hard")


def soft_indicator(posteriors):
    P = as_dense(posteriors, "posteriors")
    if P.min() < 0 or P.max() > 1 or not np.allclose(P.sum(axis=1), 1.0, atol=1e-8):
        raise ValidationError("soft indicator rows must be probabilities summing to 1")
    return IndicatorMatrix(P, "soft")


def supervised_indicator(item_keywords, keyword_vocab):
    """Multi-hot keyword matrix K. Unknown keywords are an error."""
    index = {k: j for j, k in enumerate(keyword_vocab)}
    if len(index) != len(keyword_vocab):
        raise ValidationError("keyword vocabulary has duplicates")
    items = list(item_keywords)
    K = np.zeros((len(items), len(index)))
    empty = []
    for i, kws in enumerate(items):
        kws = set(kws)
        if not kws:
            empty.append(i)
        for kw in kws:
            j = index.get(kw)
            if j is None:
                raise ValidationError(f"item {i}: keyword {kw!r} is not in the vocabulary")
            K[i, j] = 1.0
    return IndicatorMatrix(K, "multi", tuple(empty))


CLUSTER_METHODS = ("kmeans", "nc", "nmf", "plsa")


class TagClusterer(ClusterMixin, BaseEstimator):
    """Estimator front end for the tag clustering methods.

    Parameters
    ----------
    method : {"kmeans", "nc", "nmf", "plsa"}
    n_clusters : int
    restarts : int or None
        Method default when None (10 for k-means/NC, 5 for pLSA, 1 for NMF).
    max_iters : int
        EM / multiplicative-update budget for pLSA and NMF.
    random_state : int
    """

    def __init__(self, method="nc", n_clusters=20, restarts=None, max_iters=200, random_state=0):
        self.method = method
        self.n_clusters = n_clusters
        self.restarts = restarts
        self.max_iters = max_iters
        self.random_state = random_state

    def fit(self, X, y=None):
        seed = self.random_state
        if self.method == "kmeans":
            res = kmeans(X, self.n_clusters, self.restarts or 10, seed)
        elif self.method == "nc":
            res = normalized_cut_cluster(X, self.n_clusters, seed, self.restarts or 10)
        elif self.method == "nmf":
            res = nmf_cluster(X, self.n_clusters, self.max_iters, seed, self.restarts or 1)
        elif self.method == "plsa":
            res = plsa_cluster(X, self.n_clusters, self.max_iters, seed, self.restarts or 5)
        else:
            raise ValidationError(f"unknown clustering method {self.method!r}")
        self.assignment_ = res
        self.labels_ = res.labels
        return self

    def indicator(self):
        return to_indicator(self.assignment_).matrix
