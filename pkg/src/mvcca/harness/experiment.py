"""Train / validate / test protocol over a roster of embedding models.

Model names combine view letters: ``V`` (visual), ``T`` (tags), ``K``
(supervised keywords) and ``C`` (tag clusters, optionally ``C:method``
with method in kmeans, nc, nmf, plsa or visual-kmeans). ``V`` alone is
the visual-only baseline and ``SL`` the structural-learning baseline.

Tasks: ``I2I`` and ``T2I`` (precision at p against the database split),
``K2I`` (each keyword queried once) and ``I2T`` (tag transfer; the share
of queries whose transferred tags contain a ground-truth keyword).
"""

from dataclasses import asdict, dataclass, field
import json
import time
import warnings

import numpy as np

from ..cca import DEFAULT_CANDIDATE_DIMS, MultiViewCCA, select_dimension
from ..exceptions import EmptyInputWarning, ValidationError
from ..kernel_maps import FeatureAssembler
from ..retrieval import LatentIndex, count_tags, per_keyword_precision_at_p, precision_at_p
from ..semantics import CLUSTER_METHODS, TagClusterer, kmeans, supervised_indicator, to_indicator
from ..text import TagFeaturizer
from .baselines import StructuralLearning

TASKS = ("I2I", "T2I", "K2I", "I2T")
DEFAULT_ROSTER = ("V", "SL", "V+T", "V+K", "V+T+K", "V+C", "V+T+C")
CLUSTER_SOURCES = CLUSTER_METHODS + ("visual-kmeans",)
METRIC_LABELS = {"euclidean": "Eucl", "scaled_euclidean": "scale+Eucl",
                 "scaled_correlation": "scale+corr"}


@dataclass(frozen=True)
class ExperimentConfig:
    precision_at: int = 50
    power: float = 4.0
    epsilon: float = 1e-4
    candidate_dims: tuple = DEFAULT_CANDIDATE_DIMS
    rff_dim: int = 3000
    pca_dim: int | None = 500
    tag_dim: int = 500
    min_count: int = 1
    max_terms: int | None = None
    tfidf: bool = False
    sigma_sample: int = 2000
    rff_sigma: float | str = "auto"
    n_clusters: tuple = ()
    cluster_method: str = "nc"
    cluster_restarts: int | None = None
    cluster_iters: int = 200
    sl_rho: float = 1.0
    n_neighbors: int = 50
    n_tags: int = 5
    ablation_models: tuple = ("V+T", "V+T+C")
    ablation_tasks: tuple = ("I2I", "T2I")
    selection_tasks: tuple = ("I2I", "T2I")

    @classmethod
    def from_dict(cls, d):
        known = cls.__dataclass_fields__
        unknown = set(d) - set(known)
        if unknown:
            raise ValidationError(f"unknown experiment options: {sorted(unknown)}")
        d = dict(d)
        for key in ("candidate_dims", "n_clusters", "ablation_models", "ablation_tasks",
                    "selection_tasks"):
            if key in d and d[key] is not None:
                v = d[key]
                d[key] = tuple(v) if isinstance(v, (list, tuple)) else (v,)
        return cls(**d)


@dataclass
class ExperimentReport:
    dataset: str
    config: dict
    roster: list
    tasks: list
    seeds: list
    results: dict
    per_seed: dict
    selected_d: dict
    clusters: dict
    ablation: dict
    notes: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    def to_dict(self):
        d = asdict(self)
        d.pop("timings")
        return d

    def to_json(self):
        return json.dumps(_clean(self.to_dict()), indent=2, sort_keys=True) + "\n"

    def table(self):
        """Plain-text precision table (models x tasks), in percent."""
        head = "model".ljust(22) + "".join(t.rjust(9) for t in self.tasks)
        lines = [head]
        for m in self.roster:
            row = m.ljust(22)
            for t in self.tasks:
                v = self.results[m].get(t)
                row += (f"{100 * v:9.2f}" if v is not None else "       --")
            lines.append(row)
        return "\n".join(lines)


def reference_config(**overrides):
    """Desk-scale settings used with the default :class:`SynthConfig`:
    tf-idf tags, reduced map/PCA/compression sizes and d up to 128."""
    base = dict(tfidf=True, rff_dim=1000, pca_dim=100, tag_dim=100,
                candidate_dims=(16, 32, 64, 128))
    base.update(overrides)
    return ExperimentConfig.from_dict(base)


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return round(float(obj), 10)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def parse_model(name):
    """``"V+T+C:nmf"`` -> (("V", "T", "C"), "nmf")."""
    if name in ("V", "SL"):
        return (name,), None
    base, _, method = name.partition(":")
    views = tuple(base.split("+"))
    if views[0] != "V" or len(views) < 2 or len(set(views)) != len(views):
        raise ValidationError(f"model {name!r} must start with V and combine distinct views")
    for v in views:
        if v not in ("V", "T", "K", "C"):
            raise ValidationError(f"unknown view {v!r} in model {name!r}")
    if method and "C" not in views:
        raise ValidationError(f"model {name!r} names a cluster method but has no C view")
    if method and method not in CLUSTER_SOURCES:
        raise ValidationError(f"unknown cluster method {method!r}")
    return views, (method or None) if "C" in views else None


class _Context:
    """Featurized splits shared by every model of one seed."""

    def __init__(self, ds, cfg, seed, assembler=None, tagger=None):
        self.ds, self.cfg, self.seed = ds, cfg, seed
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", EmptyInputWarning)
            if assembler is None:
                self.assembler = FeatureAssembler(
                    map_kinds=ds.map_kinds, pca_dim=cfg.pca_dim, rff_dim=cfg.rff_dim,
                    sigma=cfg.rff_sigma, sigma_sample=cfg.sigma_sample, random_state=seed,
                )
                self.V = {"train": self.assembler.fit_transform(ds.visual_rows("train"))}
            else:
                self.assembler = assembler
                self.V = {"train": assembler.transform(ds.visual_rows("train"))}
            for s in ("database", "validation", "test"):
                self.V[s] = self.assembler.transform(ds.visual_rows(s))
            if tagger is None:
                self.tagger = TagFeaturizer(cfg.tag_dim, cfg.min_count, ds.stopwords,
                                            cfg.max_terms, cfg.tfidf, random_state=seed)
                self.T = {"train": self.tagger.fit_transform(ds.tag_rows("train"))}
            else:
                self.tagger = tagger
                self.T = {"train": tagger.transform(ds.tag_rows("train"))}
            self.tag_matrix = {"train": self.tagger.tag_matrix(ds.tag_rows("train"))}
            for s in ("validation", "test"):
                self.tag_matrix[s] = self.tagger.tag_matrix(ds.tag_rows(s))
                self.T[s] = self.tagger.transform(self.tag_matrix[s].matrix)
        self.kw_vocab = ds.keyword_vocab()
        if ds.keywords is not None:
            train_kw = [ds.keywords[i] for i in ds.rows("train")]
            self.K = supervised_indicator(train_kw, self.kw_vocab).matrix
        else:
            self.K = None
        self.db_ids = ds.id_rows("database")
        self._relevance()
        self.clusters = {}

    def _relevance(self):
        ds = self.ds
        self.db_label = {}
        if ds.labels is not None:
            for i in ds.rows("database"):
                self.db_label.setdefault(ds.labels[i], set()).add(ds.ids[i])
        self.db_keywords = None
        if ds.keywords is not None:
            self.db_keywords = {ds.ids[i]: ds.keywords[i] for i in ds.rows("database")}

    def query_precision(self, result, row):
        p = self.cfg.precision_at
        if self.ds.labels is not None:
            return precision_at_p(result, self.db_label.get(self.ds.labels[row], ()), p)
        return per_keyword_precision_at_p(result, self.ds.keywords[row], self.db_keywords, p)

    def keyword_precision(self, result, kw):
        p = self.cfg.precision_at
        if self.ds.labels is not None:
            return precision_at_p(result, self.db_label.get(kw, ()), p)
        return per_keyword_precision_at_p(result, {kw}, self.db_keywords, p)

    def cluster_indicator(self, method, c):
        key = (method, c)
        if key not in self.clusters:
            cfg = self.cfg
            if method == "visual-kmeans":
                res = kmeans(self.V["train"], c, cfg.cluster_restarts or 10, self.seed)
            else:
                res = TagClusterer(method, c, cfg.cluster_restarts, cfg.cluster_iters,
                                   self.seed).fit(self.tag_matrix["train"].matrix).assignment_
            self.clusters[key] = res
        return to_indicator(self.clusters[key]).matrix


class _Embedding:
    """Uniform view -> latent access for CCA models and the baselines."""

    def __init__(self, views, model=None, sl=None):
        self.views, self.model, self.sl = views, model, sl

    @property
    def eigenvalues(self):
        return None if self.model is None else self.model.eigenvalues_

    def latent(self, letter, Z):
        if self.model is None:
            return Z if self.sl is None else self.sl.transform(Z)
        i = self.views.index(letter)
        return (Z - self.model.means_[i]) @ self.model.projections_[i]

    def truncate(self, d):
        if self.model is not None:
            return _Embedding(self.views, self.model.truncate(d))
        return _Embedding(self.views, sl=self.sl.truncate(d))


def _evaluate(ctx, emb, task, split, metric="scaled_correlation"):
    """Per-query scores of one task on ``split`` (validation or test)."""
    cfg, ds = ctx.cfg, ctx.ds
    if emb.model is None:
        metric = "correlation"
    p = cfg.power
    eig = emb.eigenvalues

    def db_index():
        Zdb = emb.latent("V", ctx.V["database"])
        return LatentIndex.from_latent(Zdb, ctx.db_ids, eig, p, metric)

    rows = ds.rows(split)
    if task == "I2I":
        index = db_index()
        results = index.search_latent(emb.latent("V", ctx.V[split]), cfg.precision_at)
        return [ctx.query_precision(r, row) for r, row in zip(results, rows)]
    if task == "T2I":
        if "T" not in emb.views:
            return None
        tm = ctx.tag_matrix[split]
        keep = np.setdiff1d(np.arange(len(rows)), np.asarray(tm.empty_rows, dtype=np.int64))
        index = db_index()
        Zq = emb.latent("T", ctx.T[split][keep])
        results = index.search_latent(Zq, cfg.precision_at)
        return [ctx.query_precision(r, rows[j]) for r, j in zip(results, keep)]
    if task == "K2I":
        kws = ctx.kw_vocab
        if "K" in emb.views:
            Zq = emb.latent("K", np.eye(len(kws)))
        elif "T" in emb.views:
            kws = [k for k in kws if k in ctx.tagger.vocabulary_]
            if not kws:
                return None
            Zq = emb.latent("T", ctx.tagger.transform(ctx.tagger.tag_matrix([[k] for k in kws]).matrix))
        else:
            return None
        index = db_index()
        results = index.search_latent(Zq, cfg.precision_at)
        return [ctx.keyword_precision(r, k) for r, k in zip(results, kws)]
    if task == "I2T":
        if "T" not in emb.views:
            return None
        train_tags = ds.tag_rows("train")
        Zt = emb.latent("T", ctx.T["train"])
        index = LatentIndex.from_latent(Zt, ds.id_rows("train"), eig, p, metric,
                                        tags=train_tags)
        results = index.search_latent(emb.latent("V", ctx.V[split]), cfg.n_neighbors)
        hits = []
        for r, row in zip(results, rows):
            tags = set(count_tags((index.tags[i] for i in index.positions(r)), cfg.n_tags))
            truth = {ds.labels[row]} if ds.labels is not None else set(ds.keywords[row])
            hits.append(1.0 if tags & truth else 0.0)
        return hits
    raise ValidationError(f"unknown task {task!r}")


def _fit_cca(ctx, views, method, c):
    cfg = ctx.cfg
    Zs, pres = [], []
    for v in views:
        if v == "V":
            Zs.append(ctx.V["train"]); pres.append(ctx.assembler)
        elif v == "T":
            Zs.append(ctx.T["train"]); pres.append(ctx.tagger)
        elif v == "K":
            if ctx.K is None:
                raise ValidationError("dataset has no keywords for a K view")
            Zs.append(ctx.K); pres.append(None)
        else:
            Zs.append(ctx.cluster_indicator(method, c)); pres.append(None)
    total = sum(Z.shape[1] for Z in Zs)
    d = min(max(cfg.candidate_dims), total)
    model = MultiViewCCA(d, cfg.epsilon, view_names=list(views))
    model.fit_features(Zs, preprocessors=pres)
    return model


def _select(ctx, emb, dims):
    tasks = [t for t in ctx.cfg.selection_tasks if t != "T2I" or "T" in emb.views]

    def score(trunc):
        out = []
        for t in tasks:
            out.extend(_evaluate(ctx, trunc, t, "validation") or [])
        return out

    class _Wrap:
        def __init__(self, emb, n):
            self.emb, self.n_components_ = emb, n

        def truncate(self, d):
            return self.emb.truncate(d)

    return select_dimension(_Wrap(emb, dims), score, ctx.cfg.candidate_dims)


def _cluster_count(ctx, method):
    counts = ctx.cfg.n_clusters or (len(ctx.kw_vocab) or 20,)
    if len(counts) == 1:
        return counts[0]
    best, best_score = None, -np.inf
    for c in sorted(counts):
        model = _fit_cca(ctx, ("V", "T", "C"), method, c)
        emb = _Embedding(("V", "T", "C"), model)
        d = _select(ctx, emb, model.n_components_)
        score = float(np.mean(_evaluate(ctx, emb.truncate(d), "T2I", "validation")))
        if score > best_score:
            best, best_score = c, score
    return best


def run_model(ctx, name, tasks):
    """Fit one roster model, select d on validation, score tasks on test."""
    views, method = parse_model(name)
    out = {"scores": {}, "d": None, "cluster": None}
    if name == "V":
        emb = _Embedding(("V",))
    elif name == "SL":
        sl = StructuralLearning(max(ctx.cfg.candidate_dims), ctx.cfg.sl_rho)
        sl.fit(ctx.V["train"], ctx.tag_matrix["train"])
        emb = _Embedding(("V",), sl=sl)
        out["d"] = _select(ctx, emb, sl.components_.shape[1])
        emb = emb.truncate(out["d"])
    else:
        c = None
        if "C" in views:
            method = method or ctx.cfg.cluster_method
            c = _cluster_count(ctx, method)
            out["cluster"] = {"method": method, "count": int(c)}
        model = _fit_cca(ctx, views, method, c)
        emb = _Embedding(views, model)
        out["d"] = _select(ctx, emb, model.n_components_)
        emb = emb.truncate(out["d"])
        out["model"] = emb.model
    for t in tasks:
        scores = _evaluate(ctx, emb, t, "test")
        out["scores"][t] = None if scores is None else float(np.mean(scores))
    out["embedding"] = emb
    return out


def fit_dataset_model(dataset, views=("V", "T"), config=None, seed=0, d=None,
                      cluster_method=None, n_clusters=None):
    """Fit one CCA model on the training split.

    ``d=None`` selects the dimension on the validation split. Returns the
    (truncated) model, which carries its fitted preprocessors.
    """
    cfg = config or ExperimentConfig()
    views = tuple(views)
    parse_model("+".join(views))
    ctx = _Context(dataset, cfg, int(seed))
    method = c = None
    if "C" in views:
        method = cluster_method or cfg.cluster_method
        c = n_clusters or _cluster_count(ctx, method)
    model = _fit_cca(ctx, views, method, c)
    if d is None:
        d = _select(ctx, _Embedding(views, model), model.n_components_)
    return model.truncate(d)


def evaluate_model(dataset, model, tasks=("I2I", "T2I"), split="test", config=None,
                   metric="scaled_correlation"):
    """Mean precision of a fitted V/T model per task on ``split``."""
    cfg = config or ExperimentConfig()
    views = tuple(model.view_names or ())
    if not views or views[0] != "V":
        raise ValidationError("model views must be named, starting with V")
    pres = dict(zip(views, model.preprocessors_))
    ctx = _Context(dataset, cfg, 0, pres["V"], pres.get("T"))
    emb = _Embedding(views, model)
    out = {}
    for t in tasks:
        scores = _evaluate(ctx, emb, t, split, metric)
        out[t] = None if scores is None else float(np.mean(scores))
    return out


def run_experiment(dataset, config=None, roster=DEFAULT_ROSTER, tasks=TASKS, seeds=(0,)):
    """Run every roster model on every task for each seed.

    Precisions are averaged over seeds; per-seed values, selected
    dimensions and cluster settings are kept in the report.
    """
    cfg = config or ExperimentConfig()
    for t in tasks:
        if t not in TASKS:
            raise ValidationError(f"unknown task {t!r}")
    for m in roster:
        parse_model(m)
    if not seeds:
        raise ValidationError("at least one seed is required")
    per_seed = {m: {t: [] for t in tasks} for m in roster}
    selected = {m: [] for m in roster}
    clusters = {}
    ablation = {}
    timings = {}
    for seed in seeds:
        t0 = time.perf_counter()
        ctx = _Context(dataset, cfg, int(seed))
        timings[f"seed{seed}/featurize"] = time.perf_counter() - t0
        fitted = {}
        for m in roster:
            t0 = time.perf_counter()
            res = run_model(ctx, m, tasks)
            timings[f"seed{seed}/{m}"] = time.perf_counter() - t0
            fitted[m] = res
            for t in tasks:
                per_seed[m][t].append(res["scores"][t])
            selected[m].append(res["d"])
            if res["cluster"]:
                clusters.setdefault(m, []).append(res["cluster"])
        for m in cfg.ablation_models:
            if m not in fitted or fitted[m]["embedding"].model is None:
                continue
            emb = fitted[m]["embedding"]
            cell = ablation.setdefault(m, {})
            for metric, label in METRIC_LABELS.items():
                for t in cfg.ablation_tasks:
                    scores = _evaluate(ctx, emb, t, "test", metric)
                    if scores is not None:
                        cell.setdefault(label, {}).setdefault(t, []).append(float(np.mean(scores)))
    results = {
        m: {t: (None if any(v is None for v in vals) else float(np.mean(vals)))
            for t, vals in per_seed[m].items()}
        for m in roster
    }
    ablation_mean = {m: {lab: {t: float(np.mean(v)) for t, v in ts.items()}
                         for lab, ts in cell.items()} for m, cell in ablation.items()}
    return ExperimentReport(
        dataset=dataset.name,
        config=_clean(asdict(cfg)),
        roster=list(roster),
        tasks=list(tasks),
        seeds=[int(s) for s in seeds],
        results=results,
        per_seed=per_seed,
        selected_d=selected,
        clusters=clusters,
        ablation=ablation_mean,
        notes={"I2T": f"share of test images whose {cfg.n_tags} transferred tags "
                      "contain a ground-truth keyword"},
        timings=timings,
    )
