"""On-disk formats: dense/sparse matrices, model directories, dataset
manifests and TSV outputs.

Dense matrices use the ``MVX1`` binary layout: the 4-byte magic, u64 rows,
u64 cols (little endian) and ``rows * cols`` little-endian float64 values in
row-major order. Sparse matrices are UTF-8 text: a ``rows cols nnz`` header
followed by zero-indexed ``i j v`` lines.
"""

import json
import os
from pathlib import Path
import struct

import numpy as np
import scipy.sparse as sp

from ..cca import MultiViewCCA
from ..exceptions import ValidationError
from ..kernel_maps import FeatureAssembler, FeatureBlock, MapKind, RFFMap
from ..linalg import PCAModel
from ..text import TagCompression, TagFeaturizer, TagVocabulary, read_corpus, read_stopwords
from .dataset import SPLITS, Dataset

MAGIC = b"MVX1"
MODEL_FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sQQ")


class FormatError(OSError):
    """A file exists but does not follow the expected layout."""


# -- matrices -----------------------------------------------------------
def write_dense(path, X):
    X = np.ascontiguousarray(X, dtype="<f8")
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2:
        raise ValidationError(f"dense matrix must be 2-D, got {X.ndim}-D")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, X.shape[0], X.shape[1]))
        fh.write(X.tobytes(order="C"))


def read_dense(path):
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) != _HEADER.size:
            raise FormatError(f"{path}: truncated header")
        magic, rows, cols = _HEADER.unpack(head)
        if magic != MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}")
        data = fh.read()
    if len(data) != 8 * rows * cols:
        raise FormatError(f"{path}: expected {rows * cols} values, found {len(data) // 8}")
    return np.frombuffer(data, dtype="<f8").reshape(rows, cols).astype(np.float64)


def write_sparse(path, M):
    M = sp.coo_matrix(M)
    M.sum_duplicates()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{M.shape[0]} {M.shape[1]} {M.nnz}\n")
        for i, j, v in zip(M.row.tolist(), M.col.tolist(), M.data.tolist()):
            fh.write(f"{i} {j} {v!r}\n")


def read_sparse(path):
    with open(path, encoding="utf-8") as fh:
        try:
            rows, cols, nnz = (int(t) for t in fh.readline().split())
        except ValueError as exc:
            raise FormatError(f"{path}: bad header") from exc
        body = np.loadtxt(fh, ndmin=2) if nnz else np.empty((0, 3))
    if body.shape[0] != nnz:
        raise FormatError(f"{path}: header says {nnz} entries, found {body.shape[0]}")
    i, j = body[:, 0].astype(np.int64), body[:, 1].astype(np.int64)
    if nnz and (i.min() < 0 or j.min() < 0 or i.max() >= rows or j.max() >= cols):
        raise FormatError(f"{path}: entry index out of range")
    return sp.csr_matrix((body[:, 2], (i, j)), shape=(rows, cols))


def read_matrix(path):
    """Read an ``MVX1`` file, or the sparse text format by sniffing."""
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == MAGIC:
        return read_dense(path)
    return read_sparse(path)


# -- model directories ----------------------------------------------------
def _put(directory, name, X):
    write_dense(directory / name, X)
    return name


def _assembler_descriptor(pre, directory, prefix):
    blocks = []
    for b, fb in enumerate(pre.blocks_):
        entry = {"kind": fb.kind.value, "dim": int(fb.dim), "input_dim": fb.input_dim}
        if fb.rff is not None:
            entry["rff"] = {"input_dim": fb.rff.input_dim, "output_dim": fb.rff.output_dim,
                            "sigma": fb.rff.sigma, "seed": fb.rff.seed}
        if fb.pca is not None:
            entry["pca"] = {
                "mean": _put(directory, f"{prefix}_block{b}_pca_mean.mvx", fb.pca.mean),
                "components": _put(directory, f"{prefix}_block{b}_pca_components.mvx",
                                   fb.pca.components),
                "variances": _put(directory, f"{prefix}_block{b}_pca_variances.mvx",
                                  fb.pca.component_variances),
            }
        blocks.append(entry)
    return {
        "type": "visual",
        "params": {k: (list(v) if isinstance(v, tuple) else v)
                   for k, v in pre.get_params().items()},
        "blocks": blocks,
        "means": _put(directory, f"{prefix}_means.mvx", pre.means_),
    }


def _tagger_descriptor(pre, directory, prefix):
    params = pre.get_params()
    params["stopwords"] = sorted(params["stopwords"])
    return {
        "type": "tags",
        "params": params,
        "terms": list(pre.vocabulary_.terms),
        "document_frequencies": list(pre.vocabulary_.document_frequencies),
        "idf": None if pre.idf_ is None else _put(directory, f"{prefix}_idf.mvx", pre.idf_),
        "basis": _put(directory, f"{prefix}_basis.mvx", pre.compression_.basis),
        "singular_values": _put(directory, f"{prefix}_singular_values.mvx",
                                pre.compression_.singular_values),
    }


def save_model(model, directory, p=4, seeds=None, extra=None):
    """Write a fitted :class:`MultiViewCCA` (and its preprocessors)."""
    if getattr(model, "projections_", None) is None:
        raise ValidationError("model is not fitted")
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    names = list(model.view_names or [f"view{i}" for i in range(model.n_views_)])
    views = []
    for i, (pre, W, mean) in enumerate(zip(model.preprocessors_, model.projections_,
                                           model.means_)):
        prefix = f"view{i}"
        if isinstance(pre, FeatureAssembler):
            desc = _assembler_descriptor(pre, directory, prefix)
        elif isinstance(pre, TagFeaturizer):
            desc = _tagger_descriptor(pre, directory, prefix)
        elif pre is None:
            desc = {"type": "dense"}
        else:
            raise ValidationError(f"cannot serialize preprocessor {type(pre).__name__}")
        desc.update(
            name=names[i],
            dim=int(model.view_dims_[i]),
            projection=_put(directory, f"{prefix}_W.mvx", W),
            mean=_put(directory, f"{prefix}_mean.mvx", mean),
        )
        views.append(desc)
    manifest = {
        "format_version": MODEL_FORMAT_VERSION,
        "d": int(model.n_components_),
        "epsilon": float(model.epsilon),
        "eigenvalues": [float(v) for v in model.eigenvalues_],
        "p": p,
        "seeds": list(seeds or []),
        "n_samples": int(model.n_samples_fit_),
        "views": views,
    }
    if extra:
        manifest["extra"] = extra
    with open(directory / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return directory


def _load_assembler(desc, directory):
    params = dict(desc["params"])
    params["map_kinds"] = tuple(params["map_kinds"])
    pre = FeatureAssembler(**params)
    blocks = []
    for entry in desc["blocks"]:
        rff = RFFMap(**entry["rff"]) if "rff" in entry else None
        pca = None
        if "pca" in entry:
            pca = PCAModel(read_dense(directory / entry["pca"]["mean"])[0],
                           read_dense(directory / entry["pca"]["components"]),
                           read_dense(directory / entry["pca"]["variances"])[0])
        blocks.append(FeatureBlock(MapKind(entry["kind"]), pca, entry["dim"], rff,
                                   entry.get("input_dim")))
    pre.blocks_ = blocks
    pre.means_ = read_dense(directory / desc["means"])[0]
    pre.n_features_in_ = len(blocks)
    return pre


def _load_tagger(desc, directory):
    params = dict(desc["params"])
    params["stopwords"] = tuple(params["stopwords"])
    pre = TagFeaturizer(**params)
    pre.vocabulary_ = TagVocabulary(tuple(desc["terms"]), tuple(desc["document_frequencies"]))
    pre.idf_ = None if desc["idf"] is None else read_dense(directory / desc["idf"])[0]
    pre.compression_ = TagCompression(read_dense(directory / desc["basis"]),
                                      read_dense(directory / desc["singular_values"])[0])
    return pre


def load_model(directory):
    """Inverse of :func:`save_model`; returns ``(model, manifest)``."""
    directory = Path(directory)
    with open(directory / "manifest.json", encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("format_version") != MODEL_FORMAT_VERSION:
        raise FormatError(f"unsupported model format {manifest.get('format_version')!r}")
    pres, Ws, means, dims, names = [], [], [], [], []
    for desc in manifest["views"]:
        kind = desc["type"]
        if kind == "visual":
            pres.append(_load_assembler(desc, directory))
        elif kind == "tags":
            pres.append(_load_tagger(desc, directory))
        elif kind == "dense":
            pres.append(None)
        else:
            raise FormatError(f"unknown view type {kind!r}")
        Ws.append(read_dense(directory / desc["projection"]))
        means.append(read_dense(directory / desc["mean"])[0])
        dims.append(desc["dim"])
        names.append(desc["name"])
    model = MultiViewCCA(manifest["d"], manifest["epsilon"], view_names=names, prefit=True)
    model.preprocessors_ = pres
    model.projections_ = Ws
    model.means_ = means
    model.view_dims_ = dims
    model.eigenvalues_ = np.asarray(manifest["eigenvalues"], dtype=np.float64)
    model.n_components_ = manifest["d"]
    model.n_views_ = len(Ws)
    model.n_samples_fit_ = manifest["n_samples"]
    return model, manifest


# -- datasets -------------------------------------------------------------
def read_lines(path):
    with open(path, encoding="utf-8") as fh:
        return [line.strip() for line in fh if line.strip()]


def read_keywords(path):
    """``item_id<TAB>kw1,kw2,...`` per line -> {item id: set of keywords}."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            item, sep, kws = line.partition("\t")
            if not sep:
                raise FormatError(f"{path}:{n}: expected item_id<TAB>keywords")
            out[item] = {k for k in kws.split(",") if k}
    return out


def write_keywords(path, ids, keywords):
    with open(path, "w", encoding="utf-8") as fh:
        for i, kws in zip(ids, keywords):
            fh.write(f"{i}\t{','.join(sorted(kws))}\n")


def _resolve(base, p):
    p = Path(p)
    return p if p.is_absolute() else base / p


def load_dataset(manifest_path):
    """Load a dataset manifest.

    Keys: ``features`` (list of ``{"path", "map"}``), ``tags`` (corpus, one
    document per line), ``items`` (item ids, one per line, in row order),
    ``splits`` (split name -> file of item ids), and optionally
    ``keywords``, ``labels`` (``item_id<TAB>label``), ``stopwords`` and
    ``name``. Relative paths resolve against the manifest's directory.
    """
    manifest_path = Path(manifest_path)
    with open(manifest_path, encoding="utf-8") as fh:
        m = json.load(fh)
    base = manifest_path.parent
    for key in ("features", "tags", "items", "splits"):
        if key not in m:
            raise ValidationError(f"dataset manifest lacks {key!r}")
    ids = read_lines(_resolve(base, m["items"]))
    row = {item: n for n, item in enumerate(ids)}
    visual, kinds = [], []
    for f in m["features"]:
        X = read_matrix(_resolve(base, f["path"]))
        visual.append(X.toarray() if sp.issparse(X) else X)
        kinds.append(f.get("map", "none"))
    tags = read_corpus(_resolve(base, m["tags"]))

    def rows_of(items, what):
        missing = [i for i in items if i not in row]
        if missing:
            raise ValidationError(f"{what} names unknown item {missing[0]!r}")
        return [row[i] for i in items]

    splits = {}
    for name in SPLITS:
        if name not in m["splits"]:
            raise ValidationError(f"dataset manifest lacks split {name!r}")
        splits[name] = rows_of(read_lines(_resolve(base, m["splits"][name])), f"split {name}")
    keywords = labels = None
    if m.get("keywords"):
        kw = read_keywords(_resolve(base, m["keywords"]))
        rows_of(list(kw), "keyword file")
        keywords = [kw.get(i, set()) for i in ids]
    if m.get("labels"):
        lab = {}
        for line in read_lines(_resolve(base, m["labels"])):
            item, _, value = line.partition("\t")
            lab[item] = value
        rows_of(list(lab), "label file")
        if len(lab) != len(ids):
            raise ValidationError("label file must cover every item")
        labels = [lab[i] for i in ids]
    stop = frozenset(read_stopwords(_resolve(base, m["stopwords"]))) if m.get("stopwords") \
        else frozenset()
    return Dataset(ids, visual, tuple(kinds), tags, splits, keywords, labels, stop,
                   m.get("name", manifest_path.stem))


def save_dataset(ds, directory):
    """Write ``ds`` in manifest form; returns the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    features = []
    for b, (X, kind) in enumerate(zip(ds.visual, ds.map_kinds)):
        write_dense(directory / f"feature{b}.mvx", X)
        features.append({"path": f"feature{b}.mvx", "map": kind})
    with open(directory / "items.txt", "w", encoding="utf-8") as fh:
        fh.writelines(f"{i}\n" for i in ds.ids)
    with open(directory / "tags.txt", "w", encoding="utf-8") as fh:
        fh.writelines(" ".join(doc) + "\n" for doc in ds.tags)
    splits = {}
    for name in SPLITS:
        splits[name] = f"split_{name}.txt"
        with open(directory / splits[name], "w", encoding="utf-8") as fh:
            fh.writelines(f"{ds.ids[r]}\n" for r in ds.rows(name))
    manifest = {"name": ds.name, "features": features, "items": "items.txt",
                "tags": "tags.txt", "splits": splits}
    if ds.keywords is not None:
        write_keywords(directory / "keywords.tsv", ds.ids, ds.keywords)
        manifest["keywords"] = "keywords.tsv"
    if ds.labels is not None:
        with open(directory / "labels.tsv", "w", encoding="utf-8") as fh:
            fh.writelines(f"{i}\t{lab}\n" for i, lab in zip(ds.ids, ds.labels))
        manifest["labels"] = "labels.tsv"
    if ds.stopwords:
        with open(directory / "stopwords.txt", "w", encoding="utf-8") as fh:
            fh.writelines(f"{w}\n" for w in sorted(ds.stopwords))
        manifest["stopwords"] = "stopwords.txt"
    path = directory / "manifest.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


# -- TSV outputs ------------------------------------------------------------
def write_assignments(path, ids, labels):
    with open(path, "w", encoding="utf-8") as fh:
        for i, c in zip(ids, labels):
            fh.write(f"{i}\t{int(c)}\n")


def read_assignments(path):
    out = {}
    for line in read_lines(path):
        item, _, c = line.partition("\t")
        out[item] = int(c)
    return out


def write_results(path_or_fh, result, query=None):
    """``rank<TAB>item_id<TAB>score`` rows, rank starting at 1.

    With ``query`` set, each row is prefixed by that query number.
    """
    prefix = "" if query is None else f"{query}\t"
    lines = [f"{prefix}{r}\t{i}\t{s!r}\n" for r, (i, s) in enumerate(result, 1)]
    if hasattr(path_or_fh, "write"):
        path_or_fh.writelines(lines)
        return
    with open(path_or_fh, "w", encoding="utf-8") as fh:
        fh.writelines(lines)


def parse_query_line(line):
    """One batch query: a bare non-negative integer is a row index into a
    feature matrix, anything else a tag list (space or comma separated)
    whose entries may carry a weight as ``tag:weight``.

    Returns ``("row", index)`` or ``("tags", tags, weights)``.
    """
    text = line.strip()
    if not text:
        raise ValidationError("empty query line")
    if text.isdigit():
        return ("row", int(text))
    tags, weights = [], {}
    for token in text.replace(",", " ").split():
        tag, sep, w = token.rpartition(":")
        if not sep:
            tag = token
        else:
            try:
                weights[tag] = float(w)
            except ValueError:
                raise ValidationError(f"bad tag weight in {token!r}") from None
            if not tag:
                raise ValidationError(f"missing tag in {token!r}")
        tags.append(tag)
    return ("tags", tags, weights)


def read_queries(path):
    """Parsed non-blank lines of a batch query file."""
    with open(path, encoding="utf-8") as fh:
        return [parse_query_line(line) for line in fh if line.strip()]


def atomic_write_text(path, text):
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)
