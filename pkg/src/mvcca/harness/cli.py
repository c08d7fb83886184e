"""Command-line interface.

Every subcommand accepts ``--config FILE`` (JSON, or YAML by extension)
whose top-level keys are option names (dashes or underscores); explicit
flags override config values. Exit codes: 0 success, 2 validation error,
3 numerical error, 4 I/O error.
"""

import argparse
import json
import logging
from pathlib import Path
import sys

import numpy as np

from ..exceptions import NumericalError, ValidationError
from ..kernel_maps import FeatureAssembler
from ..retrieval import LatentIndex, annotate_latent, query
from ..semantics import TagClusterer
from ..text import TagFeaturizer, build_vocabulary, read_corpus, read_stopwords
from .dataset import dataset_from_synth
from .experiment import (
    TASKS,
    ExperimentConfig,
    evaluate_model,
    fit_dataset_model,
    reference_config,
    run_experiment,
)
from .export import export_latent_2d, write_tsv
from .io import (
    atomic_write_text,
    load_dataset,
    load_model,
    read_dense,
    read_lines,
    read_matrix,
    read_queries,
    save_dataset,
    save_model,
    write_assignments,
    write_dense,
    write_results,
)
from .synth import SynthConfig, generate_three_view

log = logging.getLogger("mvcca")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4


def _csv(value):
    return [v for v in value.split(",") if v] if isinstance(value, str) else list(value)


def _load_config(path):
    text = Path(path).read_text(encoding="utf-8")
    if str(path).endswith((".yaml", ".yml")):
        import yaml

        data = yaml.safe_load(text)
    else:
        data = json.loads(text)
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ValidationError(f"config {path} must hold a mapping")
    return data


def _merge_config(parser, args):
    """Fill options not given on the command line from ``--config``."""
    if not args.config:
        return args
    cfg = _load_config(args.config)
    dests = {a.dest for a in parser._actions}
    for key, value in cfg.items():
        dest = key.replace("-", "_")
        if dest not in dests:
            raise ValidationError(f"config key {key!r} is not an option of {args.command!r}")
        if getattr(args, dest, None) is None:
            setattr(args, dest, value)
    return args


def _defer_required(parser):
    """Required options may come from ``--config``; checked after merging."""
    for action in parser._actions:
        if action.required and action.option_strings:
            action.required = False
            action.deferred_required = True


def _check_required(parser, args):
    missing = [a.option_strings[-1] for a in parser._actions
               if getattr(a, "deferred_required", False) and getattr(args, a.dest) is None]
    if missing:
        raise ValidationError(f"missing required option(s): {', '.join(missing)}")


def _defaults(args, **defaults):
    for k, v in defaults.items():
        if getattr(args, k, None) is None:
            setattr(args, k, v)


def _experiment_config(args):
    base = dict(args.experiment or {})
    for key in ("rff_dim", "pca_dim", "tag_dim", "epsilon", "precision_at", "power",
                "cluster_method"):
        if getattr(args, key, None) is not None:
            base[key] = getattr(args, key)
    if getattr(args, "tfidf", None):
        base["tfidf"] = True
    if getattr(args, "reference", False):
        return reference_config(**base)
    return ExperimentConfig.from_dict(base)


def _view_batch(ds, model, view, split):
    """Raw inputs of ``split`` for a visual or tag view of ``model``."""
    pre = model.preprocessors_[model.view_index(view)]
    if isinstance(pre, FeatureAssembler):
        return ds.visual_rows(split)
    if isinstance(pre, TagFeaturizer):
        return ds.tag_rows(split)
    raise ValidationError(f"view {view!r} has no raw dataset input")


def _write_json(path, obj):
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        atomic_write_text(path, text)


# -- subcommands ------------------------------------------------------------
def cmd_synth(args):
    _defaults(args, split_seed=0)
    overrides = dict(args.synth or {})
    for key in ("n_items", "n_topics", "seed", "visual_noise", "tag_noise", "keyword_noise"):
        if getattr(args, key) is not None:
            overrides[key] = getattr(args, key)
    data = generate_three_view(SynthConfig(**overrides))
    path = save_dataset(dataset_from_synth(data, split_seed=args.split_seed), args.out)
    print(path)


def cmd_build_vocab(args):
    _defaults(args, min_count=1)
    docs = read_corpus(args.corpus)
    stop = read_stopwords(args.stopwords) if args.stopwords else ()
    vocab = build_vocabulary(docs, args.min_count, stop, args.max_terms)
    lines = "".join(f"{t}\t{c}\n" for t, c in zip(vocab.terms, vocab.document_frequencies))
    if args.out:
        atomic_write_text(args.out, lines)
    else:
        sys.stdout.write(lines)


def cmd_featurize(args):
    _defaults(args, split="train", view="V")
    ds = load_dataset(args.dataset)
    model, _ = load_model(args.model)
    write_dense(args.out, model.featurize(_view_batch(ds, model, args.view, args.split),
                                          args.view))


def cmd_cluster_tags(args):
    _defaults(args, method="nc", split="train", seed=0)
    ds = load_dataset(args.dataset)
    c = args.n_clusters or len(ds.keyword_vocab()) or 20
    tagger = TagFeaturizer(n_components=1, min_count=args.min_count or 1,
                           stopwords=ds.stopwords, tfidf=bool(args.tfidf))
    tagger.fit(ds.tag_rows("train"))
    T = tagger.tag_matrix(ds.tag_rows(args.split)).matrix
    res = TagClusterer(args.method, c, random_state=args.seed).fit(T).assignment_
    write_assignments(args.out, ds.id_rows(args.split), res.labels)
    log.info("cluster report: %s", res.report)


def cmd_fit(args):
    _defaults(args, views="V,T", seed=0)
    ds = load_dataset(args.dataset)
    cfg = _experiment_config(args)
    model = fit_dataset_model(ds, _csv(args.views), cfg, args.seed, args.d,
                              args.cluster_method, args.n_clusters)
    save_model(model, args.out, p=cfg.power, seeds=[args.seed],
               extra={"dataset": str(args.dataset)})
    print(f"d={model.n_components_}")


def _view_input(model, view, args):
    i = model.view_index(view)
    pre = model.preprocessors_[i]
    if isinstance(pre, TagFeaturizer):
        return read_corpus(args.input[0])
    mats = [read_matrix(p) for p in args.input]
    mats = [m.toarray() if hasattr(m, "toarray") else m for m in mats]
    return mats if pre is not None else mats[0]


def cmd_project(args):
    _defaults(args, view="V")
    model, _ = load_model(args.model)
    write_dense(args.out, model.transform_view(_view_input(model, args.view, args), args.view))


def cmd_index(args):
    _defaults(args, split="database", view="V", metric="scaled_correlation")
    ds = load_dataset(args.dataset)
    model, manifest = load_model(args.model)
    i = model.view_index(args.view)
    Z = model.transform_view(_view_batch(ds, model, i, args.split), i)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_dense(out / "latent.mvx", Z)
    with open(out / "ids.txt", "w", encoding="utf-8") as fh:
        fh.writelines(f"{x}\n" for x in ds.id_rows(args.split))
    with open(out / "tags.txt", "w", encoding="utf-8") as fh:
        fh.writelines(" ".join(doc) + "\n" for doc in ds.tag_rows(args.split))
    _write_json(out / "index.json", {"p": manifest["p"], "metric": args.metric,
                                     "view": i, "eigenvalues": manifest["eigenvalues"]})


def _load_index(directory):
    directory = Path(directory)
    meta = json.loads((directory / "index.json").read_text(encoding="utf-8"))
    return LatentIndex.from_latent(
        read_dense(directory / "latent.mvx"), read_lines(directory / "ids.txt"),
        meta["eigenvalues"], meta["p"], meta["metric"], meta["view"],
        tags=read_corpus(directory / "tags.txt"),
    )


def _parse_weights(items):
    out = {}
    for item in items or []:
        tag, sep, w = item.partition("=")
        if not sep:
            raise ValidationError(f"tag weight {item!r} must look like tag=weight")
        out[tag] = float(w)
    return out


def _visual_query(args):
    ds = load_dataset(args.dataset)
    if args.item not in ds.ids:
        raise ValidationError(f"unknown item {args.item!r}")
    r = ds.ids.index(args.item)
    return [b[r] for b in ds.visual]


def _batch_search(args, model, index):
    queries = read_queries(args.queries)
    blocks = None
    if any(q[0] == "row" for q in queries):
        if not args.features:
            raise ValidationError("row queries need --features matrix files")
        blocks = [read_matrix(p) for p in args.features]
        blocks = [b.toarray() if hasattr(b, "toarray") else b for b in blocks]
    tag_view = args.view if args.view != "V" else "T"
    fh = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    try:
        for n, q in enumerate(queries):
            if q[0] == "row":
                if q[1] >= blocks[0].shape[0]:
                    raise ValidationError(f"query {n}: row {q[1]} is out of range")
                res = query(index, model, "V", [b[q[1]] for b in blocks], args.k)
            else:
                try:
                    res = query(index, model, tag_view, q[1], args.k, q[2])
                except ValidationError as exc:
                    raise ValidationError(f"query {n}: {exc}") from None
            write_results(fh, res, query=n)
    finally:
        if args.out:
            fh.close()


def cmd_search(args):
    _defaults(args, k=50, view="V")
    model, _ = load_model(args.model)
    index = _load_index(args.index)
    if args.queries:
        _batch_search(args, model, index)
        return
    if args.tags:
        raw = _csv(args.tags)
        view = args.view if args.view != "V" else "T"
        res = query(index, model, view, raw, args.k, _parse_weights(args.weight))
    elif args.item:
        res = query(index, model, "V", _visual_query(args), args.k)
    else:
        raise ValidationError("search needs --tags, --item or --queries")
    write_results(args.out or sys.stdout, res)


def cmd_annotate(args):
    _defaults(args, n_neighbors=50, n_tags=5, split="test")
    model, _ = load_model(args.model)
    index = _load_index(args.index)
    ds = load_dataset(args.dataset)
    items = [args.item] if args.item else ds.id_rows(args.split)
    rows = [ds.ids.index(i) for i in items]
    Z = model.transform_view([b[rows] for b in ds.visual], 0)
    lines = [f"{i}\t{','.join(annotate_latent(index, z, args.n_neighbors, args.n_tags))}\n"
             for i, z in zip(items, Z)]
    if args.out:
        atomic_write_text(args.out, "".join(lines))
    else:
        sys.stdout.writelines(lines)


def cmd_eval(args):
    _defaults(args, split="test", tasks="I2I,T2I")
    ds = load_dataset(args.dataset)
    model, _ = load_model(args.model)
    scores = evaluate_model(ds, model, _csv(args.tasks), args.split, _experiment_config(args))
    _write_json(args.out, scores)


def cmd_experiment(args):
    _defaults(args, seeds="0", tasks=",".join(TASKS))
    if args.dataset:
        ds = load_dataset(args.dataset)
    else:
        ds = dataset_from_synth(generate_three_view(SynthConfig(**(args.synth or {}))))
    cfg = _experiment_config(args)
    kwargs = {}
    if args.roster:
        kwargs["roster"] = tuple(_csv(args.roster))
    report = run_experiment(ds, cfg, tasks=tuple(_csv(args.tasks)),
                            seeds=tuple(int(s) for s in _csv(str(args.seeds))), **kwargs)
    if args.out:
        atomic_write_text(args.out, report.to_json())
        atomic_write_text(str(args.out) + ".timings.json",
                          json.dumps(report.timings, indent=2, sort_keys=True) + "\n")
    else:
        sys.stdout.write(report.to_json())
    sys.stderr.write(report.table() + "\n")


def cmd_export_2d(args):
    _defaults(args, split="test", views="V,T")
    ds = load_dataset(args.dataset)
    model, _ = load_model(args.model)
    views = _csv(args.views)
    batches = [_view_batch(ds, model, v, args.split) for v in views]
    labels = None
    if ds.labels is not None:
        labels = [ds.labels[r] for r in ds.rows(args.split)]
    rows = export_latent_2d(model, batches, views, ds.id_rows(args.split), labels)
    write_tsv(args.out or sys.stdout, rows)


# -- parser -----------------------------------------------------------------
def build_parser():
    parser = argparse.ArgumentParser(prog="mvcca", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help):
        p = sub.add_parser(name, help=help)
        p.add_argument("--config", help="JSON or YAML file of option values")
        p.set_defaults(func=func)
        return p

    def exp_opts(p):
        p.add_argument("--experiment", type=json.loads, help="JSON experiment settings")
        p.add_argument("--reference", action="store_true",
                       help="start from the desk-scale reference settings")
        p.add_argument("--rff-dim", type=int)
        p.add_argument("--pca-dim", type=int)
        p.add_argument("--tag-dim", type=int)
        p.add_argument("--epsilon", type=float)
        p.add_argument("--precision-at", type=int)
        p.add_argument("--power", type=float)
        p.add_argument("--tfidf", action="store_const", const=True)

    p = add("synth", cmd_synth, "generate a synthetic three-view dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--synth", type=json.loads, help="JSON generator settings")
    p.add_argument("--n-items", type=int)
    p.add_argument("--n-topics", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--visual-noise", type=float)
    p.add_argument("--tag-noise", type=float)
    p.add_argument("--keyword-noise", type=float)
    p.add_argument("--split-seed", type=int)

    p = add("build-vocab", cmd_build_vocab, "build a tag vocabulary from a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--min-count", type=int)
    p.add_argument("--stopwords")
    p.add_argument("--max-terms", type=int)
    p.add_argument("--out")

    p = add("featurize", cmd_featurize, "write a split's view features using a fitted model")
    p.add_argument("--dataset", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--view")
    p.add_argument("--split")
    p.add_argument("--out", required=True)

    p = add("cluster-tags", cmd_cluster_tags, "cluster tag documents")
    p.add_argument("--dataset", required=True)
    p.add_argument("--method", choices=("kmeans", "nc", "nmf", "plsa"))
    p.add_argument("--n-clusters", type=int)
    p.add_argument("--min-count", type=int)
    p.add_argument("--tfidf", action="store_const", const=True)
    p.add_argument("--split")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)

    p = add("fit", cmd_fit, "fit a multi-view CCA model on the training split")
    p.add_argument("--dataset", required=True)
    p.add_argument("--views", help="comma-separated subset of V,T,K,C (V first)")
    p.add_argument("--d", type=int, help="latent dimension (default: select on validation)")
    p.add_argument("--cluster-method", choices=("kmeans", "nc", "nmf", "plsa", "visual-kmeans"))
    p.add_argument("--n-clusters", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    exp_opts(p)

    p = add("project", cmd_project, "project raw single-view inputs")
    p.add_argument("--model", required=True)
    p.add_argument("--view")
    p.add_argument("--input", nargs="+", required=True,
                   help="feature matrices (visual) or a tag corpus")
    p.add_argument("--out", required=True)

    p = add("index", cmd_index, "build a search index over a split")
    p.add_argument("--dataset", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--split")
    p.add_argument("--view")
    p.add_argument("--metric", choices=("scaled_correlation", "scaled_euclidean",
                                        "euclidean", "correlation"))
    p.add_argument("--out", required=True)

    p = add("search", cmd_search, "top-k search for a tag or image query")
    p.add_argument("--model", required=True)
    p.add_argument("--index", required=True)
    p.add_argument("--tags", help="comma-separated query tags")
    p.add_argument("--weight", action="append", help="tag=weight (repeatable)")
    p.add_argument("--item", help="item id of an image query")
    p.add_argument("--dataset", help="dataset holding --item")
    p.add_argument("--queries", help="batch file: one tag list (tag or tag:weight) "
                   "or feature-row index per line")
    p.add_argument("--features", nargs="+", help="visual feature matrix files for row queries")
    p.add_argument("--view")
    p.add_argument("-k", type=int)
    p.add_argument("--out")

    p = add("annotate", cmd_annotate, "transfer tags to images")
    p.add_argument("--model", required=True)
    p.add_argument("--index", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--item")
    p.add_argument("--split")
    p.add_argument("--n-neighbors", type=int)
    p.add_argument("--n-tags", type=int)
    p.add_argument("--out")

    p = add("eval", cmd_eval, "precision of a fitted model on a split")
    p.add_argument("--dataset", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--tasks")
    p.add_argument("--split")
    p.add_argument("--out")
    exp_opts(p)

    p = add("experiment", cmd_experiment, "run the model x task comparison")
    p.add_argument("--dataset", help="dataset manifest (default: synthetic data)")
    p.add_argument("--synth", type=json.loads, help="JSON generator settings")
    p.add_argument("--roster")
    p.add_argument("--tasks")
    p.add_argument("--seeds")
    p.add_argument("--cluster-method", choices=("kmeans", "nc", "nmf", "plsa"))
    p.add_argument("--out")
    exp_opts(p)

    p = add("export-2d", cmd_export_2d, "first two latent coordinates as TSV")
    p.add_argument("--dataset", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--views")
    p.add_argument("--split")
    p.add_argument("--out")
    for p in sub.choices.values():
        _defer_required(p)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    sub = parser._subparsers._group_actions[0].choices[args.command]
    try:
        _merge_config(sub, args)
        _check_required(sub, args)
        args.func(args)
    except (NumericalError, np.linalg.LinAlgError) as exc:
        log.error("%s", exc)
        return EXIT_NUMERICAL
    except (ValidationError, ValueError, KeyError) as exc:
        log.error("%s", exc)
        return EXIT_VALIDATION
    except OSError as exc:
        log.error("%s", exc)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
