"""In-memory dataset: aligned views, metadata and disjoint splits."""

from dataclasses import dataclass, field

import numpy as np

from ..exceptions import ValidationError

SPLITS = ("train", "database", "validation", "test")


@dataclass
class Dataset:
    ids: list
    visual: list
    map_kinds: tuple
    tags: list
    splits: dict
    keywords: list | None = None
    labels: list | None = None
    stopwords: frozenset = field(default_factory=frozenset)
    name: str = "dataset"

    def __post_init__(self):
        n = len(self.ids)
        if len(set(self.ids)) != n:
            raise ValidationError("item ids must be unique")
        for b in self.visual:
            if b.shape[0] != n:
                raise ValidationError(f"visual block has {b.shape[0]} rows, expected {n}")
        if len(self.tags) != n:
            raise ValidationError(f"{len(self.tags)} tag documents for {n} items")
        for name, meta in (("keywords", self.keywords), ("labels", self.labels)):
            if meta is not None and len(meta) != n:
                raise ValidationError(f"{name} has {len(meta)} entries for {n} items")
        self.splits = {k: np.asarray(v, dtype=np.int64) for k, v in self.splits.items()}
        check_splits(self.splits, n)

    def __len__(self):
        return len(self.ids)

    def rows(self, split):
        return self.splits[split]

    def visual_rows(self, split):
        idx = self.rows(split)
        return [b[idx] for b in self.visual]

    def tag_rows(self, split):
        return [self.tags[i] for i in self.rows(split)]

    def id_rows(self, split):
        return [self.ids[i] for i in self.rows(split)]

    def keyword_vocab(self):
        if self.keywords is None:
            return ()
        return tuple(sorted(set().union(*self.keywords)))


def check_splits(splits, n):
    missing = [s for s in SPLITS if s not in splits]
    if missing:
        raise ValidationError(f"missing splits: {missing}")
    seen = {}
    for name in SPLITS:
        idx = splits[name]
        if idx.size == 0:
            raise ValidationError(f"split {name!r} is empty")
        if idx.min() < 0 or idx.max() >= n:
            raise ValidationError(f"split {name!r} has out-of-range rows")
        if np.unique(idx).size != idx.size:
            raise ValidationError(f"split {name!r} repeats items")
        for i in idx.tolist():
            if i in seen:
                raise ValidationError(
                    f"splits {seen[i]!r} and {name!r} overlap (row {i})"
                )
            seen[i] = name


def proportional_splits(n, seed=0, n_validation=1000, n_test=1000, train_fraction=0.6):
    """Random train / database / validation / test split.

    Validation and test get 1000 queries each once ``n`` is large enough,
    otherwise 5% of the items each; the remainder is shared between the
    training and database splits by ``train_fraction``.
    """
    if n < 8:
        raise ValidationError("need at least 8 items to split")
    n_val = min(n_validation, max(1, n // 20))
    n_te = min(n_test, max(1, n // 20))
    perm = np.random.default_rng(seed).permutation(n)
    rest = n - n_val - n_te
    n_train = int(round(rest * train_fraction))
    n_train = min(max(n_train, 1), rest - 1)
    return {
        "train": np.sort(perm[:n_train]),
        "database": np.sort(perm[n_train:rest]),
        "validation": np.sort(perm[rest:rest + n_val]),
        "test": np.sort(perm[rest + n_val:]),
    }


def dataset_from_synth(data, split_seed=0, name="synth", **split_kwargs):
    n = len(data.tags)
    width = len(str(n - 1))
    ids = [f"item{i:0{width}d}" for i in range(n)]
    labels = [data.keyword_names[z] for z in data.labels]
    return Dataset(
        ids=ids,
        visual=list(data.visual),
        map_kinds=tuple(data.map_kinds),
        tags=list(data.tags),
        splits=proportional_splits(n, split_seed, **split_kwargs),
        keywords=[set(k) for k in data.keywords],
        labels=labels,
        name=name,
    )
