"""Synthetic three-view data with planted topics.

Each item draws a topic ``z`` and an independent visual "style" ``s``.
Keywords are ``{z}`` plus occasional noise keywords. Tags mix the keyword
tag, topic-specific tags (with overlap into a neighbouring topic), shared
background tags, style tags and junk. Visual features are a dense
"global descriptor" block and a bag-of-visual-words histogram block, both
driven by a latent vector that adds a topic prototype, a style prototype
(the nuisance that confuses purely visual similarity) and Gaussian noise.
"""

from dataclasses import asdict, dataclass

import numpy as np

from ..exceptions import ValidationError


@dataclass(frozen=True)
class SynthConfig:
    """Generator settings. The defaults are the reference configuration.

    ``style_strength = 0`` and ``style_tag_rate = 0`` remove the visual
    nuisance; ``topic_overlap = 0`` gives disjoint topic vocabularies.
    """

    n_items: int = 20000
    n_topics: int = 10
    visual_dim: int = 64
    hist_bins: int = 128
    vocab_size: int = 600
    tags_per_item: float = 6.0
    keyword_noise: float = 0.1
    tag_noise: float = 0.5
    visual_noise: float = 2.5
    n_styles: int = 8
    topic_strength: float = 1.0
    style_strength: float = 2.0
    style_tag_rate: float = 0.6
    topic_overlap: float = 0.15
    latent_dim: int = 24
    hist_words: int = 400
    seed: int = 0

    def __post_init__(self):
        for name in ("n_items", "n_topics", "visual_dim", "hist_bins", "vocab_size",
                     "n_styles", "latent_dim", "hist_words"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be >= 1")
        for name in ("keyword_noise", "tag_noise", "style_tag_rate", "topic_overlap"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValidationError(f"{name} must lie in [0, 1]")
        if self.visual_noise < 0 or self.tags_per_item < 1:
            raise ValidationError("visual_noise must be >= 0 and tags_per_item >= 1")
        if self.topic_strength < 0 or self.style_strength < 0:
            raise ValidationError("prototype strengths must be >= 0")

    def to_dict(self):
        return asdict(self)


@dataclass
class SynthData:
    visual: list  # [dense block (n, visual_dim), histogram block (n, hist_bins)]
    map_kinds: tuple
    tags: list  # list of tag lists
    keywords: list  # list of keyword sets
    labels: np.ndarray
    styles: np.ndarray
    keyword_names: tuple
    topic_tags: dict  # topic index -> set of topic-owned tags (keyword tag included)


def keyword_name(z):
    return f"kw{z:02d}"


def _vocabulary(cfg):
    """Split the tag budget into topic, background, style and junk tags."""
    c, S = cfg.n_topics, cfg.n_styles
    budget = cfg.vocab_size - c
    per_topic = max(4, int(0.5 * budget / c))
    per_style = max(2, int(0.1 * budget / S))
    n_background = max(4, int(0.15 * budget))
    n_junk = max(4, budget - c * per_topic - S * per_style - n_background)
    topic = [[f"t{z:02d}_{j:03d}" for j in range(per_topic)] for z in range(c)]
    style = [[f"s{s:02d}_{j:02d}" for j in range(per_style)] for s in range(S)]
    background = [f"bg{j:03d}" for j in range(n_background)]
    junk = [f"x{j:04d}" for j in range(n_junk)]
    return topic, style, background, junk


def _zipf(m, a=1.0):
    w = 1.0 / np.arange(1, m + 1) ** a
    return w / w.sum()


def generate_three_view(config):
    """Generate items; fully determined by ``config.seed``."""
    cfg = config
    rng = np.random.default_rng(cfg.seed)
    n, c, S = cfg.n_items, cfg.n_topics, cfg.n_styles
    labels = rng.integers(c, size=n)
    styles = rng.integers(S, size=n)

    # keywords
    kw_names = tuple(keyword_name(z) for z in range(c))
    keywords = []
    noisy = rng.random(n) < cfg.keyword_noise
    extra = rng.integers(c, size=n)
    for i in range(n):
        kws = {kw_names[labels[i]]}
        if noisy[i] and c > 1:
            kws.add(kw_names[(labels[i] + 1 + extra[i] % (c - 1)) % c])
        keywords.append(kws)

    # tags
    topic_v, style_v, bg_v, junk_v = _vocabulary(cfg)
    topic_p = _zipf(len(topic_v[0]), 0.8)
    style_p = _zipf(len(style_v[0]), 0.5)
    bg_p = _zipf(len(bg_v), 1.0)
    noise = cfg.tag_noise
    # mixture over sources: own topic, neighbour topic, background, style, junk
    mix = np.array([
        (1 - noise) * (1 - cfg.topic_overlap),
        (1 - noise) * cfg.topic_overlap,
        noise * 0.5,
        0.0,
        noise * 0.5,
    ])
    mix /= mix.sum()
    lengths = 1 + rng.poisson(cfg.tags_per_item - 1, size=n)
    tags = []
    for i in range(n):
        z, s = labels[i], styles[i]
        doc = []
        if rng.random() >= noise:
            doc.append(kw_names[z])
        if rng.random() < cfg.style_tag_rate:
            doc.append(style_v[s][rng.choice(len(style_p), p=style_p)])
        sources = rng.choice(5, size=lengths[i], p=mix)
        for src in sources:
            if src == 0:
                doc.append(topic_v[z][rng.choice(len(topic_p), p=topic_p)])
            elif src == 1:
                doc.append(topic_v[(z + 1) % c][rng.choice(len(topic_p), p=topic_p)])
            elif src == 2:
                doc.append(bg_v[rng.choice(len(bg_p), p=bg_p)])
            else:
                doc.append(junk_v[rng.integers(len(junk_v))])
        tags.append(doc)

    # visual
    r = cfg.latent_dim
    topic_proto = rng.normal(size=(c, r)) * cfg.topic_strength
    style_proto = rng.normal(size=(S, r)) * cfg.style_strength
    h = topic_proto[labels] + style_proto[styles]
    if cfg.visual_noise > 0:
        h = h + rng.normal(scale=cfg.visual_noise, size=(n, r))
    mixing = rng.normal(size=(r, cfg.visual_dim)) / np.sqrt(r)
    dense = h @ mixing
    G = rng.normal(size=(r, cfg.hist_bins)) / np.sqrt(r)
    logits = h @ G
    logits -= logits.max(axis=1, keepdims=True)
    probs = np.exp(logits)
    probs /= probs.sum(axis=1, keepdims=True)
    if cfg.visual_noise > 0:
        counts = np.stack([rng.multinomial(cfg.hist_words, pv) for pv in probs])
        hist = counts / cfg.hist_words
    else:
        hist = probs

    topic_tags = {z: set(topic_v[z]) | {kw_names[z]} for z in range(c)}
    return SynthData(
        visual=[dense, hist],
        map_kinds=("rff", "sqrt"),
        tags=tags,
        keywords=keywords,
        labels=labels,
        styles=styles,
        keyword_names=kw_names,
        topic_tags=topic_tags,
    )
