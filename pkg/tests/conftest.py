import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default",
    max_examples=int(os.environ.get("HYPOTHESIS_MAX_EXAMPLES", 40)),
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_spd(rng, n, cond=10.0):
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    ev = np.linspace(1.0, cond, n)
    return (Q * ev) @ Q.T


def planted_blocks(n_per_block=40, terms_per_block=15, tags_per_doc=5, n_blocks=2, seed=0):
    """Binary documents drawn from disjoint tag blocks; returns (T, labels)."""
    import scipy.sparse as sp

    r = np.random.default_rng(seed)
    rows, cols, labels = [], [], []
    for b in range(n_blocks):
        for _ in range(n_per_block):
            i = len(labels)
            picks = r.choice(terms_per_block, size=tags_per_doc, replace=False)
            rows += [i] * tags_per_doc
            cols += list(b * terms_per_block + picks)
            labels.append(b)
    n = len(labels)
    T = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n_blocks * terms_per_block))
    return T, np.array(labels)
