"""Hypothesis strategies shared by the test modules."""

from __future__ import annotations

import numpy as np
from hypothesis import strategies as st

from npmle.kernel import Dataset, make_dataset
from npmle.mixtures import DiscreteMixture, make_mixture

finite = st.floats(min_value=-2.0, max_value=2.0, allow_nan=False, allow_infinity=False)


@st.composite
def mixtures(draw, max_k: int = 4, lo: float = -2.0, hi: float = 2.0, min_gap: float = 1e-3) -> DiscreteMixture:
    k = draw(st.integers(min_value=1, max_value=max_k))
    locs = draw(
        st.lists(st.floats(min_value=lo, max_value=hi), min_size=k, max_size=k, unique=True).filter(
            lambda v: len(v) < 2 or np.min(np.diff(np.sort(v))) >= min_gap
        )
    )
    raw = draw(st.lists(st.floats(min_value=0.05, max_value=1.0), min_size=k, max_size=k))
    w = np.asarray(raw) / np.sum(raw)
    return make_mixture(w, locs)


@st.composite
def datasets(draw, max_n: int = 12, lo: float = -2.0, hi: float = 2.0) -> Dataset:
    n = draw(st.integers(min_value=1, max_value=max_n))
    pts = draw(st.lists(st.floats(min_value=lo, max_value=hi), min_size=n, max_size=n))
    return make_dataset(pts, range_bound=2.0)


def random_instance(rng: np.random.Generator, max_n: int = 12, max_k: int = 3) -> tuple[DiscreteMixture, Dataset]:
    n = int(rng.integers(1, max_n + 1))
    X = make_dataset(rng.uniform(-2, 2, n), range_bound=2.0)
    k = int(rng.integers(1, max_k + 1))
    y = np.sort(rng.uniform(-2, 2, k))
    while k > 1 and np.min(np.diff(y)) < 0.05:
        y = np.sort(rng.uniform(-2, 2, k))
    p = rng.dirichlet(np.ones(k) * 2.0)
    p = np.maximum(p, 0.02)
    return make_mixture(p / p.sum(), y), X
