import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from npmle.errors import EpsilonOutOfRange, ExtraPointOutOfRange, TooMuchMassDropped
from npmle.grid_solver import (
    Grid,
    GridWeights,
    build_grid,
    default_iota,
    duality_gap,
    frank_wolfe,
    kkt_residuals,
    optimize_weights,
    round_small_atoms,
    weighted_duality_gap,
)
from npmle.kernel import make_dataset
from npmle.mixtures import w1_distance
from strategies import datasets


def test_build_grid_examples() -> None:
    assert build_grid(1.0, 0.5).points.tolist() == [-1.0, -0.5, 0.0, 0.5, 1.0]
    assert build_grid(1.0, 0.5, [0.3]).points.tolist() == [-1.0, -0.5, 0.0, 0.3, 0.5, 1.0]
    with pytest.raises(EpsilonOutOfRange):
        build_grid(1.0, 2.0)
    with pytest.raises(ExtraPointOutOfRange):
        build_grid(1.0, 0.5, [1.5])


@given(st.floats(min_value=1.0, max_value=6.0), st.floats(min_value=1e-3, max_value=0.9))
@settings(max_examples=200, deadline=None)
def test_grid_invariants(L: float, eps: float) -> None:
    g = build_grid(L, eps)
    pts = g.points
    assert pts[0] == -L and pts[-1] == L
    assert np.all(np.diff(pts) > 0)
    assert np.max(np.diff(pts)) <= eps + 1e-13 * L
    # spacing at most eps needs ceil(2L/eps)+1 points, which fits 3L/eps once eps <= L/2
    if eps <= L / 2:
        assert len(g) <= 3 * L / eps


def test_frank_wolfe_single_point_fixed() -> None:
    X = make_dataset([0.0])
    w = frank_wolfe(X, build_grid(1.0, 0.25), 50)
    assert w.weights[np.argmin(np.abs(w.grid.points))] == pytest.approx(1.0)
    assert np.all(w.gap_history <= 1e-15)


def test_frank_wolfe_iterates_are_probability_vectors() -> None:
    X = make_dataset([-1.2, 0.3, 1.9])
    for t in (1, 5, 50):
        w = frank_wolfe(X, build_grid(X.L, 0.1), t)
        assert np.all(w.weights >= 0)
        assert w.weights.sum() == pytest.approx(1.0, abs=1e-12)
        assert w.gap_history.size == t + 1


def test_frank_wolfe_two_point_symmetric() -> None:
    X = make_dataset([-2.0, 2.0])
    w = frank_wolfe(X, build_grid(2.0, 0.01), 4000)
    m = w.to_mixture()
    left = m.weights[m.locations < 0].sum()
    assert left == pytest.approx(0.5, abs=0.05)
    # the mass sits near +-1.99865, strictly inside the data
    heavy = m.locations[m.weights > 0.05]
    assert np.all(np.abs(np.abs(heavy) - 1.99865) < 0.05)


def test_frank_wolfe_gap_rate() -> None:
    rng = np.random.default_rng(0)
    X = make_dataset(rng.uniform(-2, 2, 10), 2.0)
    w = frank_wolfe(X, build_grid(2.0, 0.05), 2000)
    best = np.minimum.accumulate(w.gap_history)
    t = np.arange(best.size)
    G = np.max(best * (t + 2))
    assert np.all(best <= G / (t + 2) + 1e-15)
    assert G < 20 * math.exp(4 * X.L**2)


def test_duality_gap_examples() -> None:
    X = make_dataset([0.0])
    g = build_grid(1.0, 0.5)
    w = GridWeights(g, np.where(g.points == 0.0, 1.0, 0.0))
    assert duality_gap(w, X) == pytest.approx(0.0, abs=1e-15)
    assert weighted_duality_gap(w, X) == pytest.approx(0.0, abs=1e-15)
    X2 = make_dataset([-1.5, 1.5])
    g2 = build_grid(1.5, 0.5)
    w2 = GridWeights(g2, np.where(g2.points == 0.0, 1.0, 0.0))
    assert duality_gap(w2, X2) > 0


def test_duality_gap_bounds_suboptimality() -> None:
    from npmle.kernel import log_likelihood

    rng = np.random.default_rng(1)
    for _ in range(20):
        X = make_dataset(rng.uniform(-2, 2, 8), 2.0)
        g = build_grid(2.0, 0.1)
        opt = optimize_weights(g.points, X, tol=1e-13)
        for t in (3, 30):
            w = frank_wolfe(X, g, t)
            sub = log_likelihood(opt, X) - log_likelihood(w.to_mixture(), X)
            assert -1e-12 <= sub <= duality_gap(w, X) + 1e-12


def test_gap_is_nonpositive_at_grid_optimum() -> None:
    X = make_dataset([-1.0, 0.4, 1.7])
    g = build_grid(X.L, 0.05)
    opt = optimize_weights(g.points, X, tol=1e-13)
    idx = np.searchsorted(g.points, opt.locations)
    w = np.zeros(len(g))
    w[idx] = opt.weights
    assert duality_gap(GridWeights(g, w), X) <= 1e-10


def test_round_small_atoms_examples() -> None:
    g = Grid(np.array([0.0, 1.0]), 0.5, 1.0)
    w = round_small_atoms(GridWeights(g, np.array([0.999, 0.001])), 0.01)
    assert w.weights.tolist() == [1.0, 0.0]
    same = GridWeights(g, np.array([0.6, 0.4]))
    assert round_small_atoms(same, 0.01) is same
    g4 = Grid(np.arange(4.0), 0.5, 4.0)
    with pytest.raises(TooMuchMassDropped):
        round_small_atoms(GridWeights(g4, np.full(4, 0.25)), 0.25)


def test_round_small_atoms_w1_change() -> None:
    rng = np.random.default_rng(2)
    X = make_dataset(rng.uniform(-2, 2, 10), 2.0)
    w = frank_wolfe(X, build_grid(2.0, 0.05), 300)
    for iota in (1e-3, 1e-2, 5e-2):
        try:
            r = round_small_atoms(w, iota)
        except TooMuchMassDropped:
            continue
        dropped = w.weights[w.weights <= iota].sum()
        assert w1_distance(w.to_mixture(), r.to_mixture()) <= 2 * 2.0 * dropped + 1e-12


def test_default_iota() -> None:
    assert default_iota(1.0, 16, 0.04) == pytest.approx(math.exp(-1) * 0.5 * 0.2)


def test_optimize_weights_examples() -> None:
    m = optimize_weights([0.7], make_dataset([-1.0, 2.0]))
    assert m.k == 1 and m.locations[0] == 0.7
    m = optimize_weights([-0.8, 0.0, 0.8], make_dataset([-0.8, 0.8]), tol=1e-13)
    assert m.k == 1 and m.locations[0] == 0.0


@given(datasets(max_n=10), st.sampled_from([0.2, 0.05, 0.01]))
@settings(max_examples=60, deadline=None)
def test_optimize_weights_kkt(X, eps: float) -> None:
    g = build_grid(X.L, eps)
    m = optimize_weights(g.points, X, tol=1e-12)
    inner, outer = kkt_residuals(m, X, g.points)
    assert inner <= 1e-12
    assert outer <= 1e-12
    assert m.weights.sum() == pytest.approx(1.0, abs=1e-14)


def test_optimize_weights_warm_start_agrees_with_cold() -> None:
    rng = np.random.default_rng(3)
    for _ in range(10):
        X = make_dataset(rng.uniform(-2, 2, 9), 2.0)
        g = build_grid(2.0, 0.01)
        cold = optimize_weights(g.points, X, tol=1e-13)
        fw = frank_wolfe(X, g, 500)
        warm = optimize_weights(g.points, X, tol=1e-13, p0=fw.weights)
        assert w1_distance(cold, warm) <= 1e-6
