import math

import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from npmle.certifier import (
    certify_global_max,
    certify_static_support,
    certify_support,
    certify_support_lower,
    certify_support_upper,
    certify_w1,
    diagnostics,
    hessian_lambda,
    hessian_matrix,
    off_support_gap,
)
from npmle.errors import SupportNotInS
from npmle.grid_solver import build_grid, optimize_weights
from npmle.kernel import log_likelihood, make_dataset
from npmle.mixtures import DiscreteMixture, make_mixture, merge_adjacent, point_mass, w1_distance
from strategies import random_instance

SYM = make_dataset([-0.8, 0.8])
WIDE = make_dataset([-1.5, 1.5])


def cosh_profile_max(a: float) -> float:
    res = minimize_scalar(lambda y: -math.exp(-0.5 * y * y) * math.cosh(a * y), bounds=(0, 3), method="bounded",
                          options={"xatol": 1e-12})
    return -res.fun


def test_global_max_examples() -> None:
    assert certify_global_max(point_mass(0.0), make_dataset([0.0]), 1e-9) <= 1e-9
    assert certify_global_max(point_mass(0.0), SYM, 1e-9) <= 1e-9
    d = certify_global_max(point_mass(0.0), WIDE, 1e-9)
    true = cosh_profile_max(1.5) - 1
    assert true <= d <= true + 1e-9


def test_off_support_gap_examples() -> None:
    c2 = off_support_gap(point_mass(0.0), make_dataset([0.0]), 1.0, 1e-9)
    assert c2 == pytest.approx(1 - math.exp(-0.5), abs=1e-9)
    assert off_support_gap(point_mass(0.0), WIDE, 0.2, 1e-9) < 0
    assert off_support_gap(point_mass(0.0), make_dataset([0.0]), 5.0, 1e-9) > 0.99


def test_hessian_lambda_examples() -> None:
    assert hessian_lambda(point_mass(0.0), SYM) == math.inf
    X = make_dataset([-2.0, 2.0])
    m = optimize_weights(build_grid(2.0, 0.01).points, X, tol=1e-13)
    assert m.k == 2
    assert hessian_lambda(m, X) > 0


def _loglik_weights(m: DiscreteMixture, X, p: np.ndarray) -> float:
    return log_likelihood(DiscreteMixture(p, m.locations), X)


def test_hessian_matches_directional_finite_differences() -> None:
    rng = np.random.default_rng(0)
    checked = 0
    while checked < 20:
        m, X = random_instance(rng, max_k=4)
        if m.k < 2:
            continue
        H = hessian_matrix(m, X)
        d = rng.normal(size=m.k)
        d -= d.mean()
        d /= np.linalg.norm(d)
        h = 1e-4
        f = lambda s: _loglik_weights(m, X, m.weights + s * d)  # noqa: E731
        fd = (f(h) - 2 * f(0) + f(-h)) / h**2
        exact = float(d @ H @ d)
        assert abs(fd - exact) <= 1e-5 * abs(exact)
        # lambda is a lower bound for the curvature along any zero-sum direction
        assert hessian_lambda(m, X) <= -exact + 1e-12
        checked += 1


def test_hessian_lambda_is_attained_direction() -> None:
    rng = np.random.default_rng(1)
    for _ in range(10):
        m, X = random_instance(rng, max_k=3)
        if m.k < 2:
            continue
        H = hessian_matrix(m, X)
        Q = np.linalg.qr(np.eye(m.k) - 1.0 / m.k)[0][:, : m.k - 1]
        vals, vecs = np.linalg.eigh(Q.T @ -H @ Q)
        lam = hessian_lambda(m, X)
        assert lam <= vals[0] and vals[0] - lam <= 1e-9 * np.linalg.norm(H, 2) + 1e-15


def test_certify_w1_examples() -> None:
    cert = certify_w1(point_mass(0.0), SYM, slack=1e-12)
    assert cert.proved
    assert cert.lam == math.inf
    assert cert.w1_bound < 0.1
    assert certify_w1(point_mass(0.0), WIDE, c1=0.2).reason.startswith("condition 1")
    bad = make_mixture([0.9, 0.1], [-0.5, 0.5])
    assert certify_w1(bad, SYM).reason.startswith("premise")


def test_certificate_fields_replay() -> None:
    cert = certify_w1(point_mass(0.0), SYM, slack=1e-12)
    ch = cert.constant_chain
    assert ch["w1_bound"] == cert.w1_bound
    assert ch["w1_bound"] == pytest.approx(ch["rho"] + ch["weight_shift_bound"] * ch["weight_transport_factor"])
    assert cert.eta == pytest.approx(cert.c1 + SYM.L * cert.delta / cert.c2)


def test_support_lower_examples() -> None:
    assert certify_support_lower(point_mass(0.0), 10.0)
    m = make_mixture([0.3, 0.7], [0.0, 2.0])
    assert certify_support_lower(m, 0.1)
    assert not certify_support_lower(m, 0.3)


def test_support_upper_examples() -> None:
    m = point_mass(0.0)
    assert certify_support_upper(m, SYM, 1e-6, 1e-2)
    assert not certify_support_upper(m, SYM, 1.0, 1e-2)
    # X = {-1, 1} puts an inflection of D at the single atom
    assert not certify_support_upper(m, make_dataset([-1.0, 1.0]), 1e-6, 1e-2)


def test_certify_support_proves_k1() -> None:
    cert = certify_support(certify_w1(point_mass(0.0), SYM, slack=1e-12), SYM, slack=1e-12)
    assert cert.support_count_proved == 1


def test_static_examples() -> None:
    for X in (SYM, WIDE, make_dataset([0.3])):
        assert certify_static_support(point_mass(0.0), X, [0.0]).proved
    cert = certify_static_support(point_mass(0.0), SYM, [-0.8, 0.0, 0.8])
    assert cert.proved
    assert cert.c2 > 0
    D08 = math.exp(-0.32) * math.cosh(0.64)
    assert cert.c2 == pytest.approx(1 - D08, abs=1e-9)
    assert not certify_static_support(point_mass(0.0), WIDE, [-1.5, 0.0, 1.5]).proved
    with pytest.raises(SupportNotInS):
        certify_static_support(point_mass(0.1), SYM, [0.0])


def test_decreasing_slack_keeps_proved() -> None:
    rng = np.random.default_rng(2)
    for _ in range(15):
        X = make_dataset(rng.uniform(-2, 2, int(rng.integers(1, 9))), 2.0)
        m = merge_adjacent(optimize_weights(build_grid(2.0, 0.05).points, X, tol=1e-13), 0.075)
        m = optimize_weights(m.locations, X, tol=1e-13)
        c1 = 0.1
        status = [certify_w1(m, X, c1=c1, slack=s).proved for s in (1e-4, 1e-7, 1e-10)]
        assert status == sorted(status)


def test_diagnostics_two_point() -> None:
    d = diagnostics(point_mass(0.0), SYM)
    assert d.A_hat == pytest.approx(1 - 0.64)
    assert d.a_hat > 0 and d.B_hat > 0


def test_soundness_on_small_sample() -> None:
    # oracle: exact optimum on a grid of spacing 1e-3, merged at 1.5e-3
    rng = np.random.default_rng(5)
    for _ in range(8):
        X = make_dataset(rng.uniform(-2, 2, int(rng.integers(1, 8))), 2.0)
        oracle = merge_adjacent(optimize_weights(build_grid(2.0, 1e-3).points, X, tol=1e-13), 1.5e-3)
        cand = merge_adjacent(optimize_weights(build_grid(2.0, 0.05).points, X, tol=1e-13), 0.075)
        cand = optimize_weights(cand.locations, X, tol=1e-13)
        cert = certify_w1(cand, X, slack=1e-12)
        if cert.proved:
            assert w1_distance(cand, oracle) <= cert.w1_bound + 1e-3
