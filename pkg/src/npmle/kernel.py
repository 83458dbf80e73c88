"""Gaussian-location mixture density, log-likelihood and the gradient function D.

For a mixture m and data X the gradient function is

    D(y) = (1/n) sum_i phi(x_i - y) / P_m(x_i),

the directional derivative of the log-likelihood toward adding mass at y.
Its derivatives are Hermite polynomials times the Gaussian kernel. This
module also produces rigorous upper bounds on D over intervals, which the
certifier relies on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import hermite_e

from .errors import InvalidInterval, OrderTooLarge
from .mixtures import DiscreteMixture

SQRT_2PI = math.sqrt(2.0 * math.pi)
PHI0 = 1.0 / SQRT_2PI
MAX_HERMITE_ORDER = 8
MAX_D_ORDER = 3
# absolute allowance for rounding error in evaluated D values
EVAL_MARGIN = 1e-13
_CHUNK = 1 << 21


@dataclass(frozen=True, eq=False)
class Dataset:
    """Sorted sample with range bound L >= max(1, max |x_i|)."""

    points: np.ndarray
    range_bound: float

    def __post_init__(self) -> None:
        x = np.sort(np.asarray(self.points, dtype=np.float64).reshape(-1))
        if x.size == 0:
            raise ValueError("dataset must contain at least one point")
        if not np.all(np.isfinite(x)):
            raise ValueError("data must be finite")
        L = float(self.range_bound)
        if L < float(np.max(np.abs(x))):
            raise ValueError(f"range_bound {L} smaller than max |x_i|")
        x.setflags(write=False)
        object.__setattr__(self, "points", x)
        object.__setattr__(self, "range_bound", max(L, 1.0))

    @property
    def n(self) -> int:
        return int(self.points.size)

    @property
    def L(self) -> float:
        return self.range_bound


def make_dataset(points: Sequence[float], range_bound: float | None = None) -> Dataset:
    x = np.asarray(points, dtype=np.float64)
    L = float(np.max(np.abs(x))) if range_bound is None else float(range_bound)
    return Dataset(x, max(L, 1.0))


@dataclass(frozen=True)
class DerivativeBounds:
    order: int
    sup_bound: float
    lipschitz_in_w1: float


def phi(t: np.ndarray | float) -> np.ndarray | float:
    return np.exp(-0.5 * np.square(t)) * PHI0


def _check_hermite_order(j: int, limit: int) -> None:
    if not (0 <= int(j) <= limit) or int(j) != j:
        raise OrderTooLarge(f"order {j} outside [0, {limit}]")


def hermite(j: int, t: np.ndarray | float) -> np.ndarray | float:
    """H_j(t) = e^{t^2/2} (d/dt)^j e^{-t^2/2}, so H_1(t) = -t and H_3(t) = 3t - t^3."""
    _check_hermite_order(j, MAX_HERMITE_ORDER)
    t = np.asarray(t, dtype=np.float64)
    h_prev, h = np.ones_like(t), -t
    if j == 0:
        return h_prev if h_prev.ndim else float(h_prev)
    for i in range(1, j):
        h_prev, h = h, -t * h - i * h_prev
    return h if h.ndim else float(h)


@lru_cache(maxsize=None)
def _hermite_critical_points(j: int) -> tuple[float, ...]:
    """Real critical points of H_j(t) e^{-t^2/2}, i.e. the roots of H_{j+1}."""
    coeffs = np.zeros(j + 2)
    coeffs[-1] = 1.0
    roots = hermite_e.hermeroots(coeffs)
    return tuple(float(r) for r in np.real(roots[np.abs(np.imag(roots)) < 1e-12]))


@lru_cache(maxsize=None)
def kernel_sup(j: int) -> float:
    """M_j = sup_t |H_j(t) e^{-t^2/2}|, evaluated at the roots of H_{j+1}."""
    _check_hermite_order(j, MAX_HERMITE_ORDER)
    crit = np.array(_hermite_critical_points(j) + (0.0,))
    vals = np.abs(hermite(j, crit) * np.exp(-0.5 * crit**2))
    return float(vals.max())


def _kernel_abs_sup_on(j: int, tlo: np.ndarray, thi: np.ndarray) -> np.ndarray:
    """Elementwise sup over t in [tlo, thi] of |H_j(t)| phi(t)."""
    g = lambda t: np.abs(hermite(j, t)) * phi(t)
    out = np.maximum(g(tlo), g(thi))
    for r in _hermite_critical_points(j):
        inside = (tlo <= r) & (r <= thi)
        if np.any(inside):
            out = np.where(inside, np.maximum(out, abs(hermite(j, r)) * phi(r)), out)
    return out


def densities(m: DiscreteMixture, x: np.ndarray) -> np.ndarray:
    """P_m evaluated at each entry of x."""
    x = np.asarray(x, dtype=np.float64)
    t = x.reshape(-1, 1) - m.locations.reshape(1, -1)
    return (phi(t) @ m.weights).reshape(x.shape)


def mixture_density(m: DiscreteMixture, x: float) -> float:
    return float(densities(m, np.asarray([x]))[0])


def log_likelihood(m: DiscreteMixture, X: Dataset) -> float:
    return float(np.mean(np.log(densities(m, X.points))))


class DProfile:
    """D_{m,X} and its derivatives with the data-side factors precomputed."""

    def __init__(self, m: DiscreteMixture, X: Dataset):
        self.m = m
        self.X = X
        self.x = X.points
        self.P = densities(m, X.points)
        self.u = 1.0 / (X.n * self.P)

    def __call__(self, y: np.ndarray | float, j: int = 0) -> np.ndarray:
        _check_hermite_order(j, MAX_HERMITE_ORDER)
        y = np.asarray(y, dtype=np.float64)
        flat = y.reshape(-1)
        out = np.empty(flat.size)
        step = max(1, _CHUNK // max(self.x.size, 1))
        for s in range(0, flat.size, step):
            t = flat[s : s + step, None] - self.x[None, :]
            ker = phi(t)
            if j:
                ker = ker * hermite(j, t)
            out[s : s + step] = ker @ self.u
        return out.reshape(y.shape)

    def mean_inv_density(self) -> float:
        return float(np.sum(self.u))

    def sup_abs_bound(self, j: int) -> float:
        """Data-dependent bound on sup_y |D^{(j)}(y)| for this fixed m."""
        return kernel_sup(j) * PHI0 * self.mean_inv_density()

    def local_abs_bound(self, j: int, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Bound on sup over [a_c, b_c] of |D^{(j)}| for each cell c."""
        a = np.asarray(a, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        out = np.empty(a.size)
        step = max(1, _CHUNK // max(self.x.size, 1))
        for s in range(0, a.size, step):
            tlo = a[s : s + step, None] - self.x[None, :]
            thi = b[s : s + step, None] - self.x[None, :]
            out[s : s + step] = _kernel_abs_sup_on(j, tlo, thi) @ self.u
        return out


def d_derivative(m: DiscreteMixture, X: Dataset, y: float, j: int = 0) -> float:
    """j-th derivative of D_{m,X} at y (0 <= j <= 3).

    Differentiating phi(x_i - y) in y gives H_j(y - x_i) phi(x_i - y).
    """
    _check_hermite_order(j, MAX_D_ORDER)
    return float(DProfile(m, X)(np.asarray([y]), j)[0])


def expected_d_identity(m: DiscreteMixture, X: Dataset) -> float:
    """sum_j p_j D(y_j); equals 1 for every m and X."""
    prof = DProfile(m, X)
    return float(np.dot(m.weights, prof(m.locations)))


def derivative_bound(j: int, L: float) -> DerivativeBounds:
    """Generic bounds valid for any m, X supported in [-L, L].

    Uses P_m(x) >= e^{-2L^2} phi(0) and sup|phi'| = e^{-1/2} phi(0).
    """
    _check_hermite_order(j, MAX_D_ORDER)
    Mj = kernel_sup(j)
    return DerivativeBounds(
        order=int(j),
        sup_bound=Mj * math.exp(2.0 * L * L),
        lipschitz_in_w1=Mj * math.exp(-0.5) * math.exp(4.0 * L * L),
    )


def loglik_lipschitz(L: float) -> float:
    """|l(pi) - l(pi')| <= this * W1(pi, pi') for pi, pi' on [-L, L]."""
    return math.exp(-0.5) * math.exp(2.0 * L * L)


def _branch_and_bound_sup(
    f: Callable[[np.ndarray], np.ndarray],
    curv: Callable[[np.ndarray, np.ndarray], np.ndarray],
    a: float,
    b: float,
    slack: float,
    max_rounds: int = 80,
) -> tuple[float, float]:
    """Rigorous sup of a C^2 function on [a, b].

    On a cell of width w with |f''| <= B, f <= max(endpoint values) + B w^2 / 8.
    Cells whose bound falls below the best evaluated value are discarded; the
    rest are bisected. The refinement sequence does not depend on ``slack``,
    only the stopping round does, and the returned bound is the minimum over
    rounds, so it is non-increasing as slack shrinks.

    Returns (upper, lower) with lower <= sup <= upper.
    """
    if b - a <= 0:
        v = float(f(np.asarray([a]))[0])
        return v, v
    n0 = int(min(max(8, math.ceil((b - a) / 0.05)), 20000))
    edges = np.linspace(a, b, n0 + 1)
    vals = f(edges)
    left, right = edges[:-1], edges[1:]
    fl, fr = vals[:-1], vals[1:]
    parent_ub = np.full(left.size, np.inf)
    lower = float(vals.max())
    upper = np.inf
    for _ in range(max_rounds):
        width = right - left
        ub = np.maximum(fl, fr) + curv(left, right) * width**2 / 8.0
        ub = np.minimum(ub, parent_ub)
        upper = min(upper, float(ub.max()))
        if upper - lower <= slack or width.max() < 1e-13 * max(1.0, abs(a), abs(b)):
            break
        keep = ub >= lower
        left, right, fl, fr, ub = left[keep], right[keep], fl[keep], fr[keep], ub[keep]
        mid = 0.5 * (left + right)
        fm = f(mid)
        lower = max(lower, float(fm.max()))
        left = np.concatenate([left, mid])
        right = np.concatenate([mid, right])
        fl, fr = np.concatenate([fl, fm]), np.concatenate([fm, fr])
        parent_ub = np.concatenate([ub, ub])
    return upper, lower


def rigorous_sup(prof: DProfile, j: int, lo: float, hi: float, slack: float) -> float:
    """Proved U with sup_{[lo,hi]} D^{(j)} <= U <= sup + slack (up to rounding).

    For j = 0 the interval may be unbounded: each term of D increases in y
    left of its data point and decreases right of it, so D is increasing on
    (-inf, min x] and decreasing on [max x, inf).
    """
    if not (lo < hi) or math.isnan(lo) or math.isnan(hi):
        raise InvalidInterval(f"need lo < hi, got [{lo}, {hi}]")
    if not slack > 0:
        raise ValueError("slack must be > 0")
    margin = min(EVAL_MARGIN, 0.25 * slack)
    if j == 0:
        xmin, xmax = float(prof.x[0]), float(prof.x[-1])
        if lo >= xmax:
            return float(prof(np.asarray([lo]))[0]) + margin
        if hi <= xmin:
            return float(prof(np.asarray([hi]))[0]) + margin
        lo, hi = max(lo, xmin), min(hi, xmax)
        if hi <= lo:
            return float(prof(np.asarray([lo]))[0]) + margin
    elif not (math.isfinite(lo) and math.isfinite(hi)):
        raise InvalidInterval("derivative sups need a bounded interval")
    target = slack - margin
    upper, _ = _branch_and_bound_sup(
        lambda y: prof(y, j),
        lambda a, b: prof.local_abs_bound(j + 2, a, b),
        lo,
        hi,
        target,
    )
    return upper + margin


def sup_d_over_interval(
    m: DiscreteMixture, X: Dataset, lo: float, hi: float, slack: float
) -> float:
    """Rigorous upper bound on sup of D_m over [lo, hi], tight to within slack."""
    return rigorous_sup(DProfile(m, X), 0, lo, hi, slack)
