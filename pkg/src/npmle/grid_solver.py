"""Candidate grids, Frank-Wolfe on a grid, rounding, and fixed-support weight fits."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import EpsilonOutOfRange, ExtraPointOutOfRange, NoConvergence, TooMuchMassDropped
from .kernel import Dataset, phi
from .mixtures import DiscreteMixture


@dataclass(frozen=True, eq=False)
class Grid:
    points: np.ndarray
    epsilon: float
    range_bound: float

    def __len__(self) -> int:
        return int(self.points.size)


@dataclass(frozen=True, eq=False)
class GridWeights:
    grid: Grid
    weights: np.ndarray
    gap_history: np.ndarray = field(default_factory=lambda: np.zeros(0))
    iterations: int = 0

    def to_mixture(self) -> DiscreteMixture:
        keep = self.weights > 0
        w = self.weights[keep]
        return DiscreteMixture(w / w.sum(), self.grid.points[keep])


def build_grid(L: float, epsilon: float, extra_points: Sequence[float] = ()) -> Grid:
    """Uniform grid on [-L, L] with spacing at most epsilon, plus extra points."""
    if not (0 < epsilon < L):
        raise EpsilonOutOfRange(f"need 0 < epsilon < L, got epsilon={epsilon}, L={L}")
    extra = np.asarray(extra_points, dtype=np.float64).reshape(-1)
    if extra.size and np.any(np.abs(extra) > L):
        raise ExtraPointOutOfRange("extra points must lie in [-L, L]")
    cells = math.ceil(2.0 * L / epsilon - 1e-12)
    base = np.linspace(-L, L, cells + 1)
    base[np.abs(base) < 1e-14 * L] = 0.0
    pts = np.unique(np.concatenate([base, extra]))
    pts.setflags(write=False)
    return Grid(points=pts, epsilon=float(epsilon), range_bound=float(L))


def _kernel_matrix(X: Dataset, support: np.ndarray) -> np.ndarray:
    return phi(X.points[:, None] - np.asarray(support)[None, :])


def _d_on(Phi: np.ndarray, w: np.ndarray) -> np.ndarray:
    P = Phi @ w
    return (1.0 / (Phi.shape[0] * P)) @ Phi


def frank_wolfe(
    X: Dataset,
    grid: Grid,
    iterations: int,
    gap_target: float | None = None,
) -> GridWeights:
    """Frank-Wolfe with step 2/(t+2), started at the grid point nearest 0.

    Stops after ``iterations`` steps, or earlier once the duality gap is at
    most ``gap_target``.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    Phi = _kernel_matrix(X, grid.points)
    w = np.zeros(len(grid))
    start = int(np.argmin(np.abs(grid.points)))
    w[start] = 1.0
    P = Phi[:, start].copy()
    gaps: list[float] = []
    t = 0
    while True:
        D = (1.0 / (Phi.shape[0] * P)) @ Phi
        best = int(np.argmax(D))  # first index = smallest location on ties
        gaps.append(float(D[best] - 1.0))
        if t >= iterations or (gap_target is not None and gaps[-1] <= gap_target):
            break
        s = 2.0 / (t + 2.0)
        w *= 1.0 - s
        w[best] += s
        P = (1.0 - s) * P + s * Phi[:, best]
        t += 1
    w /= w.sum()
    return GridWeights(grid=grid, weights=w, gap_history=np.asarray(gaps), iterations=t)


def duality_gap(w: GridWeights, X: Dataset) -> float:
    """max over the grid of D - 1.

    By concavity, l(pi_grid_opt) - l(pi) <= integral of (D_pi - 1) d pi_grid_opt,
    which is at most this number.
    """
    D = _d_on(_kernel_matrix(X, w.grid.points), w.weights)
    return float(D.max() - 1.0)


def weighted_duality_gap(w: GridWeights, X: Dataset) -> float:
    """The variant max_y (D(y) - 1)(1 - p(y)) with p(y) the mass at grid point y."""
    D = _d_on(_kernel_matrix(X, w.grid.points), w.weights)
    return float(np.max((D - 1.0) * (1.0 - w.weights)))


def default_iota(L: float, t: int, epsilon: float) -> float:
    return math.exp(-L * L) * max(t, 1) ** -0.25 * math.sqrt(epsilon)


def round_small_atoms(w: GridWeights, iota: float | None = None) -> GridWeights:
    if iota is None:
        iota = default_iota(w.grid.range_bound, w.iterations, w.grid.epsilon)
    small = w.weights <= iota
    dropped = float(w.weights[small].sum())
    if dropped >= 0.5:
        raise TooMuchMassDropped(f"rounding at iota={iota:.3g} would drop mass {dropped:.3g}")
    if not np.any(small & (w.weights > 0)):
        return w
    new = np.where(small, 0.0, w.weights)
    return replace(w, weights=new / new.sum())


def _loglik(Phi: np.ndarray, p: np.ndarray) -> float:
    return float(np.mean(np.log(Phi @ p)))


def _restricted_ipm(Phi: np.ndarray, p0: np.ndarray | None = None, max_iter: int = 200) -> tuple[np.ndarray, np.ndarray]:
    """Primal-dual interior point for max mean(log(Phi p)) over the simplex.

    Returns (p, mu) with mu the multipliers of p >= 0; at the optimum
    D = 1 - mu and p * mu = 0.
    """
    n, m = Phi.shape
    p = np.full(m, 1.0 / m) if p0 is None else 0.9 * p0 / p0.sum() + 0.1 / m
    P = Phi @ p
    g = (1.0 / (n * P)) @ Phi
    nu = float(np.max(g)) + 1e-3
    mu = nu - g
    ones = np.ones(m)
    for _ in range(max_iter):
        P = Phi @ p
        g = (1.0 / (n * P)) @ Phi
        gap = float(p @ mu) / m
        r_d = -g + nu - mu
        if gap < 1e-16 and np.max(np.abs(r_d)) < 1e-14 and abs(p.sum() - 1.0) < 1e-15:
            break
        tau = 0.1 * gap
        A = Phi / P[:, None]
        H = (A.T @ A) / n + np.diag(mu / p)
        rhs = -r_d + (tau - p * mu) / p
        K = np.zeros((m + 1, m + 1))
        K[:m, :m] = H
        K[:m, m] = ones
        K[m, :m] = ones
        sol = np.linalg.lstsq(K, np.concatenate([rhs, [1.0 - p.sum()]]), rcond=None)[0]
        dp, dnu = sol[:m], sol[m]
        dmu = (tau - p * mu - mu * dp) / p
        step = 1.0
        for v, dv in ((p, dp), (mu, dmu)):
            neg = dv < -1e-300
            if np.any(neg):
                step = min(step, 0.99 * float(np.min(-v[neg] / dv[neg])))
        p = p + step * dp
        mu = mu + step * dmu
        nu = nu + step * dnu
    return p / p.sum(), mu


def _face_polish(Phi: np.ndarray, p: np.ndarray, idx: np.ndarray, steps: int = 12) -> np.ndarray:
    """Newton on the face idx with sum(p) fixed; stops before leaving the face."""
    n = Phi.shape[0]
    for _ in range(steps):
        P = Phi @ p
        g = (1.0 / (n * P)) @ Phi
        if np.max(np.abs(g[idx] - 1.0)) < 1e-15:
            break
        A = Phi[:, idx] / P[:, None]
        Q = (A.T @ A) / n
        ones = np.ones(idx.size)
        K = np.block([[Q, ones[:, None]], [ones[None, :], np.zeros((1, 1))]])
        d = np.linalg.lstsq(K, np.concatenate([g[idx] - 1.0, [0.0]]), rcond=None)[0][: idx.size]
        trial = p.copy()
        trial[idx] += d
        if np.any(trial[idx] <= 0):
            if idx.size == 1:
                break
            # move to the face boundary and drop the blocking atom
            neg = d < 0
            ratio = np.full(idx.size, np.inf)
            ratio[neg] = -p[idx][neg] / d[neg]
            b = int(np.argmin(ratio))
            trial = p.copy()
            trial[idx] += ratio[b] * d
            trial[idx[b]] = 0.0
            trial = np.clip(trial, 0.0, None)
            idx = np.delete(idx, b)
        p = trial / trial.sum()
    return p


def optimize_weights(
    support: Sequence[float],
    X: Dataset,
    tol: float = 1e-12,
    p0: Sequence[float] | None = None,
    max_iter: int = 200,
) -> DiscreteMixture:
    """Maximize l_X over weights on a fixed support.

    Column generation: an interior-point solve on a small working set, exact
    face Newton polishing on the atoms it keeps, then the worst violators of
    D <= 1 on the full support join the working set. The output satisfies the
    simplex KKT conditions on the whole support to ``tol``.
    """
    s = np.asarray(support, dtype=np.float64).reshape(-1)
    if s.size == 0:
        raise ValueError("empty support")
    if s.size > 1 and np.any(np.diff(s) <= 0):
        raise ValueError("support must be sorted and distinct")
    if s.size == 1:
        return DiscreteMixture(np.array([1.0]), s.copy())
    Phi = _kernel_matrix(X, s)
    n, k = Phi.shape
    if p0 is None:
        p = np.full(k, 1.0 / k)
        for _ in range(100):  # multiplicative EM warm start, stays on the simplex
            p = p * _d_on(Phi, p)
            p /= p.sum()
    else:
        p = np.clip(np.asarray(p0, dtype=np.float64).reshape(-1), 0.0, None)
        if p.shape != s.shape or p.sum() <= 0:
            raise ValueError("p0 must be a non-negative vector matching the support")
    # start from the local peaks of the warm start
    padded = np.concatenate([[-1.0], p, [-1.0]])
    work = np.flatnonzero((p > 0) & (p >= padded[:-2]) & (p >= padded[2:]))
    p_work = p[work]

    inner = outer = np.inf
    for _ in range(max_iter):
        pw, mu = _restricted_ipm(Phi[:, work], p_work)
        keep = pw > mu
        p = np.zeros(k)
        p[work[keep]] = pw[keep]
        p /= p.sum()
        idx = np.flatnonzero(p > 0)
        p = _face_polish(Phi, p, idx)
        idx = np.flatnonzero(p > 0)
        g = _d_on(Phi, p)
        inner = float(np.max(np.abs(g[idx] - 1.0)))
        viol = g - 1.0
        viol[idx] = -np.inf
        outer = float(viol.max())
        if inner <= tol and outer <= tol:
            break
        # add the local maxima of the violation, largest first
        padded = np.concatenate([[-np.inf], viol, [-np.inf]])
        cand = np.flatnonzero((viol > tol) & (viol >= padded[:-2]) & (viol >= padded[2:]))
        cand = cand[np.argsort(-viol[cand])][:10]
        # the working set only grows, except for clearly inactive points
        if work.size > 60:
            work = work[(p[work] > 0) | (g[work] > 1.0 - 1e-3)]
        work = np.union1d(work, cand)
        p_work = np.where(p[work] > 0, p[work], 1e-3 / work.size)
    else:
        raise NoConvergence(f"optimize_weights hit {max_iter} rounds (residuals {inner:.3e}, {outer:.3e})")
    return DiscreteMixture(p[idx] / p[idx].sum(), s[idx])


def kkt_residuals(m: DiscreteMixture, X: Dataset, support: Sequence[float] | None = None) -> tuple[float, float]:
    """(max |D - 1| on supp(m), max (D - 1) over the candidate support)."""
    Phi_m = _kernel_matrix(X, m.locations)
    P = Phi_m @ m.weights
    inner = float(np.max(np.abs((1.0 / (X.n * P)) @ Phi_m - 1.0)))
    if support is None:
        return inner, inner
    Phi_s = _kernel_matrix(X, np.asarray(support, dtype=np.float64))
    outer = float(np.max((1.0 / (X.n * P)) @ Phi_s - 1.0))
    return inner, outer
