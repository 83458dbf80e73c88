"""EM for k-atom Gaussian location mixtures with fixed unit variance."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import AtomCollision
from .kernel import Dataset, DProfile, log_likelihood
from .mixtures import DiscreteMixture, param_distance
from .newton import gamma

STATIONARY_TOL = 1e-8


@dataclass(frozen=True)
class EmTrace:
    iterates: list = field(default_factory=list)
    param_errors: list = field(default_factory=list)
    rate_estimate: float | None = None
    logliks: list = field(default_factory=list)

    @property
    def monotone(self) -> bool:
        ll = np.asarray(self.logliks)
        return bool(np.all(np.diff(ll) >= -1e-12))


@dataclass(frozen=True)
class EmSpectrum:
    moduli: np.ndarray
    interpretable: bool

    @property
    def spectral_radius(self) -> float:
        return float(self.moduli[0])


def _em_map(theta: np.ndarray, X: Dataset) -> np.ndarray:
    """Both updates from the old parameters: p_j D(y_j) and y_j + D'(y_j) / D(y_j)."""
    k = theta.size // 2
    m = DiscreteMixture(theta[:k], theta[k:])
    prof = DProfile(m, X)
    D0 = prof(m.locations)
    D1 = prof(m.locations, 1)
    return np.concatenate([m.weights * D0, m.locations + D1 / D0])


def em_step(m: DiscreteMixture, X: Dataset) -> DiscreteMixture:
    new = _em_map(m.theta(), X)
    k = m.k
    p, y = new[:k], new[k:]
    if k > 1 and np.any(np.diff(y) <= 0):
        raise AtomCollision("EM update made atom locations cross or coincide")
    return DiscreteMixture(p / p.sum(), y)


def em_solve(
    m0: DiscreteMixture,
    X: Dataset,
    tol: float = 1e-12,
    max_iter: int = 10_000,
    reference: DiscreteMixture | None = None,
) -> EmTrace:
    if not tol > 0:
        raise ValueError("tol must be > 0")
    iterates = [m0]
    lls = [log_likelihood(m0, X)]
    for _ in range(max_iter):
        nxt = em_step(iterates[-1], X)
        step = param_distance(nxt, iterates[-1])
        iterates.append(nxt)
        lls.append(log_likelihood(nxt, X))
        if step <= tol:
            break
    errors: list[float] = []
    rate = None
    if reference is not None:
        errors = [param_distance(m, reference) for m in iterates]
        e = np.asarray(errors[-11:])
        ok = (e[:-1] > 1e-14) & (e[1:] > 0)
        if np.any(ok):
            rate = float(np.median(e[1:][ok] / e[:-1][ok]))
    return EmTrace(iterates=iterates, param_errors=errors, rate_estimate=rate, logliks=lls)


def em_jacobian_spectrum(m: DiscreteMixture, X: Dataset, step: float = 1e-6) -> EmSpectrum:
    """Eigenvalue moduli (descending) of the EM map's Jacobian, by central differences.

    Only meaningful at a stationary point; ``interpretable`` says whether the
    stationarity residual is below 1e-8.
    """
    theta = m.theta()
    dim = theta.size
    J = np.empty((dim, dim))
    for c in range(dim):
        e = np.zeros(dim)
        e[c] = step
        J[:, c] = (_em_map(theta + e, X) - _em_map(theta - e, X)) / (2.0 * step)
    moduli = np.sort(np.abs(np.linalg.eigvals(J)))[::-1]
    residual = float(np.max(np.abs(gamma(m, X))))
    return EmSpectrum(moduli=moduli, interpretable=bool(residual <= STATIONARY_TOL and math.isfinite(residual)))
