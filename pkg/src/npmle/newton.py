"""Newton's method on the 2k stationarity system and a Kantorovich check.

The unknowns are theta = (p_1..p_k, y_1..y_k) with the simplex constraint
relaxed. The system is gamma(theta) = (D(y_a) - 1, D'(y_a))_a. Every zero has
sum(p) = 1 automatically, because sum_a p_a D(y_a) = 1 for any positive p.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import SingularJacobian
from .kernel import Dataset, DProfile, _kernel_abs_sup_on, phi
from .mixtures import DiscreteMixture

COND_LIMIT = 1e14


@dataclass(frozen=True)
class ShubSmaleReport:
    alpha: float
    beta: float
    lipC: float
    h: float
    r: float
    proved: bool
    boundary_distance: float = math.nan
    sigma_min: float = math.nan

    def error_envelope(self, t: int) -> float:
        """Bound on d(pi_t, pi_limit) after t Newton steps, when proved."""
        if not self.proved:
            return math.inf
        if self.h == 0:
            return 0.0 if t > 0 else self.alpha
        q = self.h ** (2**t)
        return self.alpha * self.h ** (2**t - 1) / (1.0 - q)


@dataclass(frozen=True)
class NewtonTrace:
    iterates: list = field(default_factory=list)
    residual_norms: list = field(default_factory=list)
    failed: bool = False
    reason: str = ""

    @property
    def final(self) -> DiscreteMixture:
        return self.iterates[-1]


def _blocks(m: DiscreteMixture, X: Dataset):
    x = X.points
    t = x[:, None] - m.locations[None, :]
    ph = phi(t)
    ps = t * ph
    ch = (t * t - 1.0) * ph
    P = ph @ m.weights
    return ph, ps, ch, P


def gamma(m: DiscreteMixture, X: Dataset) -> np.ndarray:
    """(D(y_1)-1, ..., D(y_k)-1, D'(y_1), ..., D'(y_k))."""
    prof = DProfile(m, X)
    return np.concatenate([prof(m.locations) - 1.0, prof(m.locations, 1)])


def gamma_jacobian(m: DiscreteMixture, X: Dataset) -> np.ndarray:
    """Analytic 2k x 2k Jacobian of gamma in (p, y)."""
    n = X.n
    ph, ps, ch, P = _blocks(m, X)
    u = 1.0 / P
    u2 = (u * u)[:, None]
    p = m.weights
    D1 = (ps.T @ u) / n
    D2 = (ch.T @ u) / n
    dD_dp = -(ph.T @ (ph * u2)) / n
    dD_dy = np.diag(D1) - (ph.T @ (ps * u2)) / n * p[None, :]
    dD1_dp = -(ps.T @ (ph * u2)) / n
    dD1_dy = np.diag(D2) - (ps.T @ (ps * u2)) / n * p[None, :]
    return np.block([[dD_dp, dD_dy], [dD1_dp, dD1_dy]])


def _relaxed(theta: np.ndarray) -> DiscreteMixture:
    k = theta.size // 2
    return DiscreteMixture(theta[:k], theta[k:])


def _newton_step(m: DiscreteMixture, X: Dataset) -> tuple[np.ndarray, np.ndarray]:
    g = gamma(m, X)
    J = gamma_jacobian(m, X)
    if not np.all(np.isfinite(J)) or np.linalg.cond(J) > COND_LIMIT:
        raise SingularJacobian("Jacobian condition number exceeds 1e14")
    return scipy.linalg.lu_solve(scipy.linalg.lu_factor(J), -g), g


def newton_solve(m0: DiscreteMixture, X: Dataset, tol: float = 1e-12, max_iter: int = 50) -> NewtonTrace:
    """Plain Newton iteration; stops with failure if an iterate leaves Pi_k."""
    if not tol > 0:
        raise ValueError("tol must be > 0")
    iterates = [m0]
    res: list[float] = []
    m = m0
    for _ in range(max_iter + 1):
        g = gamma(m, X)
        res.append(float(np.max(np.abs(g))))
        if res[-1] <= tol or len(iterates) > max_iter:
            break
        step, _ = _newton_step(m, X)
        theta = m.theta() + step
        k = m.k
        if np.any(theta[:k] <= 0):
            return NewtonTrace(iterates, res, True, "an iterate has a non-positive weight")
        if k > 1 and np.any(np.diff(theta[k:]) <= 0):
            return NewtonTrace(iterates, res, True, "iterate locations are no longer ordered")
        m = _relaxed(theta)
        iterates.append(m)
    failed = res[-1] > tol
    return NewtonTrace(iterates, res, failed, "iteration cap reached" if failed else "")


def _boundary_distance(m: DiscreteMixture) -> float:
    d = float(m.weights.min())
    if m.k > 1:
        d = min(d, float(np.diff(m.locations).min()) / math.sqrt(2.0))
    return d


def jacobian_lipschitz(m: DiscreteMixture, X: Dataset, r: float) -> float:
    """Bound on ||J(theta) - J(theta')||_2 / |theta - theta'| over the r-ball at m.

    Each Jacobian entry is a data average of products of the kernels
    phi, (x-y) phi, ((x-y)^2-1) phi, ((x-y)^3-3(x-y)) phi and powers of 1/P.
    Its gradient is bounded term by term, with every kernel replaced by its
    sup over |y - y_a| <= r and 1/P by its sup over the ball. The Frobenius
    norm of the resulting entry-gradient bounds bounds the operator norm.
    Returns inf if P could vanish on the ball.
    """
    k, n = m.k, X.n
    x = X.points[:, None]
    lo = x - m.locations[None, :] - r
    hi = x - m.locations[None, :] + r
    f, ps, ch, om = (_kernel_abs_sup_on(j, lo, hi) for j in range(4))
    # smallest kernel value on the ball, with weights at least p_b - r
    phi_min = phi(np.maximum(np.abs(lo), np.abs(hi)))
    P_low = phi_min @ np.maximum(m.weights - r, 0.0)
    if np.any(P_low <= 0):
        return math.inf
    U = 1.0 / P_low
    pb = m.weights + r
    eye = np.eye(k)

    def s1(K):
        return np.einsum("ia,i->a", K, U) / n

    def s2(K1, K2):
        return np.einsum("ia,ib,i->ab", K1, K2, U**2) / n

    def s3(K1, K2, K3):
        return np.einsum("ia,ib,ic,i->abc", K1, K2, K3, U**3) / n

    E_ca = np.broadcast_to(eye[:, None, :], (k, k, k))
    E_cb = np.broadcast_to(eye[None, :, :], (k, k, k))
    E_ab = np.broadcast_to(eye[:, :, None], (k, k, k))
    P_c = pb[None, None, :]
    P_b = pb[None, :, None]

    def ab(M):  # broadcast an (a, b) matrix over c
        return M[:, :, None]

    def ac(M):  # broadcast an (a, c) matrix over b
        return M[:, None, :]

    def a_(v):
        return v[:, None, None]

    blocks = [
        (
            2 * s3(f, f, f),
            E_ca * ab(s2(ps, f)) + E_cb * ab(s2(f, ps)) + 2 * s3(f, f, ps) * P_c,
        ),
        (
            E_ab * ac(s2(ps, f)) + E_cb * ab(s2(f, ps)) + 2 * P_b * s3(f, ps, f),
            E_ab * (E_ca * a_(s1(ch)) + ac(s2(ps, ps)) * P_c)
            + P_b * (E_ca * ab(s2(ps, ps)) + E_cb * ab(s2(f, ch)))
            + 2 * P_b * P_c * s3(f, ps, ps),
        ),
        (
            2 * s3(ps, f, f),
            E_ca * ab(s2(ch, f)) + E_cb * ab(s2(ps, ps)) + 2 * s3(ps, f, ps) * P_c,
        ),
        (
            E_ab * ac(s2(ch, f)) + E_cb * ab(s2(ps, ps)) + 2 * P_b * s3(ps, ps, f),
            E_ab * (E_ca * a_(s1(om)) + ac(s2(ch, ps)) * P_c)
            + P_b * (E_ca * ab(s2(ch, ps)) + E_cb * ab(s2(ps, ch)))
            + 2 * P_b * P_c * s3(ps, ps, ps),
        ),
    ]
    total = sum(float(np.sum(gp**2) + np.sum(gy**2)) for gp, gy in blocks)
    return math.sqrt(total)


def shub_smale_check(m: DiscreteMixture, X: Dataset) -> ShubSmaleReport:
    """Kantorovich test at m with h = alpha * beta * C.

    beta bounds ||J^{-1}|| on the whole r-ball through Weyl's inequality
    sigma_min(J(theta)) >= sigma_min(J(m)) - C r; r is then updated from h
    until the ball used for beta contains the ball the theorem needs.
    """
    J = gamma_jacobian(m, X)
    g = gamma(m, X)
    sigma = float(np.linalg.svd(J, compute_uv=False).min())
    bdist = _boundary_distance(m)
    fail = dict(proved=False, boundary_distance=bdist, sigma_min=sigma)
    if sigma <= 0 or not np.all(np.isfinite(J)):
        return ShubSmaleReport(math.inf, math.inf, math.inf, math.inf, math.inf, **fail)
    alpha = float(np.linalg.norm(np.linalg.solve(J, -g)))
    r_test = max(alpha, 1e-300) * 1.05
    beta = C = h = math.inf
    for _ in range(30):
        C = jacobian_lipschitz(m, X, r_test)
        slack = sigma - C * r_test
        if not (slack > 0 and math.isfinite(C)):
            beta, h = math.inf, math.inf
            break
        beta = 1.0 / slack
        h = alpha * beta * C
        if h >= 1:
            break
        r_new = alpha / (1.0 - h)
        if r_new <= r_test:
            proved = r_test < bdist
            return ShubSmaleReport(alpha, beta, C, h, r_test, proved, bdist, sigma)
        r_test = r_new * 1.05
    return ShubSmaleReport(alpha, beta, C, h, math.inf, **fail)
