"""A-posteriori certificates for a candidate mixture.

Given a candidate m (normally an exact optimum on its own support) the
certifier proves, from quantities it measures rigorously, that the true NPMLE
pi_hat is close to m in W1 and, when the atoms are well separated and sharply
peaked, that pi_hat has exactly as many atoms as m.

All constants are explicit and data dependent. They are stored by name in
``Certificate.constant_chain`` so the chain of inequalities can be replayed.
The bound on W1(pi_hat, m) is assembled as follows (P_i = P_m(x_i)):

* delta bounds sup D_m - 1 on the line; c2(c) bounds 1 - sup D_m on points at
  distance >= c from supp(m).
* Concavity of l gives pi_hat{dist >= c} <= delta / (delta + c2(c)); summing
  over a geometric ladder of c gives rho >= integral of dist(y, supp m) d pi_hat.
* Let q be the masses pi_hat puts on the nearest-atom cells and v = q - p.
  With log(1+w) <= w - w^2 / (2 max(1, 1+w)), strong concavity lambda on the
  zero-sum subspace and a Lipschitz bound K1 on D' differences,
  (lambda / 2R)|v|^2 <= (|r| + K1 rho)|v| + delta + r_max, where r_j = D_m(y_j) - 1
  and R = max_i max(1, max_j phi(x_i - y_j) / P_i).
* W1(pi_hat, m) <= rho + |v| * sum_l gap_l sqrt(l (k - l) / k).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import SupportNotInS
from .kernel import (
    EVAL_MARGIN,
    PHI0,
    Dataset,
    DProfile,
    expected_d_identity,
    kernel_sup,
    phi,
    rigorous_sup,
)
from .mixtures import DiscreteMixture, separation_stats

PROVED = "Proved"
INCONCLUSIVE = "Inconclusive"
# sup |t phi(t)|
S1 = math.exp(-0.5) * PHI0
IDENTITY_GUARD = 1e-8
LAMBDA_MARGIN = 1e-10


@dataclass(frozen=True)
class DiagnosticEstimates:
    """Heuristic constants measured at the candidate (not proved)."""

    A_hat: float
    B_hat: float
    a_hat: float


@dataclass(frozen=True, eq=False)
class Certificate:
    candidate: DiscreteMixture
    delta: float
    c1: float
    c2: float
    lam: float
    eta: float
    w1_bound: float | None
    support_count_proved: int | None
    parameter_distance_bound: float | None
    constant_chain: dict = field(default_factory=dict)
    status: str = INCONCLUSIVE
    reason: str = ""
    diagnostics: DiagnosticEstimates | None = None

    @property
    def proved(self) -> bool:
        return self.status == PROVED


def _intervals_off_support(locations: np.ndarray, c: float) -> list[tuple[float, float]]:
    """Complement of the closed c-neighborhoods of the atoms, as closed intervals."""
    out = [(-math.inf, float(locations[0] - c))]
    for a, b in zip(locations[:-1], locations[1:]):
        if b - a >= 2 * c:
            out.append((float(a + c), float(b - c)))
    out.append((float(locations[-1] + c), math.inf))
    return out


def _sup_on(prof: DProfile, j: int, lo: float, hi: float, slack: float) -> float:
    if hi <= lo:
        return float(prof(np.asarray([lo]), j)[0]) + EVAL_MARGIN
    return rigorous_sup(prof, j, lo, hi, slack)


def _global_sup(prof: DProfile, slack: float) -> float:
    return rigorous_sup(prof, 0, -math.inf, math.inf, slack)


def _off_gap(prof: DProfile, c: float, slack: float) -> float:
    sups = [_sup_on(prof, 0, lo, hi, slack) for lo, hi in _intervals_off_support(prof.m.locations, c)]
    return 1.0 - max(sups)


def certify_global_max(m: DiscreteMixture, X: Dataset, slack: float = 1e-9) -> float:
    """Proved delta >= 0 with D_m <= 1 + delta on the whole line."""
    return max(0.0, _global_sup(DProfile(m, X), slack) - 1.0)


def off_support_gap(m: DiscreteMixture, X: Dataset, c1: float, slack: float = 1e-9) -> float:
    """Proved c2 with D_m <= 1 - c2 at every point at distance >= c1 from supp(m)."""
    if not c1 > 0:
        raise ValueError("c1 must be > 0")
    return _off_gap(DProfile(m, X), c1, slack)


def hessian_lambda(m: DiscreteMixture, X: Dataset) -> float:
    """Smallest eigenvalue of -Hess(l) on zero-sum weight directions, less a margin."""
    if m.k == 1:
        return math.inf
    prof = DProfile(m, X)
    A = phi(X.points[:, None] - m.locations[None, :]) / prof.P[:, None]
    negH = (A.T @ A) / X.n
    # orthonormal basis of the zero-sum subspace
    basis = np.linalg.qr(np.eye(m.k) - 1.0 / m.k)[0][:, : m.k - 1]
    lam = float(np.linalg.eigvalsh(basis.T @ negH @ basis)[0])
    return max(0.0, lam - LAMBDA_MARGIN * float(np.linalg.norm(negH, 2)))


def hessian_matrix(m: DiscreteMixture, X: Dataset) -> np.ndarray:
    """Hessian of l in the weights at fixed locations."""
    prof = DProfile(m, X)
    A = phi(X.points[:, None] - m.locations[None, :]) / prof.P[:, None]
    return -(A.T @ A) / X.n


def diagnostics(m: DiscreteMixture, X: Dataset, slack: float = 1e-9) -> DiagnosticEstimates:
    prof = DProfile(m, X)
    A_hat = -float(np.max(prof(m.locations, 2)))
    B3 = prof.sup_abs_bound(3)
    a_hat = A_hat / (2.0 * B3) if A_hat > 0 else 0.0
    B_hat = _off_gap(prof, a_hat / 4.0, slack) if a_hat > 0 else float("nan")
    return DiagnosticEstimates(A_hat=A_hat, B_hat=B_hat, a_hat=a_hat)


def cube_root_c1(m: DiscreteMixture, X: Dataset, delta: float, A_hat: float) -> float:
    """c1 = (10 L delta / A)^(1/3), floored so the ladder stays finite."""
    if not (A_hat > 0) or not math.isfinite(A_hat):
        return 1e-3
    return max((10.0 * X.L * max(delta, 1e-300) / A_hat) ** (1.0 / 3.0), 1e-7)


def fourth_root_c1(X: Dataset, delta: float, C: float = 1.0) -> float:
    return max((C * X.L * max(delta, 1e-300)) ** 0.25, 1e-7)


def _hull_far_dist(locations: np.ndarray, X: Dataset) -> float:
    """max over y in [min x, max x] of the distance from y to the atoms."""
    xmin, xmax = float(X.points[0]), float(X.points[-1])
    cand = [xmin, xmax]
    mids = 0.5 * (locations[:-1] + locations[1:])
    cand += [float(np.clip(c, xmin, xmax)) for c in mids]
    cand = np.asarray(cand)
    return float(np.max(np.min(np.abs(cand[:, None] - locations[None, :]), axis=1)))


def _far_mass_ladder(
    prof: DProfile, delta: float, c1: float, far: float, slack: float
) -> tuple[float, dict]:
    """Upper bound rho on the integral of dist(y, supp m) against pi_hat.

    Uses pi_hat{dist >= c} <= delta / (delta + c2(c)) on rungs below and above c1.
    """
    if far <= 0:
        return 0.0, {"ladder_rungs": 0.0}
    rungs = [c1 * 2.0 ** (-l / 2.0) for l in range(1, 41)][::-1]
    rungs = [c for c in rungs if c < far]
    c = c1
    while c < far:
        rungs.append(c)
        c *= math.sqrt(2.0)
    rungs = sorted(set(rungs))
    fracs = []
    for c in rungs:
        c2 = _off_gap(prof, c, slack)
        fracs.append(delta / (delta + c2) if c2 > 0 else 1.0)
    # pi_hat{dist >= c} is non-increasing in c, so a bound at c also holds beyond c
    fracs = np.minimum.accumulate(np.asarray(fracs))
    edges = np.concatenate([rungs, [far]])
    rho = float(edges[0] + np.sum(np.diff(edges) * fracs))
    return min(rho, far), {"ladder_rungs": float(len(rungs)), "ladder_first_rung": float(rungs[0])}


def _weight_transport_factor(m: DiscreteMixture) -> float:
    """W1 between q and p on the same atoms is at most |q - p|_2 times this."""
    k = m.k
    if k == 1:
        return 0.0
    l = np.arange(1, k)
    return float(np.sum(np.diff(m.locations) * np.sqrt(l * (k - l) / k)))


def _inconclusive(m: DiscreteMixture, reason: str, chain: dict, **kw) -> Certificate:
    base = dict(delta=math.nan, c1=math.nan, c2=math.nan, lam=math.nan, eta=math.nan)
    base.update(kw)
    return Certificate(
        candidate=m,
        w1_bound=None,
        support_count_proved=None,
        parameter_distance_bound=None,
        constant_chain=chain,
        status=INCONCLUSIVE,
        reason=reason,
        **base,
    )


def eta_branch_condition(m: DiscreteMixture, X: Dataset, eta: float, lam: float) -> bool:
    """The asymptotic eta test from the source argument; recorded, not enforced."""
    L, k = X.L, m.k
    mass = float(m.weights[np.abs(m.locations) <= 10.0].sum())
    try:
        if mass >= 0.1:
            thr = math.inf if not math.isfinite(lam) else lam**3 / (k**3 * math.exp(5.1 * L * L))
        else:
            thr = math.exp(-14.0 * L * L)
    except OverflowError:
        thr = 0.0
    return bool(eta <= thr)


def certify_w1(
    m: DiscreteMixture,
    X: Dataset,
    c1: float | None = None,
    slack: float = 1e-9,
    kkt_tol: float = 1e-6,
) -> Certificate:
    """Prove W1(pi_hat, m) <= w1_bound, or report which condition failed."""
    chain: dict = {"slack": slack, "kkt_tol": kkt_tol, "L": X.L, "n": float(X.n), "k": float(m.k)}
    ident = expected_d_identity(m, X)
    chain["identity_residual"] = abs(ident - 1.0)
    if abs(ident - 1.0) > IDENTITY_GUARD:
        return _inconclusive(m, "premise: identity sum p_j D(y_j) = 1 violated", chain)
    if np.any(np.abs(m.locations) > X.L):
        return _inconclusive(m, "premise: support outside [-L, L]", chain)
    prof = DProfile(m, X)
    r = prof(m.locations) - 1.0
    r_max = float(np.max(np.abs(r)))
    chain["kkt_residual"] = r_max
    if r_max > kkt_tol:
        return _inconclusive(m, "premise: candidate is not optimal on its own support", chain)

    delta = max(0.0, _global_sup(prof, slack) - 1.0)
    diag = diagnostics(m, X, slack)
    if c1 is None:
        c1 = cube_root_c1(m, X, delta, diag.A_hat)
    c2 = _off_gap(prof, c1, slack)
    lam = hessian_lambda(m, X)
    eta = c1 + X.L * delta / c2 if c2 > 0 else math.inf
    common = dict(delta=delta, c1=c1, c2=c2, lam=lam, eta=eta)
    chain.update(delta=delta, c1=c1, c2=c2, lambda_=lam, eta=eta)
    if not c2 > 0:
        return replace(_inconclusive(m, "condition 1: off-support gap c2 <= 0", chain, **common), diagnostics=diag)
    if not lam > 0:
        return replace(_inconclusive(m, "condition 3: lambda <= 0", chain, **common), diagnostics=diag)

    far = _hull_far_dist(m.locations, X)
    rho, ladder_info = _far_mass_ladder(prof, delta, c1, far, slack)
    chain.update(ladder_info)
    chain.update(far_distance=far, rho=rho)

    x = X.points
    Phi = phi(x[:, None] - m.locations[None, :])
    P = prof.P
    R = float(max(1.0, np.max(Phi / P[:, None])))
    # lower bounds on P_pihat(x_i)
    reach = np.maximum(np.abs(x - x[0]), np.abs(x[-1] - x))
    q_loss = math.sqrt(2.0 * X.n * delta)
    P_hat_low = np.maximum.reduce([P * max(0.0, 1.0 - q_loss), np.full(X.n, PHI0 / X.n), phi(reach)])
    P_tilde_low = np.maximum(Phi.min(axis=1), P_hat_low - S1 * rho)
    row_norm = np.linalg.norm(Phi, axis=1)
    K1 = float(np.mean(S1 * row_norm / (P_tilde_low * P)))
    r_norm = float(np.linalg.norm(r))
    if m.k == 1:
        V = 0.0
        a = b = e = math.nan
    else:
        a = lam / (2.0 * R)
        b = r_norm + K1 * rho
        e = delta + r_max
        V = (b + math.sqrt(b * b + 4.0 * a * e)) / (2.0 * a)
    transport = _weight_transport_factor(m)
    # round outward so float error in the sums never leaves the bound below the true value
    w1 = rho + V * transport
    w1 += 8 * math.ulp(w1)
    chain.update(
        R=R,
        K1=K1,
        r_norm=r_norm,
        quad_a=a,
        quad_b=b,
        quad_e=e,
        weight_shift_bound=V,
        weight_transport_factor=transport,
        min_P_hat_low=float(P_hat_low.min()),
        min_P_tilde_low=float(P_tilde_low.min()),
        w1_bound=w1,
        eta_branch_condition=float(eta_branch_condition(m, X, eta, lam)),
        A_hat=diag.A_hat,
        a_hat=diag.a_hat,
    )
    return Certificate(
        candidate=m,
        w1_bound=w1,
        support_count_proved=None,
        parameter_distance_bound=None,
        constant_chain=chain,
        status=PROVED,
        reason="",
        diagnostics=diag,
        **common,
    )


def certify_support_lower(m: DiscreteMixture, w1_bound: float) -> bool:
    """True iff w1_bound <= Delta(m)/3, which proves |supp(pi_hat)| >= k."""
    return bool(w1_bound <= separation_stats(m).delta / 3.0)


def _lip_constants(prof: DProfile, X: Dataset, alpha: float) -> dict:
    """Bounds on |D_pi^{(j)} - D_m^{(j)}| for any pi with W1(pi, m) <= alpha."""
    x = X.points
    P = prof.P
    reach = np.maximum(np.abs(x - x[0]), np.abs(x[-1] - x))
    P_low = np.maximum.reduce([P - S1 * alpha, np.full(X.n, PHI0 / X.n), phi(reach)])
    base = S1 * alpha * float(np.mean(1.0 / (P_low * P)))
    return {f"lip{j}": kernel_sup(j) * PHI0 * base for j in (0, 2)}


def _curvature_sup(prof: DProfile, c: float, slack: float) -> float:
    """Proved max of D_m'' over the c-neighborhoods of the atoms."""
    curv = []
    for y in prof.m.locations:
        d2 = prof(np.asarray([y]), 2)[0]
        curv.append(_sup_on(prof, 2, float(y - c), float(y + c), max(slack, 1e-3 * abs(d2))))
    return float(max(curv))


def support_upper_margins(m: DiscreteMixture, X: Dataset, w1_bound: float, c: float, slack: float = 1e-9) -> dict:
    """The two quantities certify_support_upper needs to be strictly positive."""
    prof = DProfile(m, X)
    lips = _lip_constants(prof, X, w1_bound)
    curv = _curvature_sup(prof, c, slack)
    gap = _off_gap(prof, c, slack)
    return {
        "max_d2_near_atoms": curv,
        "off_support_gap": gap,
        **lips,
        "margin_curvature": -curv - lips["lip2"],
        "margin_gap": gap - lips["lip0"],
    }


def _largest_concave_radius(m: DiscreteMixture, X: Dataset, w1_bound: float, lo: float, hi: float,
                            slack: float, steps: int = 20) -> float | None:
    """Bisection for the largest c in [lo, hi] passing the curvature condition."""
    prof = DProfile(m, X)
    lip2 = _lip_constants(prof, X, w1_bound)["lip2"]
    ok = lambda c: -_curvature_sup(prof, c, slack) - lip2 > 0  # noqa: E731
    if ok(hi):
        return hi
    if not ok(lo):
        return None
    for _ in range(steps):
        mid = math.sqrt(lo * hi)
        lo, hi = (mid, hi) if ok(mid) else (lo, mid)
    return lo


def certify_support_upper(m: DiscreteMixture, X: Dataset, w1_bound: float, c: float, slack: float = 1e-9) -> bool:
    """True proves |supp(pi_hat)| <= k, given W1(pi_hat, m) <= w1_bound.

    (i) D_m'' + lip2 < 0 on each [y_j - c, y_j + c], so D_pi_hat is strictly
    concave on each connected piece of the neighborhoods and touches 1 at most
    once there; (ii) D_m + lip0 < 1 off the neighborhoods, so pi_hat puts no
    mass there.
    """
    if not (c > 0 and math.isfinite(w1_bound)):
        return False
    mg = support_upper_margins(m, X, w1_bound, c, slack)
    return bool(mg["margin_curvature"] > 0 and mg["margin_gap"] > 0)


def certify_support(
    cert: Certificate, X: Dataset, c_candidates: Sequence[float] | None = None, slack: float = 1e-9
) -> Certificate:
    """Attach the atom count to a proved W1 certificate when both directions hold."""
    if not cert.proved or cert.w1_bound is None:
        return cert
    m = cert.candidate
    chain = dict(cert.constant_chain)
    lower = certify_support_lower(m, cert.w1_bound)
    chain["support_lower"] = float(lower)
    if not lower:
        return replace(cert, constant_chain=chain)
    search = c_candidates is None
    if search:
        gap = separation_stats(m).min_gap
        top = min(0.45 * gap if math.isfinite(gap) else 1.0, 1.0)
        base = max(math.sqrt(cert.w1_bound), 4.0 * cert.w1_bound)
        c_candidates = sorted({min(top, base * f) for f in (0.5, 1.0, 2.0, 4.0, 8.0, 16.0)} | {top})

    def attach(c: float) -> Certificate:
        chain["support_upper_c"] = float(c)
        pdb = 12.0 * cert.w1_bound / separation_stats(m).delta if m.k > 1 else cert.w1_bound
        chain["parameter_distance_bound"] = pdb
        return replace(cert, support_count_proved=m.k, parameter_distance_bound=pdb, constant_chain=chain)

    for c in c_candidates:
        if c > 0 and certify_support_upper(m, X, cert.w1_bound, c, slack):
            return attach(c)
    if search:
        # the gap margin grows with c and the curvature margin shrinks, so try the largest concave radius
        c = _largest_concave_radius(m, X, cert.w1_bound, c_candidates[0], top, slack)
        if c is not None and certify_support_upper(m, X, cert.w1_bound, c, slack):
            return attach(c)
    chain["support_upper"] = 0.0
    return replace(cert, constant_chain=chain)


def certify_static_support(
    m: DiscreteMixture, X: Dataset, S: Sequence[float], tol: float = 1e-9
) -> Certificate:
    """Prove supp(pi_hat_S) = supp(m) and bound the weight error, for finite S."""
    S = np.unique(np.asarray(S, dtype=np.float64))
    pos = np.searchsorted(S, m.locations)
    pos = np.clip(pos, 0, S.size - 1)
    near = np.minimum(np.abs(S[pos] - m.locations), np.abs(S[np.maximum(pos - 1, 0)] - m.locations))
    if np.any(near > 1e-12 * max(1.0, X.L)):
        raise SupportNotInS("candidate atoms are not all in S")
    chain: dict = {"tol": tol, "n": float(X.n), "k": float(m.k), "L": X.L}
    prof = DProfile(m, X)
    r = prof(m.locations) - 1.0
    r_max = float(np.max(np.abs(r)))
    off_mask = np.min(np.abs(S[:, None] - m.locations[None, :]), axis=1) > 1e-12 * max(1.0, X.L)
    off = S[off_mask]
    D_off = prof(off) if off.size else np.zeros(0)
    gap = 1.0 - float(D_off.max()) - EVAL_MARGIN if off.size else math.inf
    delta = max(0.0, float(D_off.max()) - 1.0 + EVAL_MARGIN) if off.size else 0.0
    lam = hessian_lambda(m, X)
    chain.update(kkt_residual=r_max, gap=gap, lambda_=lam)
    common = dict(delta=delta, c1=0.0, c2=gap, lam=lam, eta=math.nan)
    if r_max > tol:
        return _inconclusive(m, "premise: D != 1 on supp(m)", chain, **common)
    if not gap > 2.0 * r_max:
        return _inconclusive(m, "KKT: D too close to (or above) 1 on S minus supp(m)", chain, **common)
    if not lam > 0:
        return _inconclusive(m, "lambda <= 0", chain, **common)

    x = X.points
    Phi = phi(x[:, None] - m.locations[None, :])
    P = prof.P
    R = float(max(1.0, np.max(Phi / P[:, None])))
    row_norm = np.linalg.norm(Phi, axis=1)
    f = r_max / (r_max + gap) if math.isfinite(gap) else 0.0
    P_tilde_low = Phi.min(axis=1)
    K0 = float(np.mean(PHI0 * row_norm / (P_tilde_low * P)))
    r_norm = float(np.linalg.norm(r))
    if m.k == 1:
        V = 0.0
    else:
        a = lam / (2.0 * R)
        V = (r_norm + 2.0 * K0 * f) / a
    ok_keep = bool(np.min(m.weights) > V + f)
    if off.size:
        SPhi = phi(x[:, None] - S[None, :])
        P_hat_low = np.maximum(P * max(0.0, 1.0 - math.sqrt(2.0 * X.n * r_max)), SPhi.min(axis=1))
        E = float(np.mean(PHI0 * (f * PHI0 + row_norm * V) / (P_hat_low * P)))
    else:
        E = 0.0
    ok_drop = bool(gap > E)
    chain.update(offsupport_mass_bound=f, K0=K0, R=R, weight_shift_bound=V, D_perturbation=E)
    if not (ok_keep and ok_drop):
        return _inconclusive(m, "support equality could not be proved", chain, **common)
    V_final = 0.0 if m.k == 1 else r_norm / (lam / (2.0 * R))
    w1 = V_final * _weight_transport_factor(m)
    chain.update(param_distance=V_final, w1_bound=w1)
    return Certificate(
        candidate=m,
        w1_bound=w1,
        support_count_proved=m.k,
        parameter_distance_bound=V_final,
        constant_chain=chain,
        status=PROVED,
        **common,
    )
