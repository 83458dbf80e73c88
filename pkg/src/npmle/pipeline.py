"""End-to-end solver, fixture generators and the Monte-Carlo harness."""

from __future__ import annotations

import math
import re
import time
import warnings
import zlib
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .certifier import (
    Certificate,
    certify_static_support,
    certify_support,
    certify_w1,
    diagnostics,
)
from .em import em_jacobian_spectrum
from .errors import (
    NoConvergence,
    RefinementExhausted,
    SingularJacobian,
    TooMuchMassDropped,
    UnknownDescriptor,
)
from .grid_solver import build_grid, frank_wolfe, optimize_weights, round_small_atoms
from .kernel import Dataset, DProfile, log_likelihood
from .mixtures import DiscreteMixture, make_mixture, merge_adjacent, param_distance, separation_stats, w1_distance
from .newton import NewtonTrace, ShubSmaleReport, newton_solve, shub_smale_check

AUTO = None
CLUSTER_SCALE = 5.0
STALL_TOL = 1e-8


@dataclass(frozen=True)
class SolveConfig:
    epsilon: float = 0.1
    epsilon_shrink: float = 0.5
    max_refinements: int = 12
    gap_target: float | None = AUTO  # default epsilon**2
    newton_tol: float = 1e-12
    mass_drop_iota: float | None = AUTO
    c1_override: float | None = AUTO
    slack: float = 1e-12
    final_slack: float = 1e-12
    fw_max_iter: int = 20_000
    weight_tol: float = 1e-13
    newton_max_iter: int = 50
    stall_rounds: int = 2
    max_kernel_entries: int = 40_000_000

    def __post_init__(self) -> None:
        if not (0 < self.epsilon_shrink < 1):
            raise ValueError("epsilon_shrink must lie in (0, 1)")
        for name in ("epsilon", "newton_tol", "slack", "final_slack", "weight_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")


@dataclass(frozen=True)
class RefinementRecord:
    epsilon: float
    gap: float
    status: str
    support_count: int | None
    k: int
    reason: str = ""


@dataclass(eq=False)
class SolveReport:
    final: DiscreteMixture
    certificate: Certificate
    shub_smale: ShubSmaleReport | None
    newton_trace: NewtonTrace | None
    refinement_log: list
    wall_time: dict = field(default_factory=dict)
    candidate: DiscreteMixture | None = None
    candidate_certificate: Certificate | None = None
    grid_solution: DiscreteMixture | None = None
    notes: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return certificate_to_json(self.certificate, self.shub_smale)


def _num(v: Any) -> Any:
    if v is None:
        return None
    v = float(v)
    return v if math.isfinite(v) else None


def certificate_to_json(cert: Certificate, ss: ShubSmaleReport | None = None) -> dict:
    """Certificate document; non-finite or absent numbers become null."""
    diag = cert.diagnostics
    return {
        "status": cert.status,
        "w1_bound": _num(cert.w1_bound),
        "support_count": cert.support_count_proved,
        "parameter_distance_bound": _num(cert.parameter_distance_bound),
        "delta": _num(cert.delta),
        "c1": _num(cert.c1),
        "c2": _num(cert.c2),
        "lambda": _num(cert.lam),
        "eta": _num(cert.eta),
        "constant_chain": {k: _num(v) for k, v in sorted(cert.constant_chain.items())},
        "diagnostics": None
        if diag is None
        else {"A_hat": _num(diag.A_hat), "B_hat": _num(diag.B_hat), "a_hat": _num(diag.a_hat)},
        "shub_smale": None if ss is None else shub_smale_to_json(ss),
    }


def shub_smale_to_json(ss: ShubSmaleReport) -> dict:
    return {k: _num(getattr(ss, k)) for k in ("alpha", "beta", "lipC", "h", "r")} | {"proved": bool(ss.proved)}


def _normalized(m: DiscreteMixture) -> DiscreteMixture:
    return DiscreteMixture(m.weights / m.weights.sum(), m.locations)


def _merge_gap(a_hat: float, A_hat: float, eps: float) -> float:
    # adjacent grid points are always merged; wider cliques follow a_hat / 5
    if not (A_hat > 1e-6 and math.isfinite(a_hat)):
        return 3.0 * eps
    return max(a_hat / 5.0, 1.5 * eps)


def polish_locations(m: DiscreteMixture, X: Dataset, radius: float) -> DiscreteMixture:
    """Jointly maximize the log-likelihood over weights and locations, each atom
    confined to +-radius of its start, then refit the weights exactly.

    Any candidate may be certified, so this only shrinks the sup of D that the
    certificate has to absorb. The result is kept only if the likelihood rises.
    """
    from scipy.optimize import minimize

    k = m.k
    x = X.points

    def neg(theta: np.ndarray) -> tuple[float, np.ndarray]:
        z, y = theta[:k], theta[k:]
        p = np.exp(z - z.max())
        p /= p.sum()
        t = x[:, None] - y[None, :]
        ph = np.exp(-0.5 * t * t)
        P = ph @ p
        u = 1.0 / (X.n * P)
        D = u @ ph
        D1 = u @ (t * ph)
        grad = np.concatenate([p * (D - 1.0), p * D1])
        return -float(np.mean(np.log(P))), -grad

    theta0 = np.concatenate([np.log(m.weights), m.locations])
    bounds = [(None, None)] * k + [(y - radius, y + radius) for y in m.locations]
    res = minimize(neg, theta0, jac=True, method="L-BFGS-B", bounds=bounds,
                   options={"ftol": 1e-15, "gtol": 1e-13, "maxiter": 500})
    y = res.x[k:]
    if k > 1 and np.any(np.diff(y) <= 0):
        return m
    try:
        out = optimize_weights(y, X, tol=1e-13)
    except NoConvergence:
        return m
    return out if log_likelihood(out, X) >= log_likelihood(m, X) else m


def grid_stage(X: Dataset, eps: float, config: SolveConfig) -> tuple[DiscreteMixture, float, int]:
    """Frank-Wolfe on Z_eps, rounding, then the exact weight optimum on Z_eps."""
    grid = build_grid(X.L, eps)
    gap_target = config.gap_target if config.gap_target is not None else eps * eps
    cap = int(min(config.fw_max_iter, eps**-10))
    fw = frank_wolfe(X, grid, cap, gap_target=gap_target)
    try:
        fw_r = round_small_atoms(fw, config.mass_drop_iota)
    except TooMuchMassDropped:
        fw_r = fw
    sol = optimize_weights(grid.points, X, tol=config.weight_tol, p0=fw_r.weights)
    return sol, float(fw.gap_history[-1]), fw.iterations


def solve_npmle(X: Dataset, config: SolveConfig | None = None) -> SolveReport:
    """Refine epsilon until the candidate's W1 bound and atom count are both proved,
    then polish with Newton and certify the polished mixture."""
    config = config or SolveConfig()
    notes: dict = {}
    if X.n < X.L**4:
        notes["warning"] = f"n={X.n} < L^4={X.L**4:.3g}; sample-size premise (with C=1) not met"
        warnings.warn(notes["warning"], RuntimeWarning, stacklevel=2)
    timing = {"grid": 0.0, "certify": 0.0, "newton": 0.0, "final_certify": 0.0}
    log: list[RefinementRecord] = []
    eps = config.epsilon
    best: SolveReport | None = None
    prev: DiscreteMixture | None = None
    stalled = 0
    for _ in range(config.max_refinements):
        if X.n * (2.0 * X.L / eps + 1) > config.max_kernel_entries:
            notes["stopped"] = f"grid at epsilon={eps:.3g} exceeds max_kernel_entries"
            break
        t0 = time.perf_counter()
        grid_sol, gap, _ = grid_stage(X, min(eps, 0.5 * X.L), config)
        diag = diagnostics(grid_sol, X, config.slack)
        merged = merge_adjacent(grid_sol, _merge_gap(diag.a_hat, diag.A_hat, eps))
        cand = optimize_weights(merged.locations, X, tol=config.weight_tol)
        cand = polish_locations(cand, X, eps)
        t1 = time.perf_counter()
        cert = certify_w1(cand, X, c1=config.c1_override, slack=config.slack)
        cert = certify_support(cert, X, slack=config.slack)
        timing["grid"] += t1 - t0
        timing["certify"] += time.perf_counter() - t1
        log.append(RefinementRecord(eps, gap, cert.status, cert.support_count_proved, cand.k, cert.reason))
        report = SolveReport(
            final=cand,
            certificate=cert,
            shub_smale=None,
            newton_trace=None,
            refinement_log=log,
            wall_time=timing,
            candidate=cand,
            candidate_certificate=cert,
            grid_solution=grid_sol,
            notes=notes,
        )
        if cert.proved and cert.support_count_proved is not None:
            return _polish(report, X, config)
        if best is None or (cert.proved and not best.certificate.proved):
            best = report
        # a candidate that no longer moves with epsilon gets the same verdict
        same = prev is not None and prev.k == cand.k and param_distance(prev, cand) <= STALL_TOL
        stalled = stalled + 1 if same else 0
        prev = cand
        if stalled >= config.stall_rounds:
            notes["stopped"] = f"candidate unchanged over {stalled + 1} refinements"
            break
        eps *= config.epsilon_shrink
    reason = notes.get("stopped", f"{config.max_refinements} refinements used")
    raise RefinementExhausted(f"no certificate: {reason}", report=best)


def _polish(report: SolveReport, X: Dataset, config: SolveConfig) -> SolveReport:
    cand = report.candidate
    t0 = time.perf_counter()
    ss = shub_smale_check(cand, X)
    try:
        trace = newton_solve(cand, X, config.newton_tol, config.newton_max_iter)
    except SingularJacobian as exc:
        trace = NewtonTrace([cand], [], True, str(exc))
    report.wall_time["newton"] = time.perf_counter() - t0
    report.shub_smale = ss
    report.newton_trace = trace
    if trace.failed:
        report.notes["newton"] = trace.reason
        return report
    final = _normalized(trace.final)
    t1 = time.perf_counter()
    cert = certify_w1(final, X, slack=config.final_slack)
    cert = certify_support(cert, X, slack=config.final_slack)
    report.wall_time["final_certify"] = time.perf_counter() - t1
    cc = report.candidate_certificate
    report.notes["newton_limit_within_candidate_bound"] = bool(w1_distance(final, cand) <= cc.w1_bound)
    if ss.proved and cc.parameter_distance_bound is not None:
        # the NPMLE lies within the Kantorovich uniqueness ball, so it is the Newton limit
        report.notes["newton_limit_is_npmle"] = bool(cc.parameter_distance_bound < ss.r)
    if cert.proved and cert.support_count_proved == cand.k:
        report.final = final
        report.certificate = cert
    else:
        report.notes["final_certificate"] = cert.reason or "atom count not re-proved at the polished mixture"
    return report


def solve_static(X: Dataset, S: Sequence[float], tol: float = 1e-9) -> SolveReport:
    """Static-support NPMLE on a finite S with its certificate."""
    S = np.unique(np.asarray(S, dtype=np.float64))
    if S.size == 0 or not np.any(np.abs(S) <= 3 * X.L):
        raise ValueError("S must be non-empty and meet [-3L, 3L]")
    t0 = time.perf_counter()
    m = optimize_weights(S, X, tol=min(tol, 1e-12) * 0.1)
    t1 = time.perf_counter()
    cert = certify_static_support(m, X, S, tol)
    t2 = time.perf_counter()
    rec = RefinementRecord(math.nan, cert.constant_chain.get("kkt_residual", math.nan), cert.status,
                           cert.support_count_proved, m.k, cert.reason)
    return SolveReport(
        final=m,
        certificate=cert,
        shub_smale=None,
        newton_trace=None,
        refinement_log=[rec],
        wall_time={"grid": t1 - t0, "certify": t2 - t1},
        candidate=m,
        candidate_certificate=cert,
        grid_solution=m,
    )


def rng_for(seed: int, tag: str) -> np.random.Generator:
    """One independent PCG64 stream per (seed, operation tag)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, zlib.crc32(tag.encode())]))


def _dataset(x: np.ndarray) -> Dataset:
    L = max(1.0, math.ceil(float(np.max(np.abs(x)))))
    return Dataset(x, L)


def cluster_centers(k: int, C: float = CLUSTER_SCALE) -> np.ndarray:
    return C * np.arange(1, k + 1) * math.sqrt(math.log(k + 1))


def sample_clustered(
    k: int, per_cluster: int, spread: float, rng_seed: int, C: float = CLUSTER_SCALE
) -> Dataset:
    """k tight clusters at C i sqrt(log(k+1)), each with per_cluster uniform points."""
    if k < 1 or per_cluster < 1 or not (0 < spread <= 0.1):
        raise ValueError("need k >= 1, per_cluster >= 1 and 0 < spread <= 0.1")
    rng = rng_for(rng_seed, "sample_clustered")
    centers = cluster_centers(k, C)
    x = (centers[:, None] + rng.uniform(-spread, spread, size=(k, per_cluster))).ravel()
    return _dataset(x)


_NUM = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"


def _parse_descriptor(spec: str):
    s = spec.strip().lower().replace(" ", "")
    m = re.fullmatch(rf"uniform\[({_NUM}),({_NUM})\]", s)
    if m:
        a, b = float(m.group(1)), float(m.group(2))
        if not a < b:
            raise UnknownDescriptor(f"empty interval in {spec!r}")
        return "uniform", (a, b)
    m = re.fullmatch(r"gaussian-mixture\[(.+)\]", s)
    if m:
        comps = []
        for part in m.group(1).split(","):
            vals = part.split(":")
            if len(vals) not in (2, 3) or not all(re.fullmatch(_NUM, v) for v in vals):
                raise UnknownDescriptor(f"bad component {part!r} in {spec!r}")
            w, mu, sd = float(vals[0]), float(vals[1]), float(vals[2]) if len(vals) == 3 else 1.0
            comps.append((w, mu, sd))
        w = np.array([c[0] for c in comps])
        if np.any(w <= 0):
            raise UnknownDescriptor("component weights must be > 0")
        return "gaussian-mixture", (w / w.sum(), np.array([c[1] for c in comps]), np.array([c[2] for c in comps]))
    m = re.fullmatch(rf"truncated-gaussian\[({_NUM}),({_NUM}),({_NUM}),({_NUM})\]", s)
    if m:
        mu, sd, a, b = (float(m.group(i)) for i in range(1, 5))
        if not (sd > 0 and a < b):
            raise UnknownDescriptor(f"bad parameters in {spec!r}")
        return "truncated-gaussian", (mu, sd, a, b)
    raise UnknownDescriptor(f"unknown distribution descriptor {spec!r}")


def sample_iid(spec: str, n: int, rng_seed: int) -> Dataset:
    """Draw n points from a descriptor.

    Descriptors: ``uniform[a,b]``, ``gaussian-mixture[w:mu:sd,...]`` (sd
    defaults to 1), ``truncated-gaussian[mu,sd,a,b]``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    kind, params = _parse_descriptor(spec)
    rng = rng_for(rng_seed, "sample_iid")
    if kind == "uniform":
        x = rng.uniform(params[0], params[1], size=n)
    elif kind == "gaussian-mixture":
        w, mu, sd = params
        comp = rng.choice(w.size, size=n, p=w)
        x = rng.normal(mu[comp], sd[comp])
    else:
        from scipy.stats import truncnorm

        mu, sd, a, b = params
        x = truncnorm.rvs((a - mu) / sd, (b - mu) / sd, loc=mu, scale=sd, size=n, random_state=rng)
    return _dataset(np.asarray(x, dtype=np.float64))


@dataclass
class HarnessResult:
    records: list
    summary: dict


def _harness_trial(args) -> dict:
    trial, spec, n, seed, config = args
    X = sample_iid(spec, n, seed + trial)
    rec: dict = {"trial": trial, "n": n, "L": X.L, "certified": False, "k": None, "min_gap": None,
                 "A_hat": None, "B_hat": None, "shub_smale": None, "em_radius": None, "reason": ""}
    try:
        rep = solve_npmle(X, config)
    except RefinementExhausted as exc:
        rec["reason"] = str(exc)
        return rec
    cert = rep.certificate
    m = rep.final
    rec.update(
        certified=bool(cert.proved and cert.support_count_proved is not None),
        k=m.k,
        min_gap=separation_stats(m).min_gap if m.k > 1 else None,
        A_hat=cert.diagnostics.A_hat if cert.diagnostics else None,
        B_hat=cert.diagnostics.B_hat if cert.diagnostics else None,
        shub_smale=bool(rep.shub_smale.proved) if rep.shub_smale else None,
    )
    spec_ = em_jacobian_spectrum(m, X)
    rec["em_radius"] = spec_.spectral_radius if spec_.interpretable else None
    return rec


def genericity_harness(
    trials: int, spec: str, n: int, config: SolveConfig | None = None, seed: int = 0, workers: int = 1
) -> HarnessResult:
    """Solve ``trials`` random instances and tabulate what the certificates show."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    config = config or SolveConfig()
    jobs = [(t, spec, n, seed, config) for t in range(trials)]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        if workers > 1:
            from concurrent.futures import ProcessPoolExecutor

            with ProcessPoolExecutor(max_workers=workers) as pool:
                records = list(pool.map(_harness_trial, jobs))
        else:
            records = [_harness_trial(j) for j in jobs]
    cert = [r for r in records if r["certified"]]
    ks = [r["k"] for r in cert]
    summary = {
        "trials": trials,
        "certified": len(cert),
        "all_certified": len(cert) == trials,
        "all_A_hat_positive": all(r["A_hat"] is not None and r["A_hat"] > 0 for r in cert) and bool(cert),
        "all_B_hat_positive": all(r["B_hat"] is not None and r["B_hat"] > 0 for r in cert) and bool(cert),
        "max_k": max(ks) if ks else None,
        "k_never_exceeds_n": all(k <= n for k in ks),
        "C_report": max(r["k"] / r["L"] ** 2 for r in cert) if cert else None,
    }
    return HarnessResult(records=records, summary=summary)


def mixture_from_json(obj: dict) -> DiscreteMixture:
    return make_mixture(obj["weights"], obj["locations"])
