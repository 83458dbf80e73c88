"""Command-line interface: ``npmle solve|certify|em|newton|harness|sample``."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from .certifier import certify_support, certify_w1
from .em import em_jacobian_spectrum, em_solve
from .errors import NpmleError, RefinementExhausted
from .kernel import Dataset, make_dataset
from .mixtures import DiscreteMixture
from .newton import newton_solve, shub_smale_check
from .pipeline import (
    SolveConfig,
    certificate_to_json,
    genericity_harness,
    mixture_from_json,
    sample_clustered,
    sample_iid,
    shub_smale_to_json,
    solve_npmle,
    solve_static,
)

EXIT_PROVED = 0
EXIT_USAGE = 1
EXIT_INCONCLUSIVE = 2


def read_data(path: str | Path) -> Dataset:
    """One number per line; ``#`` starts a comment."""
    values = []
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            values.append(float(line))
    if not values:
        raise ValueError(f"{path}: no data points")
    return make_dataset(values)


def read_numbers(path: str | Path) -> list[float]:
    return list(read_data(path).points)


def read_mixture(path: str | Path) -> DiscreteMixture:
    return mixture_from_json(json.loads(Path(path).read_text()))


def mixture_json(m: DiscreteMixture) -> dict:
    return {"weights": [float(w) for w in m.weights], "locations": [float(y) for y in m.locations]}


def _write_json(obj: dict, out: str | None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=False) + "\n"
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _cmd_solve(args: argparse.Namespace) -> int:
    X = read_data(args.input)
    if args.static_support:
        report = solve_static(X, read_numbers(args.static_support))
    else:
        config = SolveConfig(epsilon=args.epsilon, max_refinements=args.max_refine)
        try:
            report = solve_npmle(X, config)
        except RefinementExhausted as exc:
            print(f"npmle: {exc}", file=sys.stderr)
            if exc.report is not None:
                _write_json(exc.report.to_json(), args.out)
            return EXIT_INCONCLUSIVE
    _write_json(report.to_json(), args.out)
    if args.mixture_out:
        _write_json(mixture_json(report.final), args.mixture_out)
    proved = report.certificate.proved and report.certificate.support_count_proved is not None
    return EXIT_PROVED if proved else EXIT_INCONCLUSIVE


def _cmd_certify(args: argparse.Namespace) -> int:
    X = read_data(args.input)
    m = read_mixture(args.candidate)
    cert = certify_support(certify_w1(m, X), X)
    _write_json(certificate_to_json(cert, shub_smale_check(m, X)), args.out)
    return EXIT_PROVED if cert.proved else EXIT_INCONCLUSIVE


def _cmd_em(args: argparse.Namespace) -> int:
    X = read_data(args.input)
    trace = em_solve(read_mixture(args.start), X, tol=args.tol, max_iter=args.max_iter)
    final = trace.iterates[-1]
    spectrum = em_jacobian_spectrum(final, X)
    _write_json(
        {
            "final": mixture_json(final),
            "iterations": len(trace.iterates) - 1,
            "loglik": [float(v) for v in trace.logliks[-1:]],
            "monotone": trace.monotone,
            "spectral_radius": spectrum.spectral_radius if spectrum.interpretable else None,
        },
        args.out,
    )
    return EXIT_PROVED


def _cmd_newton(args: argparse.Namespace) -> int:
    X = read_data(args.input)
    m0 = read_mixture(args.start)
    ss = shub_smale_check(m0, X)
    trace = newton_solve(m0, X, tol=args.tol)
    _write_json(
        {
            "final": mixture_json(trace.final),
            "residual_norms": [float(r) for r in trace.residual_norms],
            "failed": trace.failed,
            "reason": trace.reason or None,
            "shub_smale": shub_smale_to_json(ss),
        },
        args.out,
    )
    return EXIT_INCONCLUSIVE if trace.failed else EXIT_PROVED


def _cmd_harness(args: argparse.Namespace) -> int:
    result = genericity_harness(args.trials, args.spec, args.n, seed=args.seed, workers=args.workers)
    fields = list(result.records[0].keys())
    handle = open(args.out, "w", newline="") if args.out and args.out != "-" else sys.stdout
    try:
        writer = csv.DictWriter(handle, fieldnames=fields)
        writer.writeheader()
        writer.writerows(result.records)
    finally:
        if handle is not sys.stdout:
            handle.close()
    print(json.dumps(result.summary), file=sys.stderr)
    return EXIT_PROVED if result.summary["all_certified"] else EXIT_INCONCLUSIVE


def _cmd_sample(args: argparse.Namespace) -> int:
    if args.clustered is not None:
        X = sample_clustered(args.clustered, args.n, args.spread, args.seed)
    else:
        X = sample_iid(args.spec, args.n, args.seed)
    text = "".join(f"{v!r}\n" for v in np.asarray(X.points, dtype=float).tolist())
    if args.out is None or args.out == "-":
        sys.stdout.write(text)
    else:
        Path(args.out).write_text(text)
    return EXIT_PROVED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="npmle", description="Certified Gaussian-location NPMLE.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve and certify the NPMLE of a data file")
    p.add_argument("--input", required=True)
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--max-refine", type=int, default=12)
    p.add_argument("--out")
    p.add_argument("--static-support", help="file of candidate support points")
    p.add_argument("--mixture-out", help="also write the final mixture as JSON")
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("certify", help="certify a given candidate mixture")
    p.add_argument("--input", required=True)
    p.add_argument("--candidate", required=True)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_certify)

    for name, func, tol in (("em", _cmd_em, 1e-12), ("newton", _cmd_newton, 1e-12)):
        p = sub.add_parser(name, help=f"run {name} from a starting mixture")
        p.add_argument("--input", required=True)
        p.add_argument("--start", required=True)
        p.add_argument("--tol", type=float, default=tol)
        p.add_argument("--out")
        if name == "em":
            p.add_argument("--max-iter", type=int, default=10_000)
        p.set_defaults(func=func)

    p = sub.add_parser("harness", help="Monte-Carlo genericity harness, CSV output")
    p.add_argument("--spec", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--trials", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_harness)

    p = sub.add_parser("sample", help="write a synthetic data file")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--spec")
    src.add_argument("--clustered", type=int, metavar="K")
    p.add_argument("--n", type=int, required=True, help="points (per cluster with --clustered)")
    p.add_argument("--spread", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_sample)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_PROVED
    try:
        return args.func(args)
    except (OSError, ValueError, KeyError, json.JSONDecodeError, NpmleError) as exc:
        print(f"npmle: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
