"""Command-line front end: ``regtrace <command> --scenario PATH``."""
from __future__ import annotations

import argparse
import csv
import math
import os
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .errors import NumericalFailure, RegtraceError, ScenarioError
from .pipeline import Run
from .scenario import load_scenario

COMMANDS = ("validate", "assemble", "trace1", "trace2", "checks", "asymptotics", "report")
EXIT_OK, EXIT_SCENARIO, EXIT_NUMERICAL, EXIT_CHECK = 0, 1, 2, 3


def format_number(x) -> str:
    """17 significant digits, enough to round-trip a double."""
    x = float(x)
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return format(x, ".17g")


def to_json(obj, indent: int = 2, level: int = 0) -> str:
    """Deterministic JSON with floats written at 17 significant digits."""
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{_json_str(str(k))}: {to_json(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float, np.floating, np.integer)) and not isinstance(v, bool) for v in obj):
            return "[" + ", ".join(to_json(v) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + to_json(v, indent, level + 1) for v in obj) + "\n" + end + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        text = format_number(obj)
        return text if math.isfinite(float(obj)) else _json_str(text)
    return _json_str(str(obj))


def _json_str(s: str) -> str:
    import json

    return json.dumps(s)


def _write_csv(path: Path, header_lines: list[str], columns: list[str], rows) -> None:
    with path.open("w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_number(v) if isinstance(v, (float, np.floating)) else v for v in row])


def write_trace1(run: Run, out: Path) -> Path:
    L = run.ledger
    cut_of = {c.n: p + 1 for p, c in enumerate(run.subsequence.cuts)}
    partial = np.cumsum(L.shifts - L.diag_integral)
    rows = [
        (q + 1, int(L.k[q]), int(L.j[q]), L.mu[q], L.lam[q], L.shifts[q], L.diag_integral[q], partial[q],
         cut_of.get(q + 1, ""))
        for q in range(L.n_P)
    ]
    path = out / "ledger_trace1.csv"
    _write_csv(
        path,
        [
            "first regularized trace, one row per state q <= n_P",
            "q: rank; k, j: basis labels; mu, lambda: unperturbed and perturbed eigenvalue",
            "shift: lambda - mu; diag_integral: (1/pi) int_0^pi (Q phi_j, phi_j) dx",
            "partial: running sum of shift - diag_integral; cut: p where q = n_p",
            f"rhs_first = {format_number(run.rhs_first)}",
        ],
        ["q", "k", "j", "mu", "lambda", "shift", "diag_integral", "partial", "cut"],
        rows,
    )
    return path


def write_trace2(run: Run, out: Path) -> Path:
    L = run.ledger
    cut_of = {c.n: p + 1 for p, c in enumerate(run.subsequence.cuts)}
    sq = L.shifts * (2.0 * L.mu + L.shifts)
    corr = L.corrections.sum(axis=0)
    diag = 2.0 * L.mu * L.diag_integral
    partial = np.cumsum(sq - corr - diag)
    s_cols = [f"corr_s{s}" for s in range(2, L.m + 1)]
    rows = [
        (q + 1, int(L.k[q]), int(L.j[q]), L.mu[q], L.lam[q], sq[q], corr[q], diag[q], partial[q],
         cut_of.get(q + 1, ""), *L.corrections[:, q])
        for q in range(L.n_P)
    ]
    path = out / "ledger_trace2.csv"
    _write_csv(
        path,
        [
            f"second regularized trace, one row per state q <= n_P, m = {L.m}",
            "lambda2_minus_mu2: lambda^2 - mu^2; correction: sum over s of corr_s",
            "corr_s: 2 (-1)^s / s * Res_{lambda = mu_q} tr(lambda (Q R0)^s)",
            "diag_term: (2 mu / pi) int_0^pi (Q phi_j, phi_j) dx",
            "partial: running sum of lambda2_minus_mu2 - correction - diag_term; cut: p where q = n_p",
            f"rhs_second = {format_number(run.rhs_second)}",
        ],
        ["q", "k", "j", "mu", "lambda", "lambda2_minus_mu2", "correction", "diag_term", "partial", "cut", *s_cols],
        rows,
    )
    return path


def write_checks(checks, out: Path) -> Path:
    path = out / "checks.csv"
    _write_csv(
        path,
        ["identity checks: deviation is compared against tolerance"],
        ["name", "deviation", "tolerance", "passed", "detail"],
        [(c.name, c.deviation, c.tolerance, "pass" if c.passed else "fail", c.detail) for c in checks],
    )
    return path


def write_weyl(run: Run, out: Path) -> Path:
    beta = run.model.constants.beta
    rows = []
    for name, fit in run.weyl.items():
        if isinstance(fit, str):
            rows.append((name, "", "", "", "", beta, ""))
            continue
        rows.append((name, fit.slope, fit.d1, fit.lo, fit.hi, beta, abs(fit.slope - beta) / beta))
    path = out / "weyl.csv"
    _write_csv(
        path,
        ["least-squares fit of log(value) against log(rank) over ranks [lo, hi]"],
        ["series", "slope", "d1", "lo", "hi", "target", "rel_error"],
        rows,
    )
    return path


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="regtrace", description="Verify regularized trace formulas on a scenario.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--scenario", required=True, help="scenario file")
    parser.add_argument("--out", help="output directory (default: the scenario's run.output or the cwd)")
    parser.add_argument("--m", type=int, help="override the series cutoff")
    parser.add_argument("--nodes-mult", type=int, help="override the quadrature node multiplier")
    return parser


def _print_checks(checks) -> None:
    for c in checks:
        status = "PASS" if c.passed else "FAIL"
        print(f"{status}  {c.name:<34} deviation={c.deviation:.3e} tol={c.tolerance:.1e} {c.detail}")


def run_command(args: argparse.Namespace) -> int:
    scenario = load_scenario(args.scenario)
    if args.nodes_mult is not None and args.nodes_mult < 1:
        raise ScenarioError("--nodes-mult must be >= 1")
    if args.m is not None and args.m < 2:
        raise ScenarioError("--m must be >= 2")
    run = Run(scenario, m=args.m, nodes_mult=args.nodes_mult)
    out = Path(args.out or scenario.run.output or ".")
    if args.command != "validate":
        out.mkdir(parents=True, exist_ok=True)

    if args.command == "validate":
        m = run.model
        print(f"valid: r={m.r} a={m.a:g} alpha={m.alpha:g} T={m.T} K={m.K} terms={m.potential.frequencies}")
        c = m.constants
        print(f"beta={c.beta:.6g} delta={c.delta:.6g} m_star={c.m_star} m_theorem={c.m_theorem}")
        return EXIT_OK
    if args.command == "assemble":
        summary = run.system.summary()
        (out / "system.json").write_text(to_json(summary) + "\n")
        for k, v in summary.items():
            print(f"{k} = {v}")
        return EXIT_OK
    if args.command == "trace1":
        write_trace1(run, out)
        print(f"rhs_first = {format_number(run.rhs_first)}")
        print(f"lhs1 at n_P={run.ledger.n_P}: {format_number(run.ledger.lhs1[-1])}")
        return EXIT_OK
    if args.command == "trace2":
        write_trace2(run, out)
        print(f"rhs_second = {format_number(run.rhs_second)}")
        print(f"lhs2 at n_P={run.ledger.n_P}: {format_number(run.ledger.lhs2[-1])}")
        return EXIT_OK
    if args.command == "asymptotics":
        write_weyl(run, out)
        for name, fit in run.weyl.items():
            if isinstance(fit, str):
                print(f"{name}: no fit ({fit})")
                continue
            print(f"{name}: slope={fit.slope:.6f} d1={fit.d1:.6f} (target {run.model.constants.beta:.6f})")
        print(f"d2 estimate = {run.constants.d2_estimate:.6g}")
        return EXIT_OK

    checks = run.checks()
    write_checks(checks, out)
    _print_checks(checks)
    if args.command == "report":
        write_trace1(run, out)
        write_trace2(run, out)
        write_weyl(run, out)
        (out / "report.json").write_text(to_json(run.report(checks)) + "\n")
    return EXIT_OK if all(c.passed for c in checks) else EXIT_CHECK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    threads = os.environ.get("REGTRACE_THREADS")
    limit = int(threads) if threads and threads.isdigit() and int(threads) > 0 else None
    try:
        with threadpool_limits(limits=limit):
            return run_command(args)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCENARIO
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except RegtraceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
