"""Command-line interface: ``pairsrg srg sample|check``, ``circuit solve``, ``calculus test``.

Exit codes: 0 success, 1 usage or configuration error, 2 a check failed.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from .calculus import format_matrix, timed_suite
from .config import ConfigError, bundled_config, load_circuit_config, load_pair
from .circuits import sweep
from .extc import INF
from .regions import (
    DEFAULT_TOL,
    check_semimonotone_pair,
    cloud_margin,
    region_from_json,
)
from .srg import export_csv, export_svg, sample_pair_srg

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FAIL = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad flags; 2 is reserved for failed checks here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _num(x):
    """JSON-safe float."""
    if x is None:
        return None
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if math.isnan(x):
        return None
    return x


def _point(z):
    if z is None:
        return None
    if z is INF:
        return "inf"
    return [float(z.real), float(z.imag)]


def _fmt_point(z):
    if z is None:
        return "none"
    if z is INF:
        return "inf"
    return f"{z.real:.6g}{z.imag:+.6g}j"


def _emit(args, summary, lines):
    if args.json:
        print(json.dumps(summary, sort_keys=True))
    else:
        for line in lines:
            print(line)


def _load_region(text):
    path = Path(text)
    try:
        data = json.loads(path.read_text()) if path.is_file() else json.loads(text)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"--region: not a JSON file or JSON text ({exc})") from None
    try:
        return region_from_json(data)
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"--region: {exc}") from None


def _pair(source):
    if source is None:
        raise UsageError("--pair is required")
    try:
        return load_pair(source)
    except ConfigError as exc:
        raise UsageError(f"pair config: {exc}") from None


# ---------------------------------------------------------------------------
# srg sample / srg check
# ---------------------------------------------------------------------------


def cmd_srg_sample(args):
    spec = _pair(args.pair)
    region = _load_region(args.region) if args.region else None
    if args.out and Path(args.out).suffix.lower() not in (".csv", ".svg"):
        raise UsageError("--out must end in .csv or .svg")
    try:
        cloud = sample_pair_srg(spec.A, spec.B, args.n, args.seed, box=spec.box)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if args.out:
        out = Path(args.out)
        data = export_svg(cloud, region, title=spec.name) if out.suffix.lower() == ".svg" else export_csv(cloud)
        out.write_bytes(data)
    summary = {
        "command": "srg sample",
        "pair": spec.name,
        "n_inputs": cloud.n_inputs,
        "n_points": len(cloud.points),
        "has_infinity": bool(cloud.has_infinity),
        "min_real": _num(cloud.min_real()),
        "out": args.out,
    }
    lines = [
        f"pair {spec.name}: {cloud.n_inputs} inputs, {len(cloud.points)} points"
        + (", contains infinity" if cloud.has_infinity else ""),
        f"min Re z = {cloud.min_real():.6g}",
    ]
    if cloud.truncated:
        lines.append(f"warning: enumeration truncated after {cloud.n_pairs} records")
    code = EXIT_OK
    if region is not None:
        worst, witness = cloud_margin(region, cloud)
        ok = worst >= -args.tol
        summary.update(containment="pass" if ok else "fail", worst_margin=_num(worst), witness=_point(witness))
        lines.append(f"containment: {'pass' if ok else 'FAIL'} (worst margin {worst:.6g} at {_fmt_point(witness)}, tol {args.tol:g})")
        code = EXIT_OK if ok else EXIT_FAIL
    if args.out:
        lines.append(f"wrote {args.out}")
    summary["exit"] = code
    _emit(args, summary, lines)
    return code


def cmd_srg_check(args):
    spec = _pair(args.pair)
    try:
        rep = check_semimonotone_pair(spec.A, spec.B, args.mu, args.rho, args.n, args.seed, args.tol, box=spec.box)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    code = EXIT_OK if rep.ok else EXIT_FAIL
    summary = {"command": "srg check", "pair": spec.name, **rep.summary(), "exit": code}
    summary["worst_inequality_margin"] = _num(rep.worst_inequality_margin)
    summary["worst_srg_margin"] = _num(rep.worst_srg_margin)
    lines = [
        f"pair {spec.name}, mu = {args.mu:g}, rho = {args.rho:g}, {rep.n_records} records",
        f"inequality:  {'pass' if rep.inequality_ok else 'FAIL'} (worst margin {rep.worst_inequality_margin:.6g})",
        f"containment: {'pass' if rep.srg_ok else 'FAIL'} (worst margin {rep.worst_srg_margin:.6g}"
        f" at {_fmt_point(rep.witness)})",
    ]
    if not rep.agree:
        lines.append("warning: the two verdicts disagree")
    _emit(args, summary, lines)
    return code


# ---------------------------------------------------------------------------
# circuit solve
# ---------------------------------------------------------------------------


def _circuit_config(source):
    path = Path(source)
    if not path.exists() and source in ("leaky", "amplifier", "leaky.json", "amplifier.json"):
        return load_circuit_config(bundled_config(source))
    return load_circuit_config(source)


def cmd_circuit_solve(args):
    try:
        cfg = _circuit_config(args.config)
    except ConfigError as exc:
        print(f"error: config {exc}", file=sys.stderr)
        return EXIT_USAGE
    problem = cfg.problem()
    lines = [f"circuit {cfg.circuit}: {len(problem.t)} samples"]
    summary = {"command": "circuit solve", "circuit": cfg.circuit, "samples": len(problem.t)}
    if cfg.circuit == "amplifier":
        report = problem.preconditions()
        lines += ["preconditions:"] + ["  " + ln for ln in report.lines()]
        summary["preconditions"] = {k: (_num(v) if isinstance(v, float) else v) for k, v in report.as_dict().items()}
        if not report.ok:
            summary.update(ok=False, n_ok=0, exit=EXIT_FAIL)
            _emit(args, summary, lines + ["preconditions failed; not iterating"])
            return EXIT_FAIL
    sol = sweep(problem, tol=cfg.solver.tol, max_iters=cfg.solver.max_iters, mode=cfg.solver.mode, record_history=bool(args.trace))
    n_ok = sol.n_ok
    limit = None if sol.ok else n_ok
    if args.out:
        Path(args.out).write_text(sol.to_csv(limit))
    if args.trace:
        Path(args.trace).write_text(sol.traces_csv(limit))
    worst_res = float(np.max(sol.residuals[:n_ok])) if n_ok else math.inf
    summary.update(
        ok=sol.ok,
        n_ok=n_ok,
        max_residual=_num(worst_res),
        max_iterations=int(np.max(sol.iterations)) if len(sol.iterations) else 0,
    )
    lines.append(f"converged samples: {n_ok}/{len(problem.t)}, max residual {worst_res:.3g}")
    if sol.oracle_error is not None and n_ok:
        err = float(np.max(sol.oracle_error[:n_ok]))
        summary["max_oracle_error"] = _num(err)
        lines.append(f"max deviation from enumeration oracle {err:.3g}")
    if sol.fejer_max_increase is not None and n_ok:
        fej = float(np.max(sol.fejer_max_increase[:n_ok]))
        summary["fejer_max_increase"] = _num(fej)
        lines.append(f"largest Fejer distance increase {fej:.3g}")
    if not sol.ok:
        lines.append(f"failure: {sol.failure}")
        if args.out:
            lines.append(f"wrote the first {n_ok} rows to {args.out}")
    elif args.out:
        lines.append(f"wrote {args.out}")
    if args.trace:
        lines.append(f"wrote {args.trace}")
    code = EXIT_OK if sol.ok else EXIT_FAIL
    summary["exit"] = code
    _emit(args, summary, lines)
    return code


# ---------------------------------------------------------------------------
# calculus test
# ---------------------------------------------------------------------------


def cmd_calculus_test(args):
    results, elapsed = timed_suite(args.seed)
    ok = all(r.ok for r in results)
    code = EXIT_OK if ok else EXIT_FAIL
    summary = {
        "command": "calculus test",
        "seed": args.seed,
        "ok": ok,
        "failed": sorted({f"{r.rule}/dim{r.dim}" for r in results if not r.ok}),
        "exit": code,
    }
    # elapsed time is left out of the JSON summary to keep it deterministic
    _emit(args, summary, format_matrix(results, elapsed).splitlines())
    return code


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def build_parser():
    p = _Parser(prog="pairsrg", description="Scaled relative graphs of operator pairs.")
    sub = p.add_subparsers(dest="group", parser_class=_Parser)

    def common(q):
        q.add_argument("--json", action="store_true", help="print a one-line JSON summary instead of text")

    srg = sub.add_parser("srg", help="sample and check pair SRGs")
    ssub = srg.add_subparsers(dest="command", parser_class=_Parser)
    s = ssub.add_parser("sample", help="sample the SRG of an operator pair")
    s.add_argument("--pair", required=True, help="preset name or pair config JSON")
    s.add_argument("--n", type=int, default=200, help="number of inputs (default 200)")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", help="output path ending in .csv or .svg")
    s.add_argument("--region", help="region JSON (file or literal) to test containment against")
    s.add_argument("--tol", type=float, default=DEFAULT_TOL)
    common(s)
    s.set_defaults(func=cmd_srg_sample)

    c = ssub.add_parser("check", help="test (mu, rho)-semimonotonicity of a pair")
    c.add_argument("--pair", required=True, help="preset name or pair config JSON")
    c.add_argument("--mu", type=float, default=0.0)
    c.add_argument("--rho", type=float, default=0.0)
    c.add_argument("--n", type=int, default=200)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--tol", type=float, default=DEFAULT_TOL)
    common(c)
    c.set_defaults(func=cmd_srg_check)

    circ = sub.add_parser("circuit", help="solve the bundled circuit problems")
    csub = circ.add_subparsers(dest="command", parser_class=_Parser)
    cs = csub.add_parser("solve", help="solve a circuit over its time grid")
    cs.add_argument("--config", required=True, help="circuit config JSON, or 'leaky' / 'amplifier' for the bundled ones")
    cs.add_argument("--out", help="solution CSV path")
    cs.add_argument("--trace", help="iteration trace CSV path")
    common(cs)
    cs.set_defaults(func=cmd_circuit_solve)

    calc = sub.add_parser("calculus", help="SRG calculus property suite")
    ksub = calc.add_subparsers(dest="command", parser_class=_Parser)
    kt = ksub.add_parser("test", help="run the matched-seed calculus suite")
    kt.add_argument("--seed", type=int, default=0)
    common(kt)
    kt.set_defaults(func=cmd_calculus_test)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if not hasattr(args, "func"):
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    if getattr(args, "n", 2) < 2:
        print("error: --n must be at least 2", file=sys.stderr)
        return EXIT_USAGE
    if getattr(args, "tol", 0.0) < 0:
        print("error: --tol must be nonnegative", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
