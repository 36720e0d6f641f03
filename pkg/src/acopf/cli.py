"""Command-line front end.

Exit codes: 0 success or feasible, 1 infeasible or violated, 2 input error,
3 numerical failure. Diagnostics go to stderr through loguru.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Dict, List, Optional

from loguru import logger
from pydantic import ValidationError

from shared.config import get_settings
from shared.errors import AcopfError, BoundChainViolation, PointFormatError
from shared.logging import configure_logging
from shared.schemas import BoundsReport, SolveOptions, SolveResult, SolveStatus

from .builders import BUILDERS, build
from .case_io import load_case
from .export import export_json, export_sdpa
from .formulation import check_point_names, evaluate
from .network import require_valid
from .solvers import bound_report
from .transforms import VoltagePoint, lift_point

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_INPUT = 2
EXIT_NUMERICAL = 3


def _write(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
        logger.info("Wrote {}", out)
    else:
        sys.stdout.write(text)


def read_point(path: str) -> Dict[str, float]:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise PointFormatError(f"{path}: not valid JSON ({exc.msg})") from exc
    if not isinstance(payload, dict):
        raise PointFormatError(f"{path}: a point is a JSON object of name -> value")
    point = {}
    for name, value in payload.items():
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise PointFormatError(f"{path}: value of {name} is not a number")
        point[name] = float(value)
    return point


def cmd_parse(args: argparse.Namespace) -> int:
    grid = load_case(args.case)
    require_valid(grid)
    print(grid.summary())
    return EXIT_OK


def cmd_build(args: argparse.Namespace) -> int:
    grid = load_case(args.case)
    _write(export_json(build(args.form, grid)), args.out)
    return EXIT_OK


def cmd_check(args: argparse.Namespace) -> int:
    grid = load_case(args.case)
    f = build(args.form, grid)
    point = read_point(args.point)
    check_point_names(f, point)
    report = evaluate(f, point)
    print(report.model_dump_json(indent=2))
    tol = args.tol if args.tol is not None else get_settings().tol_feas
    feasible = report.max_violation <= tol
    logger.info("max violation {:.3e} at tol {:.1e}: {}", report.max_violation, tol, "feasible" if feasible else "infeasible")
    return EXIT_OK if feasible else EXIT_VIOLATION


def _row(label: str, result: Optional[SolveResult]) -> str:
    if result is None:
        return f"{label:<6} {'-':<20} {'-':>18} {'-':>10}"
    return f"{label:<6} {result.status.value:<20} {result.objective:>18.10g} {result.max_violation:>10.2e}"


def format_bounds(report: BoundsReport) -> str:
    lines = [
        f"{'bound':<6} {'status':<20} {'objective':>18} {'violation':>10}",
        _row("lower", report.lower),
        _row("upper", report.upper),
    ]
    if report.gap is not None:
        lines.append(f"gap {report.gap:.6e}")
    return "\n".join(lines) + "\n"


def cmd_solve(args: argparse.Namespace) -> int:
    grid = load_case(args.case)
    lb, ub = args.lb, args.ub
    if not (lb or ub):
        lb = ub = True
    opts = SolveOptions.from_settings(tol_feas=args.tol, rng_seed=args.seed, multistart_count=args.multistart)
    try:
        report = bound_report(grid, opts, lb=lb, ub=ub)
    except BoundChainViolation as exc:
        logger.error("{}", exc)
        return EXIT_VIOLATION
    _write(format_bounds(report), args.out)

    results: List[SolveResult] = [r for r in (report.lower, report.upper) if r is not None]
    if any(r.status == SolveStatus.NUMERICAL_FAILURE for r in results):
        return EXIT_NUMERICAL
    if any(r.status == SolveStatus.INFEASIBLE_DETECTED for r in results):
        return EXIT_VIOLATION
    return EXIT_OK


def cmd_export(args: argparse.Namespace) -> int:
    grid = load_case(args.case)
    f = build(args.form, grid)
    _write(export_sdpa(f) if args.sdpa else export_json(f), args.out)
    return EXIT_OK


def cmd_point(args: argparse.Namespace) -> int:
    grid = load_case(args.case)
    require_valid(grid)
    if not args.flat:
        raise PointFormatError("only flat start points can be generated (pass --flat)")
    point = lift_point(grid, VoltagePoint.flat(grid), None, args.form)
    _write(json.dumps(point, sort_keys=True, indent=1) + "\n", args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="acopf", description="AC optimal power flow formulations, checks and bounds")
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name: str, handler, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("case", help="case file (.dat or MATPOWER .m)")
        p.set_defaults(handler=handler)
        return p

    def form_flag(p: argparse.ArgumentParser, required: bool = True) -> None:
        p.add_argument("--form", choices=sorted(BUILDERS), required=required, help="formulation kind")

    command("parse", cmd_parse, "validate a case and print its summary")

    p = command("build", cmd_build, "write a formulation as JSON")
    form_flag(p)
    p.add_argument("--out", help="output path (default stdout)")

    p = command("check", cmd_check, "evaluate a point against a formulation")
    form_flag(p)
    p.add_argument("--point", required=True, help="JSON object mapping variable names to values")
    p.add_argument("--tol", type=float, help="feasibility tolerance")

    p = command("solve", cmd_solve, "compute lower and/or upper bounds")
    p.add_argument("--lb", action="store_true", help="run the conic relaxation for a lower bound")
    p.add_argument("--ub", action="store_true", help="run the local solver for an upper bound")
    p.add_argument("--tol", type=float, help="feasibility tolerance")
    p.add_argument("--seed", type=int, help="multistart seed")
    p.add_argument("--multistart", type=int, help="number of local starts")
    p.add_argument("--out", help="output path (default stdout)")

    p = command("export", cmd_export, "write a formulation as JSON or SDPA")
    form_flag(p)
    p.add_argument("--sdpa", action="store_true", help="sparse SDPA text instead of JSON")
    p.add_argument("--out", help="output path (default stdout)")

    p = command("point", cmd_point, "write a start point for a formulation")
    form_flag(p)
    p.add_argument("--flat", action="store_true", help="unit voltages with the dispatch they imply")
    p.add_argument("--out", help="output path (default stdout)")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    configure_logging(get_settings().log)
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except (AcopfError, ValidationError, OSError) as exc:
        logger.error("{}", exc)
        return EXIT_INPUT
