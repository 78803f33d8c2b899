"""Command-line entry point: `sov-verify run | reduce | eval`.

Exit codes: 0 when every check passes, 1 when any check fails, 2 on configuration
or runtime errors (a partial report is still written when the budget runs out).
"""

import argparse
import json
import logging
import os
import sys
from typing import List, Optional

from pydantic import ValidationError

from sov_verify.core.config import get_settings
from sov_verify.core.exceptions import BudgetExceeded, ConfigError, IoError, SovVerifyError
from sov_verify.core.logger import setup_logging
from sov_verify.schemas.chain import PointSpec
from sov_verify.schemas.report import SUITES, SuiteConfig
from sov_verify.services.diagrams import closed_form_to_model, diagram_from_dict, reduce
from sov_verify.services.reporting import emit_report, render_text
from sov_verify.services.sov import (
    EigenfunctionSpec,
    EigenKind,
    SeparatedPoint,
    phi_position_eval,
    psi_momentum_eval,
)
from sov_verify.services.suites import load_chain, run_suite

logger = logging.getLogger(__name__)

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_ERROR = 2


def build_parser() -> argparse.ArgumentParser:
    settings = get_settings()
    parser = argparse.ArgumentParser(prog="sov-verify", description="Numerical and symbolic checks for SL(2,C) SoV.")
    parser.add_argument("--log-level", default=None, help=f"Logging level (default: {settings.log_level}).")
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="Run a verification suite and write a report.")
    run.add_argument("--suite", required=True, choices=list(SUITES) + ["all"])
    run.add_argument("--chain", default=None, help="Chain specification (JSON).")
    run.add_argument("--seed", type=int, default=settings.seed, help=f"Seed for randomized draws (default: {settings.seed}).")
    run.add_argument("--tol", type=float, default=None, help="Tolerance overriding the suite default.")
    run.add_argument("--out", default=None, help="Report path (default: <report_dir>/<suite>.<format>).")
    run.add_argument("--format", choices=["json", "text"], default=settings.default_format)
    run.add_argument("--threads", type=int, default=None, help="Worker threads, capped by SOV_VERIFY_THREADS.")
    run.add_argument("--budget", type=float, default=600.0, help="Time budget in seconds (default: 600).")

    red = commands.add_parser("reduce", help="Reduce a diagram to its closed form.")
    red.add_argument("--diagram", required=True, help="Diagram JSON.")
    red.add_argument("--out", default=None, help="Closed-form JSON path (default: stdout).")
    red.add_argument("--strategy", choices=["leftmost", "rightmost"], default="leftmost")

    ev = commands.add_parser("eval", help="Evaluate an eigenfunction at a point.")
    ev.add_argument("function", choices=["psi", "phi"])
    ev.add_argument("--chain", required=True, help="Chain specification (JSON).")
    ev.add_argument("--point", required=True, help="Evaluation point (JSON).")
    return parser


def _read_json(path: str) -> dict:
    if not os.path.exists(path):
        raise ConfigError(f"{path} does not exist")
    try:
        with open(path, encoding="utf-8") as handle:
            return json.load(handle)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"Failed to read {path}: {str(e)}")


def _write(content: str, path: Optional[str]) -> None:
    if path is None:
        sys.stdout.write(content)
        return
    try:
        folder = os.path.dirname(os.path.abspath(path))
        os.makedirs(folder, exist_ok=True)
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(content)
    except OSError as e:
        raise IoError(f"Failed to write {path}: {str(e)}")


def _report_path(args: argparse.Namespace) -> str:
    if args.out:
        return args.out
    return os.path.join(get_settings().report_dir, f"{args.suite}.{args.format}")


def cmd_run(args: argparse.Namespace) -> int:
    tolerances = {}
    if args.tol is not None:
        names = list(SUITES) if args.suite == "all" else [args.suite]
        tolerances = {name: args.tol for name in names}
    cfg = SuiteConfig(
        suite=args.suite,
        chain_file=args.chain,
        tolerances=tolerances,
        seed=args.seed,
        budget=args.budget,
        threads=args.threads,
    )
    path = _report_path(args)
    try:
        report = run_suite(cfg)
    except BudgetExceeded as e:
        if e.report is not None:
            emit_report(e.report, path, args.format)
        logger.error("%s; partial report written to %s", e.detail, path)
        return EXIT_ERROR
    emit_report(report, path, args.format)
    if args.format == "text":
        sys.stdout.write(render_text(report))
    summary = report.summary
    logger.info("%d/%d checks passed, report at %s", summary.passed, summary.total, path)
    return EXIT_PASS if report.ok else EXIT_FAIL


def cmd_reduce(args: argparse.Namespace) -> int:
    diagram = diagram_from_dict(_read_json(args.diagram))
    closed = reduce(diagram, strategy=args.strategy)
    payload = closed_form_to_model(closed).model_dump(mode="json")
    _write(json.dumps(payload, indent=2, sort_keys=True) + "\n", args.out)
    return EXIT_PASS


def cmd_eval(args: argparse.Namespace) -> int:
    chain = load_chain(args.chain)
    point = PointSpec.model_validate(_read_json(args.point))
    separated = [SeparatedPoint.from_spec(s) for s in point.separated]
    if args.function == "psi":
        momenta = [m.value for m in point.momenta] or [point.p]
        spec = EigenfunctionSpec(EigenKind.B, chain, separated, p=complex(sum(momenta)))
        estimate = psi_momentum_eval(spec, momenta)
    else:
        spec = EigenfunctionSpec(EigenKind.A, chain, separated)
        estimate = phi_position_eval(spec, [z.value for z in point.z])
    value = complex(estimate.value)
    payload = {
        "function": args.function,
        "value": {"re": value.real, "im": value.imag},
        "error": estimate.err,
        "evals": estimate.evals,
        "converged": estimate.converged,
    }
    _write(json.dumps(payload, indent=2, sort_keys=True) + "\n", None)
    return EXIT_PASS


COMMANDS = {"run": cmd_run, "reduce": cmd_reduce, "eval": cmd_eval}


def main(argv: Optional[List[str]] = None) -> int:
    """Parse arguments, run the command and return its exit code."""
    args = build_parser().parse_args(argv)
    try:
        setup_logging(get_settings(), level=args.log_level)
        return COMMANDS[args.command](args)
    except ValidationError as e:
        logger.error("invalid input: %s", e)
        return EXIT_ERROR
    except (SovVerifyError, ValueError) as e:
        logger.error("%s: %s", type(e).__name__, getattr(e, "detail", str(e)))
        return EXIT_ERROR
