#!/usr/bin/env python3
"""
Command line front end: run, check-f, normalize, selftest
"""
import argparse
import asyncio
import logging
import sys
from typing import Dict, List, Optional

from config import settings
from core.app import QFlowApp, load_run_config
from core.errors import DegenerateFunctionError, GaugeFailure, QFlowError
from services.selftest_service import all_passed

logger = logging.getLogger(__name__)

RUN_EXIT_CODES: Dict[str, int] = {
    "Converged": 0,
    "Concentrated": 2,
    "TimeExhausted": 3,
    "Failed": 1,
}
EXIT_ERROR = 1
EXIT_CONDITION_FAILS = 4
EXIT_HYPOTHESES_VIOLATED = 5
EXIT_GAUGE_FAILURE = 6


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qflow", description="Prescribed Q-curvature flow on S^4")
    parser.add_argument("--quiet", action="store_true", help="Disable progress bars")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Integrate the flow from a config file")
    run.add_argument("--config", required=True, help="Flat key = value run configuration")
    run.add_argument("--out", default=None, help="Output directory (overrides out_dir)")

    check = sub.add_parser("check-f", help="Critical points and the counting condition for f")
    check.add_argument("--f", dest="f_spec", required=True, help="const:, linear:, quadric: or coeffs: spec")
    check.add_argument("--band-limit", type=int, default=None, help="Band limit used to expand f")

    norm = sub.add_parser("normalize", help="Center-of-mass gauge of a snapshot")
    norm.add_argument("--in", dest="snapshot_in", required=True, help="Input snapshot")
    norm.add_argument("--out", dest="snapshot_out", required=True, help="Output snapshot")

    selftest = sub.add_parser("selftest", help="Operator, energy, gauge and Morse acceptance suites")
    selftest.add_argument("--band-limit", type=int, default=None, help="Band limit of the suites")
    return parser


def _fail(message: str) -> None:
    print(f"❌ {message}", file=sys.stderr)


async def cmd_run(app: QFlowApp, args: argparse.Namespace) -> int:
    config = load_run_config(args.config, args.out)
    outcome = await app.run(config, progress=not args.quiet)
    print(app.reports.render_run_summary(outcome.summary), end="")
    if outcome.verdict.kind == "Failed":
        _fail(f"Run failed: {outcome.verdict.message}")
    else:
        print(f"✅ Outputs in {outcome.out_dir}")
    return RUN_EXIT_CODES[outcome.verdict.kind]


async def cmd_check_f(app: QFlowApp, args: argparse.Namespace) -> int:
    try:
        report = await app.check_f(args.f_spec, args.band_limit, progress=not args.quiet)
    except DegenerateFunctionError as e:
        _fail(f"Hypotheses violated: {e}")
        return EXIT_HYPOTHESES_VIOLATED
    print(app.reports.render_morse_report(report), end="")
    if report.hypothesis_violations:
        return EXIT_HYPOTHESES_VIOLATED
    if not report.condition_satisfied:
        return EXIT_CONDITION_FAILS
    return 0


async def cmd_normalize(app: QFlowApp, args: argparse.Namespace) -> int:
    try:
        outcome = await app.normalize(args.snapshot_in, args.snapshot_out)
    except GaugeFailure as e:
        _fail(f"Gauge failure: {e}")
        return EXIT_GAUGE_FAILURE
    print(app.reports.render_normalize(**outcome.report_context()), end="")
    print(f"✅ Wrote {args.snapshot_out}")
    return 0


async def cmd_selftest(app: QFlowApp, args: argparse.Namespace) -> int:
    band_limit = args.band_limit or settings.default_band_limit
    checks = await app.selftest(band_limit)
    print(app.reports.render_selftest(checks, band_limit), end="")
    if all_passed(checks):
        print("✅ All checks passed")
        return 0
    _fail("Some checks failed")
    return EXIT_ERROR


COMMANDS = {
    "run": cmd_run,
    "check-f": cmd_check_f,
    "normalize": cmd_normalize,
    "selftest": cmd_selftest,
}


async def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    app = QFlowApp()
    try:
        return await COMMANDS[args.command](app, args)
    except (QFlowError, OSError) as e:
        logger.debug("Command failed", exc_info=True)
        _fail(f"{type(e).__name__}: {e}")
        return EXIT_ERROR


def entrypoint() -> None:
    logging.basicConfig(
        level=settings.log_level,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    sys.exit(asyncio.run(main()))


if __name__ == "__main__":
    entrypoint()
