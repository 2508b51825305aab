import argparse
import json
import logging
import os
import sys
from typing import Optional, Sequence

from pydantic import ValidationError

from execution import export as exporter
from execution.bounds import BoundReport, ConstantsError
from execution.config import COMMANDS, RunConfig, configure_logging, default_config, load_config

logger = logging.getLogger("cli")

COMMAND_HELP = {
    "simulate": "sample Wigner matrices and dump their spectra",
    "rate": "Delta_p rate experiment (log-log slope and sqrt(n) witness)",
    "variance": "variance and moment bounds for s_n(z) on a z-grid",
    "bai": "Bai inequality report for sampled spectra",
    "diag": "leave-one-out tables, beta exceedance and exact identities",
    "lawcheck": "semicircle law self-checks and the gap integral",
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration (defaults per command otherwise)")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--workers", type=int, help="worker processes")
    common.add_argument("--out", help="output directory")
    common.add_argument("--format", choices=exporter.FORMATS, help="result file format")

    parser = argparse.ArgumentParser(prog="wigner", description="Wigner matrix simulations and semicircle-law checks")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=COMMAND_HELP[name])
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = load_config(args.config) if args.config else default_config(args.command)
    overrides = {k: getattr(args, k) for k in ("seed", "workers", "out", "format") if getattr(args, k) is not None}
    if overrides:
        cfg = RunConfig.model_validate(cfg.model_dump() | overrides)
    return cfg


def _print_reports(reports: Sequence[BoundReport]):
    for r in reports:
        status = "PASS" if r.passed else "FAIL"
        if not r.asserted:
            status += " (not asserted)"
        shown = ", ".join(f"{l:.6g} <= {h:.6g}" for l, h in zip(r.lhs[:4], r.rhs[:4]))
        more = f" ... ({len(r.lhs)} entries)" if len(r.lhs) > 4 else ""
        print(f"{r.name}: {status}  {shown}{more}")
        for flag in r.flags:
            print(f"    flag: {flag}")


def run_command(command: str, cfg: RunConfig) -> int:
    out_dir = cfg.out or os.path.join("results", command)
    outcome = exporter.run_and_export(command, cfg, out_dir)
    for line in outcome.lines:
        print(line)
    _print_reports(outcome.reports)
    for path in outcome.files:
        logger.info(f"Result file: {path}")
    print("PASS" if outcome.exit_code == 0 else "FAIL")
    return outcome.exit_code


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    configure_logging("cli")
    try:
        cfg = resolve_config(args)
    except (FileNotFoundError, json.JSONDecodeError, ValidationError, ValueError) as e:
        logger.error(f"Configuration error: {e}")
        print(f"error: {e}", file=sys.stderr)
        return 2

    logger.info(f"Running {args.command} (seed={cfg.seed}, workers={cfg.workers})")
    try:
        return run_command(args.command, cfg)
    except (ConstantsError, OSError) as e:
        logger.error(f"{args.command} failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:
        logger.error(f"{args.command} failed: {e}", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
