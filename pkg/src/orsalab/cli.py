"""Command-line entry point: ``orsalab <subcommand> --config run.yaml``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import pipeline
from .config import ConfigError, RunConfig, load_config
from .nested import NumericalError
from .proxy import ProxyError
from .regression import SingularDesignError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def _workers(value):
    if value == "auto":
        return value
    try:
        n = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError("workers must be a positive integer or 'auto'")
    if n < 1:
        raise argparse.ArgumentTypeError("workers must be >= 1")
    return n


def build_parser():
    p = argparse.ArgumentParser(prog="orsalab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML or JSON run configuration (defaults if omitted)")
    common.add_argument("--seed", type=int, help="override nested.seed")
    common.add_argument("--workers", type=_workers, help="worker processes, or 'auto'")
    common.add_argument("--out", help="output directory (overrides output_dir)")
    staged = argparse.ArgumentParser(add_help=False)
    staged.add_argument("--stage-input", help="directory holding the previous stage's artifacts")

    sub.add_parser("simulate", parents=[common], help="nested reference run")
    sub.add_parser("calibrate", parents=[common, staged], help="fit CF / LSMC proxies")
    sub.add_parser("solve", parents=[common, staged], help="required capital per constraint")
    sub.add_parser("compare", parents=[common, staged], help="assemble report.json")
    sub.add_parser("theory", parents=[common], help="synthetic efficiency experiments")
    sub.add_parser("validate-config", parents=[common], help="check a configuration file")
    sub.add_parser("run", parents=[common], help="all stages into one directory")
    return p


def _config(args):
    cfg = load_config(args.config) if args.config else RunConfig()
    cfg = cfg.with_overrides(seed=args.seed, workers=args.workers, output_dir=args.out)
    return cfg.validate()


def _summary(report):
    lines = []
    init = report.get("initial", {})
    if init and init["nav0"] == init["nav0"]:
        lines.append(f"NAV_0 = {init['nav0']:.4f}  SCR_0 = {init['scr0_standard_formula']:.4f}  "
                     f"SR_0 = {init['solvency_ratio0']:.3f}")
    for label, row in report.get("capital", {}).items():
        parts = [f"nested K = {row['nested']:.4f}"]
        for k, v in row.items():
            if k.endswith("_relative_difference"):
                parts.append(f"{k.split('_')[0]} {v:+.2%}")
        lines.append(f"{label}: " + ", ".join(parts))
    return "\n".join(lines)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = _config(args)
        if args.command == "validate-config":
            print("configuration OK")
            return EXIT_OK
        out = Path(cfg.output_dir)
        src = getattr(args, "stage_input", None)
        if args.command == "simulate":
            pipeline.stage_simulate(cfg, out, cfg.workers)
        elif args.command == "calibrate":
            pipeline.stage_calibrate(cfg, out, src, cfg.workers)
        elif args.command == "solve":
            pipeline.stage_solve(cfg, out, src)
        elif args.command == "compare":
            print(_summary(pipeline.stage_compare(cfg, out, src)))
        elif args.command == "theory":
            pipeline.stage_theory(cfg, out)
        elif args.command == "run":
            print(_summary(pipeline.run_pipeline(cfg, out, cfg.workers)))
        print(f"artifacts in {out}")
        return EXIT_OK
    except ConfigError as exc:
        print("configuration error:", file=sys.stderr)
        for e in exc.errors:
            print(f"  - {e}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"missing input: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SingularDesignError, NumericalError, ProxyError, FloatingPointError,
            ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
