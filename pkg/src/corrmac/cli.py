"""Command-line entry point: ``corrmac --config sweep.cfg --mode analysis --out table.csv``."""
from __future__ import annotations

import argparse
import sys

from .errors import ConfigError, InfeasibleConfiguration, InvalidParameter, SchemaError
from .sweep import MODES, consistency_report, format_csv, load_config, run_sweep

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_VIOLATION = 4
EXIT_SCHEMA = 5


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="corrmac",
        description="Bounds, analysis and Monte Carlo sweeps for correlated sensors on a "
                    "non-coherent MAC with a two-round feedback protocol.")
    p.add_argument("--config", metavar="PATH", help="sweep configuration file")
    p.add_argument("--mode", choices=MODES, help="override the mode given in the config")
    p.add_argument("--trials", type=int, metavar="N", help="Monte Carlo trials per grid point")
    p.add_argument("--seed", type=int, metavar="S", help="base seed")
    p.add_argument("--workers", type=int, metavar="K", help="grid points evaluated concurrently")
    p.add_argument("--out", metavar="PATH", default="-", help="CSV output path (default: stdout)")
    p.add_argument("--strict", action="store_true",
                   help="fail on infeasible rows or bound violations")
    p.add_argument("--check", metavar="CSV",
                   help="only run the consistency report on an existing CSV")
    return p


def _check(path: str, strict: bool) -> int:
    try:
        report = consistency_report(path, require_empirical=False)
    except OSError as exc:
        print(f"error: cannot read {path}: {exc.strerror}", file=sys.stderr)
        return EXIT_CONFIG
    except SchemaError as exc:
        print(f"error: {path}: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    print(report.format())
    return EXIT_VIOLATION if strict and report.violations else EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.check:
        return _check(args.check, args.strict)
    if not args.config:
        print("error: --config is required unless --check is given", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config)
        if args.trials is not None and args.trials < 1:
            raise ConfigError("--trials must be >= 1")
        if args.workers is not None and args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        result = run_sweep(cfg, mode=args.mode, trials=args.trials, seed=args.seed, workers=args.workers)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvalidParameter as exc:
        # e.g. a malformed compute-cap override in the environment
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleConfiguration as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE

    text = format_csv(result)
    if args.out == "-":
        sys.stdout.write(text)
    else:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)

    code = EXIT_OK
    if result.n_infeasible:
        print(f"warning: {result.n_infeasible} grid point(s) exceed the detection compute cap; "
              "empirical columns left empty", file=sys.stderr)
        if args.strict:
            code = EXIT_INFEASIBLE
    if result.mode == "simulate":
        report = consistency_report((result.columns, [
            {c: ("" if r.get(c) is None else str(r.get(c))) for c in result.columns} for r in result.rows]))
        print(report.format(), file=sys.stderr)
        if args.strict and report.violations and code == EXIT_OK:
            code = EXIT_VIOLATION
    return code


if __name__ == "__main__":
    sys.exit(main())
