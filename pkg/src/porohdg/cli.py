"""Command-line entry point.

Exit codes: 0 success, 1 runtime/solver failure, 2 usage or configuration
error.
"""

import argparse
import sys

from .config import ConfigError, expand_problem, parse_config
from .scenarios import PRESETS, scenario

USAGE = (
    "porohdg (--config PATH | --scenario NAME) [--degree K] [--dt S] "
    "[--tfinal S] [--levels L] [--out DIR] [--mode M] [--emit-matrix] [--seed N]"
)


def _build_parser():
    p = argparse.ArgumentParser(prog="porohdg", usage=USAGE, add_help=True)
    p.add_argument("--config", help="configuration file path")
    p.add_argument("--scenario", help=f"preset name: {', '.join(PRESETS)}")
    p.add_argument("--degree", type=int, help="override polynomial degree")
    p.add_argument("--dt", type=float, help="override time step [s]")
    p.add_argument("--tfinal", type=float, help="override final time [s]")
    p.add_argument("--levels", type=int, help="override convergence-study levels")
    p.add_argument("--out", help="override output directory")
    p.add_argument(
        "--mode", choices=("simulate", "convergence-study", "oracle-check"), help="override run mode"
    )
    p.add_argument("--emit-matrix", action="store_true", help="dump the global trace matrix (Matrix Market)")
    p.add_argument("--seed", type=int, help="random seed for oracle-check")
    return p


def main(argv=None):
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser = _build_parser()
    if not argv:
        parser.print_usage(sys.stderr)
        return 2
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on bad flags, 0 on --help
        return int(exc.code or 0)

    if bool(args.config) == bool(args.scenario):
        print("error: exactly one of --config or --scenario is required", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 2

    try:
        cfg = scenario(args.scenario) if args.scenario else parse_config(args.config)
        if args.degree is not None:
            cfg.degree = args.degree
            if cfg.degree < 1:
                raise ConfigError("--degree must be >= 1")
        if args.dt is not None:
            cfg.dt = args.dt
        if args.tfinal is not None:
            cfg.tfinal = args.tfinal
        if args.levels is not None:
            cfg.mode.levels = args.levels
        if args.out is not None:
            cfg.output.directory = args.out
        if args.mode is not None:
            cfg.mode.mode = args.mode
        if args.seed is not None:
            cfg.mode.seed = args.seed
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    try:
        expand_problem(cfg).execute(emit_matrix=args.emit_matrix)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # solver/runtime failures
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 1
    return 0


def console_main():
    sys.exit(main())
