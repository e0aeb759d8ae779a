"""Command-line front end.

    qfikit <experiment> [--config FILE] [--out DIR] [--grid.T START:STOP:STEP]
                        [--g VALUE] [--n-max N] [--tol VALUE] ...

Flags beat environment variables beat the config file beat built-in defaults.
Exit status: 0 on success, 1 when a computation or validation check fails,
2 for unusable arguments or configuration.
"""

from __future__ import annotations

import argparse
import sys

from .errors import ConfigError, QfikitError
from .experiments import (
    EXPERIMENTS,
    OUT_DIR_ENV,
    THREADS_ENV,
    load_config,
    parse_axis,
    parse_initial,
    run_experiment,
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qfikit",
        description="Sweep, validate, and plot quantum Fisher information "
        "for the force-sensing models in this package.",
        epilog=f"Environment: {OUT_DIR_ENV} sets the default output directory, "
        f"{THREADS_ENV} the default worker count; explicit flags win.",
    )
    parser.add_argument("experiment", choices=EXPERIMENTS, help="which experiment to run")
    parser.add_argument("--config", metavar="FILE", help="INI config file")
    parser.add_argument("--out", metavar="DIR", help="output directory")
    parser.add_argument(
        "--grid.T", dest="grid_T", metavar="SPEC",
        help='time grid, "start:stop:step" or comma list',
    )
    parser.add_argument("--g", type=float, help="coupling strength")
    parser.add_argument("--f", type=float, help="parameter value the probe sits at")
    parser.add_argument("--n", type=int, help="site / qubit count (model dependent)")
    parser.add_argument("--n-max", dest="n_max", type=int, help="site-count scan limit")
    parser.add_argument(
        "--tol", type=float,
        help="tighten validation tolerances to at most this value",
    )
    parser.add_argument(
        "--family", help="model family for experiments that take one"
    )
    parser.add_argument(
        "--initial", metavar="STATE",
        help='initial oscillator state: vacuum, coherent:<alpha>, squeezed:<r>',
    )
    parser.add_argument("--threads", type=int, help="worker threads for grid points")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on bad usage, 0 on --help
        return int(exc.code or 0)

    overrides: dict = {
        "out_dir": args.out,
        "g": args.g,
        "f": args.f,
        "n": args.n,
        "n_max": args.n_max,
        "tol": args.tol,
        "family": args.family,
        "threads": args.threads,
    }
    try:
        if args.grid_T is not None:
            overrides["T_grid"] = parse_axis(args.grid_T)
        if args.initial is not None:
            overrides["initial"] = parse_initial(args.initial)
        config = load_config(args.experiment, args.config, overrides)
    except ConfigError as exc:
        print(f"qfikit: {exc}", file=sys.stderr)
        return 2

    try:
        result = run_experiment(config)
    except ConfigError as exc:
        print(f"qfikit: {exc}", file=sys.stderr)
        return 2
    except QfikitError as exc:
        print(f"qfikit: {exc}", file=sys.stderr)
        return 1

    wrote = [str(result.csv_path)]
    if result.svg_path is not None:
        wrote.append(str(result.svg_path))
    wrote.append(str(result.manifest_path))
    print("wrote " + ", ".join(wrote))
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
