"""Command-line runner: one subcommand per experiment kind.

Flags override config-file fields; `--seed` is mandatory for
result-bearing runs.  Exit codes: 0 success, 2 config error, 3 IO error,
4 run marked invalid by the walker diagnostics.
"""

from __future__ import annotations

import argparse
import sys

from .experiments import (ConfigError, KINDS, config_from_file,
                          run_experiment, write_results)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_INVALID = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sausagelab",
        description=("Monte Carlo experiments on Wiener sausages and "
                     "Newtonian capacity in four dimensions"))
    sub = parser.add_subparsers(dest="kind", required=True)
    for kind in KINDS:
        p = sub.add_parser(kind, help=f"run the '{kind}' experiment")
        p.add_argument("--config", default="", help="INI config file")
        p.add_argument("--seed", type=int, default=None,
                       help="base seed (required)")
        p.add_argument("--workers", type=int, default=None)
        p.add_argument("--out", default=None, help="output file path")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("--t-grid", dest="t_grid", default=None,
                       help="space or comma separated horizon grid")
        p.add_argument("--delta", type=float, default=None)
        p.add_argument("--r-sausage", dest="r_sausage", type=float,
                       default=None)
        p.add_argument("--n-paths", dest="n_paths", type=int, default=None)
        p.add_argument("--n-walkers", dest="n_walkers", type=int,
                       default=None)
        p.add_argument("--levels", type=int, default=None)
        p.add_argument("--z-norm", dest="z_norm", type=float, default=None)
        p.add_argument("--eps-hit", dest="eps_hit", type=float, default=None)
        p.add_argument("--r-escape", dest="r_escape", type=float,
                       default=None)
        p.add_argument("--max-steps", dest="max_steps", type=int,
                       default=None)
        p.add_argument("--restart", dest="restart_mode",
                       choices=("roulette", "weighted"), default=None)
        p.add_argument("--timing", action="store_true",
                       help="record wall time in rows "
                            "(breaks byte-determinism)")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {k: getattr(args, k) for k in
                 ("seed", "workers", "out", "t_grid", "delta", "r_sausage",
                  "n_paths", "n_walkers", "levels", "z_norm", "eps_hit",
                  "r_escape", "max_steps", "restart_mode")}
    try:
        config = config_from_file(args.config, args.kind, overrides)
    except ConfigError as err:
        print(f"config error:\n  " + "\n  ".join(err.errors), file=sys.stderr)
        return EXIT_CONFIG
    except OSError as err:
        print(f"cannot read config: {err}", file=sys.stderr)
        return EXIT_IO
    rows = run_experiment(config, timing=args.timing)
    invalid = any(r.experiment.endswith(":invalid") for r in rows)
    out = config.out_path
    try:
        if out:
            write_results(rows, out, args.format)
            print(f"wrote {len(rows)} rows to {out}", file=sys.stderr)
        else:
            for r in rows:
                print(f"{r.experiment}\tt={r.t:g}\tmean={r.mean:.6g}"
                      f"\tse={r.std_error:.3g}\tn={r.n}")
    except OSError as err:
        print(f"cannot write results: {err}", file=sys.stderr)
        return EXIT_IO
    if invalid:
        print("run marked invalid: max-step escape rate above tolerance",
              file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
