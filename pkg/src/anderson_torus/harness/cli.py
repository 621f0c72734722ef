"""Command line entry point: ``anderson-torus {run,emit-plots,validate,oracle}``."""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

from . import oracles
from .config import ExperimentConfig, load_config
from .experiments import run_experiment
from .plots import emit_plots

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="anderson-torus",
                                     description="Spectral experiments for the Anderson Hamiltonian on T^2.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the experiment described by a JSON config")
    run.add_argument("config")
    run.add_argument("--threads", type=_positive_int, default=1, help="worker processes (results do not depend on it)")
    run.add_argument("--seed-override", type=int, default=None, help="replace the base seed of the config")
    run.add_argument("--out", default=None, help="output directory (default: output_dir from the config)")

    plots = sub.add_parser("emit-plots", help="write gnuplot scripts for the data files of a run")
    plots.add_argument("run_dir")

    val = sub.add_parser("validate", help="check a config against the schema without running it")
    val.add_argument("config")

    orc = sub.add_parser("oracle", help="compare library routines with independent reference computations")
    orc.add_argument("suite", choices=list(oracles.SUITES) + ["all"])
    orc.add_argument("--seed-override", type=int, default=0)
    return parser


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.seed_override is not None:
        cfg = dataclasses.replace(cfg, seeds={**cfg.seeds, "base": args.seed_override})
    result = run_experiment(cfg, threads=args.threads, out_dir=args.out)
    print(f"{cfg.experiment}: wrote {result.out_dir}")
    for f in result.failures:
        print(f"  realization {f['index']} (seed {f['seed']}) failed: {f['error']}", file=sys.stderr)
    return EXIT_OK if result.ok else EXIT_FAILED


def _cmd_validate(args) -> int:
    cfg = load_config(args.config)
    print(f"{args.config}: valid {cfg.experiment} config ({len(cfg.seed_list())} realizations, N={cfg.N})")
    return EXIT_OK


def _cmd_plots(args) -> int:
    for path in emit_plots(args.run_dir):
        print(path)
    return EXIT_OK


def _cmd_oracle(args) -> int:
    checks = oracles.run_oracles(args.suite, seed=args.seed_override)
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.suite:<12} {c.name:<34} err={c.error:.3e}  tol={c.tol:.0e}")
    return EXIT_OK if all(c.passed for c in checks) else EXIT_FAILED


_COMMANDS = {"run": _cmd_run, "validate": _cmd_validate, "emit-plots": _cmd_plots, "oracle": _cmd_oracle}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
