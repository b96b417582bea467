"""Command-line entry point: run experiments, oracle checks, listings."""

from __future__ import annotations

import argparse
import sys

from .config import EXPERIMENTS, ConfigError, parse_config
from .experiments import emit_results, run_experiment


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="jointdiff",
        description="Joint model-free/model-based diffusion experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run an experiment config")
    run_p.add_argument("config", help="path to the config document")
    run_p.add_argument("--seed-override", type=int, default=None,
                       help="replace the config's seed list with one seed")
    run_p.add_argument("--out", default=None, help="output CSV path override")
    run_p.add_argument("--budget-scale", type=float, default=1.0,
                       help="uniformly scale candidate and episode counts")
    run_p.add_argument("--threads", type=int, default=1,
                       help="worker threads across experiment cells")

    sub.add_parser("oracle", help="run the reduced oracle check battery")
    sub.add_parser("list-experiments", help="print the experiment names")

    args = parser.parse_args(argv)

    if args.command == "list-experiments":
        for name in EXPERIMENTS:
            print(name)
        return 0

    if args.command == "oracle":
        from .oracles import run_oracle_checks

        failed = 0
        for name, passed, value in run_oracle_checks(seed=0):
            status = "pass" if passed else "FAIL"
            print(f"{name}: {status} (value = {value:.6g})")
            failed += 0 if passed else 1
        return 1 if failed else 0

    try:
        with open(args.config) as fh:
            cfg = parse_config(fh.read())
        if args.seed_override is not None:
            cfg.seeds = [args.seed_override]
        out_path = args.out or cfg.out
        rows = run_experiment(cfg, budget_scale=args.budget_scale,
                              threads=args.threads)
        emit_results(rows, out_path)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"{len(rows)} result rows -> {out_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
