"""Command-line entry points: run, tune, bench-nystrom."""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .config import load_run_config, load_search_space
from .harness import bench_nystrom, random_search, run_experiment, write_bench_table


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="pinnopt",
                                     description="Natural-gradient PINN training runs")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one training run")
    p_run.add_argument("--config", required=True, help="TOML run config")
    p_run.add_argument("--out", required=True, help="output directory")

    p_tune = sub.add_parser("tune", help="two-stage random hyperparameter search")
    p_tune.add_argument("--space", required=True, help="TOML search space")
    p_tune.add_argument("--config", required=True, help="TOML base run config")
    p_tune.add_argument("--out", required=True, help="output directory")
    p_tune.add_argument("--seed", type=int, default=0)

    p_bench = sub.add_parser("bench-nystrom", help="CPU timing of the Nyström variants")
    p_bench.add_argument("--n", type=int, required=True)
    p_bench.add_argument("--fracs", required=True,
                         help="comma-separated sketch fractions, e.g. 0.2,0.4")
    p_bench.add_argument("--out", required=True)
    p_bench.add_argument("--reps", type=int, default=100)
    p_bench.add_argument("--warmup", type=int, default=10)
    p_bench.add_argument("--seed", type=int, default=0)

    args = parser.parse_args(argv)

    if args.command == "run":
        result = run_experiment(load_run_config(args.config), args.out)
        s = result.summary
        print(f"status={s['status']} steps={s['steps']} seconds={s['seconds']:.1f} "
              f"final_l2={s['final_l2']:.3e} best_l2={s['best_l2']:.3e}")
        return 0 if s["status"] == "ok" else 1

    if args.command == "tune":
        space = load_search_space(args.space)
        base = load_run_config(args.config)
        result = random_search(space, base, np.random.default_rng(args.seed), args.out)
        print(f"status={result.status} attempted={result.attempted}")
        for trial in result.ranking[:5]:
            print(f"  stage{trial.stage} #{trial.index:03d} "
                  f"final_l2={trial.final_l2:.3e} {trial.overrides}")
        return 0 if result.status == "ok" else 1

    if args.command == "bench-nystrom":
        fracs = [float(f) for f in args.fracs.split(",") if f]
        rows = bench_nystrom(args.n, fracs, reps=args.reps, warmup=args.warmup,
                             seed=args.seed)
        path = write_bench_table(rows, args.out)
        for row in rows:
            print(f"frac={row.sketch_frac:.2f} l={row.sketch_size} "
                  f"gpu={row.time_gpu_s:.4f}s stable={row.time_stable_s:.4f}s "
                  f"speedup={row.speedup:.2f}x")
        print(f"wrote {path}")
        return 0

    return 2


if __name__ == "__main__":
    sys.exit(main())
