#!/usr/bin/env python3
"""How the spread of the mean accuracy shrinks with more repetitions.

Runs one small noisy configuration for the largest requested repetition
count and reports, for each prefix length, the per-repetition std and the
std of the mean.
"""

import argparse

import numpy as np

from insider_forest.evaluate import SearchSpace
from insider_forest.experiment import ExperimentConfig, run_experiments


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--reps", type=int, nargs="+", default=[10, 30, 100])
    ap.add_argument("--n", type=int, default=320)
    ap.add_argument("--separation", type=float, default=0.5)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()

    cfg = ExperimentConfig(
        source={"type": "synthetic", "m": 25, "n_informative": 5, "class_separation": args.separation},
        n_transactions=args.n, seed=args.seed,
        search=SearchSpace(ntrees=(50, 100), n_iterations=2, k_folds=3),
    )
    acc = 100 * np.array(run_experiments(cfg, reps=max(args.reps)).metric_values("acc"), dtype=float)
    print(f"{'reps':>6} {'mean acc %':>10} {'std (pts)':>9} {'std of mean':>12}")
    for r in sorted(args.reps):
        head = acc[:r]
        sd = head.std(ddof=1)
        print(f"{r:>6} {head.mean():>10.2f} {sd:>9.2f} {sd / np.sqrt(r):>12.3f}")


if __name__ == "__main__":
    main()
