#!/usr/bin/env python3
"""Compare the standard and similarity-coupled network losses on synthetic data.

Trains the same architecture twice on one generated dataset: once with the
plain per-pattern loss, once with the coupled loss swept over its built-in
coupling-width line search. Prints the combined report. Labels are random,
so differences are informational only.

    python3 scripts/run_nn_loss_comparison.py --out runs/nn --seed 3
"""

from __future__ import annotations

import argparse
import os
import sys

try:
    from gqlearn import cli
except ImportError:  # fresh checkout without an editable install
    sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))
    from gqlearn import cli


def parse_args(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="nn_comparison_out", help="run directory")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--n", type=int, default=300, help="points to generate")
    parser.add_argument("--split", default="200,50,50", help="n_train,n_val,n_test")
    parser.add_argument("--hidden", default="16", help="comma-separated hidden sizes")
    parser.add_argument("--epochs", type=int, default=200)
    parser.add_argument("--batch-size", type=int, default=5000, dest="batch_size")
    parser.add_argument("--budget-secs", type=float, default=120.0, dest="budget_secs")
    return parser.parse_args(argv)


def main(argv=None) -> int:
    args = parse_args(argv)
    os.makedirs(args.out, exist_ok=True)
    dataset = os.path.join(args.out, f"normal{args.n}.csv")
    rc = cli.main(["synth", "normal", str(args.n), "--seed", str(args.seed), "--out", dataset])
    if rc != 0:
        return rc

    common = [
        "--dataset", dataset,
        "--split", args.split,
        "--seed", str(args.seed),
        "--hidden", args.hidden,
        "--epochs", str(args.epochs),
        "--batch-size", str(args.batch_size),
        "--budget-secs", str(args.budget_secs),
    ]
    for algo in ("nn", "gql-nn"):
        print(f"--- training {algo} ---")
        rc = cli.main(["nn", *common, "--algo", algo, "--out", os.path.join(args.out, algo)])
        if rc != 0:
            return rc

    print()
    return cli.main(["report", args.out])


if __name__ == "__main__":
    sys.exit(main())
