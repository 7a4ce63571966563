#!/usr/bin/env python3
"""Synthetic benchmark: calibrate SVM-family solvers on generated data.

Generates a normal-cluster dataset, grid-searches each requested algorithm
over a shared train/val/test split, then renders the combined report and a
one-line directional comparison of test scores. Labels are random coin
flips, so the comparison is informational, not a quality gate.

Run from the repository root (or anywhere, once the package is installed):

    python3 scripts/run_synthetic_benchmark.py --out runs/synth --seed 5
"""

from __future__ import annotations

import argparse
import os
import sys

try:
    from gqlearn import cli
    from gqlearn.algorithms import ALGORITHMS
    from gqlearn.evaluation import read_records
except ImportError:  # fresh checkout without an editable install
    sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))
    from gqlearn import cli
    from gqlearn.algorithms import ALGORITHMS
    from gqlearn.evaluation import read_records


def parse_args(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="benchmark_out", help="run directory")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--n", type=int, default=800, help="points to generate")
    parser.add_argument("--split", default="550,150,100", help="n_train,n_val,n_test")
    parser.add_argument(
        "--algos",
        default="rts,s,rt",
        help="comma-separated algorithms to calibrate (default rts,s,rt)",
    )
    parser.add_argument("--grid-min", type=float, default=0.1, dest="grid_min")
    parser.add_argument("--grid-max", type=float, default=10.0, dest="grid_max")
    parser.add_argument("--budget-secs", type=float, default=120.0, dest="budget_secs")
    return parser.parse_args(argv)


def main(argv=None) -> int:
    args = parse_args(argv)
    algos = [a.strip() for a in args.algos.split(",") if a.strip()]
    unknown =[a for a in algos if a not in ALGORITHMS]
    if unknown:
        print(f"error: unknown algorithms {unknown}; choose from {sorted(ALGORITHMS)}", file=sys.stderr)
        return 2

    os.makedirs(args.out, exist_ok=True)
    dataset = os.path.join(args.out, f"normal{args.n}.csv")
    rc = cli.main(["synth", "normal", str(args.n), "--seed", str(args.seed), "--out", dataset])
    if rc != 0:
        return rc

    for algo in algos:
        print(f"--- calibrating {algo} ---")
        rc = cli.main(
            [
                "calibrate",
                "--dataset", dataset,
                "--split", args.split,
                "--seed", str(args.seed),
                "--grid-min", str(args.grid_min),
                "--grid-max", str(args.grid_max),
                "--budget-secs", str(args.budget_secs),
                "--algo", algo,
                "--out", os.path.join(args.out, algo),
            ]
        )
        if rc != 0:
            return rc

    print()
    rc = cli.main(["report", args.out])
    if rc != 0:
        return rc

    scores = {}
    for algo in algos:
        recs = read_records(os.path.join(args.out, algo, "result.jsonl"))
        scores[algo] = recs[0]["test_score"]
    parts = ", ".join(
        f"{algo} test={'-' if s is None else format(s, '.4f')}" for algo, s in scores.items()
    )
    print(f"directional comparison (random labels, informational): {parts}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
