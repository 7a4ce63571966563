"""Command-line front end: synth, calibrate, cv, nn, report.

Every run writes into its output directory:

- manifest.json: everything needed to reproduce the run (plus the seed)
- result.jsonl:  one record per run/fold/candidate, fixed key set
- cells.jsonl:   per-cell calibration log (calibrate/cv only)
- model.json:    winning model, tagged with its algorithm
- meta.json:     wall-clock timestamps (the only non-reproducible file)

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from datetime import datetime, timezone

from . import nn as nn_mod
from .algorithms import ALGORITHMS, default_grid, resolve_algorithm
from .data import (
    Dataset,
    SplitSpec,
    STREAM_FOLD,
    STREAM_SPLIT,
    dedup,
    load_csv,
    load_sparse,
    minmax_normalize,
    save_csv,
    split,
    synth_normal,
    synth_uniform,
)
from .errors import GqlearnError, InputError
from .evaluation import (
    DEFAULT_BUDGET_SECONDS,
    DEFAULT_FOLDS,
    TimeBudget,
    grid_search,
    read_records,
    run_kfold,
    run_record,
    write_json,
    write_records,
)
from .kernels import MAX_COMPONENTS

SEED_ENV_VAR = "GQLEARN_SEED"
NN_ALGORITHMS = ("nn", "gql-nn")


def resolve_seed(value) -> int:
    if value is not None:
        return int(value)
    env = os.environ.get(SEED_ENV_VAR)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise InputError(f"{SEED_ENV_VAR} must be an integer, got {env!r}") from None
    return 0


def _load_dataset(args) -> Dataset:
    encoding = "regression" if getattr(args, "task", "classify") == "regress" else "binary"
    if args.format == "sparse":
        ds = load_sparse(args.dataset, encoding=encoding)
    else:
        ds = load_csv(
            args.dataset,
            target_col=args.target_col,
            encoding=encoding,
            header=args.header,
        )
    if args.normalize:
        ds = minmax_normalize(ds)
    return ds


def _split_sizes(args, n) -> SplitSpec:
    if args.split:
        try:
            parts = [int(p) for p in args.split.split(",")]
            n_train, n_val, n_test = parts
        except ValueError:
            raise InputError("--split must look like n_train,n_val,n_test") from None
    else:
        n_train = int(round(n * 0.7))
        n_val = int(round(n * 0.15))
        n_test = n - n_train - n_val
    return SplitSpec(n_train, n_val, n_test, shuffle=not args.no_shuffle)


def _timestamp() -> str:
    return datetime.now(timezone.utc).isoformat()


def _ensure_out(path) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def _grid_for(args):
    bounds = None
    if (args.grid_min is None) != (args.grid_max is None):
        raise InputError("--grid-min and --grid-max must be given together")
    if args.grid_min is not None:
        bounds = (args.grid_min, args.grid_max)
    grid = default_grid(args.algo, bounds)
    if args.algo in ("rt-mkl", "rts-mkl"):
        for flag, axis in (("max_nk", "n_k"), ("max_ns", "n_s")):
            cap = getattr(args, flag)
            if cap is not None:
                if not 1 <= cap <= MAX_COMPONENTS:
                    raise InputError(f"--{flag.replace('_', '-')} must be in 1..{MAX_COMPONENTS}")
                axes = tuple(
                    (name, tuple(v for v in values if v <= cap) if name == axis else values)
                    for name, values in grid.axes
                )
                grid = type(grid)(axes)
    return grid


def _manifest(command, args, seed, grid=None, extra=None) -> dict:
    out = {
        "command": command,
        "dataset": getattr(args, "dataset", None),
        "algorithm": getattr(args, "algo", None),
        "seed": seed,
        "budget_seconds": getattr(args, "budget_secs", None),
    }
    if grid is not None:
        out["grid"] = {name: list(values) for name, values in grid.axes}
    if getattr(args, "split", None) is not None:
        out["split"] = args.split
    if getattr(args, "no_shuffle", False):
        out["shuffle"] = False
    if extra:
        out.update(extra)
    return out


# ---------------------------------------------------------------------------
# commands

def cmd_synth(args) -> int:
    seed = resolve_seed(args.seed)
    if args.n < 1:
        raise InputError("need at least one point")
    maker = synth_uniform if args.kind == "uniform" else synth_normal
    ds = maker(args.n, seed)
    out = args.out if args.out else f"{ds.name}.csv"
    save_csv(ds, out)
    print(f"wrote {len(ds)} rows to {out}")
    return 0


def _prepare_splits(args, seed):
    ds = _load_dataset(args)
    before = len(ds)
    ds = dedup(ds)
    removed = before - len(ds)
    spec = _split_sizes(args, len(ds))
    train, val, test = split(ds, spec, [seed, STREAM_SPLIT])
    return ds, train, val, test, removed


def cmd_calibrate(args) -> int:
    seed = resolve_seed(args.seed)
    started = _timestamp()
    t0 = time.perf_counter()
    ds, train, val, test, removed = _prepare_splits(args, seed)
    grid = _grid_for(args)
    solver = resolve_algorithm(args.algo)
    calib = grid_search(
        solver,
        train,
        val,
        grid,
        TimeBudget(seconds=args.budget_secs),
        metric="f1",
        jobs=args.jobs,
        test=test,
    )
    wall_ms = (time.perf_counter() - t0) * 1000.0
    outdir = _ensure_out(args.out)
    any_timeout = any(c.timed_out for c in calib.cells)
    record = run_record(
        args.algo, ds.name, calib.best_params, calib.validation_score,
        calib.test_score, wall_ms, any_timeout,
    )
    write_records(os.path.join(outdir, "result.jsonl"), [record])
    write_records(os.path.join(outdir, "cells.jsonl"), [c.record() for c in calib.cells])
    write_json(
        os.path.join(outdir, "model.json"),
        {"kind": args.algo, "model": calib.best_model},
    )
    write_json(
        os.path.join(outdir, "manifest.json"),
        _manifest(
            "calibrate", args, seed, grid,
            extra={"metric": "f1", "deduped_rows": removed},
        ),
    )
    write_json(
        os.path.join(outdir, "meta.json"),
        {"started_at": started, "finished_at": _timestamp(), "wall_ms": wall_ms},
    )
    print(
        f"{args.algo} on {ds.name}: best {calib.best_params} "
        f"val_f1={calib.validation_score:.6f} test_f1={calib.test_score:.6f}"
    )
    return 0


def cmd_cv(args) -> int:
    seed = resolve_seed(args.seed)
    started = _timestamp()
    t0 = time.perf_counter()
    ds, train, val, test, removed = _prepare_splits(args, seed)
    grid = _grid_for(args)
    solver = resolve_algorithm(args.algo)
    result = run_kfold(
        solver,
        train,
        val,
        test,
        args.k,
        grid,
        TimeBudget(seconds=args.budget_secs),
        metric="f1",
        seed=[seed, STREAM_FOLD],
        jobs=args.jobs,
    )
    wall_ms = (time.perf_counter() - t0) * 1000.0
    outdir = _ensure_out(args.out)
    records = [
        run_record(
            args.algo, ds.name, f.params, f.val_score, f.test_score,
            f.wall_ms, f.error is not None,
        )
        for f in result.folds
    ]
    write_records(os.path.join(outdir, "result.jsonl"), records)
    write_json(
        os.path.join(outdir, "aggregate.json"),
        {
            "mean": result.mean,
            "stddev": result.stddev,
            "metric": result.metric,
            "k": args.k,
            "excluded_folds": list(result.excluded),
        },
    )
    write_json(
        os.path.join(outdir, "manifest.json"),
        _manifest(
            "cv", args, seed, grid,
            extra={"metric": "f1", "k": args.k, "deduped_rows": removed},
        ),
    )
    write_json(
        os.path.join(outdir, "meta.json"),
        {"started_at": started, "finished_at": _timestamp(), "wall_ms": wall_ms},
    )
    print(f"{args.algo} {args.k}-fold on {ds.name}: mean={result.mean:.6f} stddev={result.stddev:.6f}")
    return 0


def _parse_hidden(text) -> list:
    try:
        sizes = [int(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise InputError("--hidden must be comma-separated integers") from None
    if not sizes or min(sizes) < 1:
        raise InputError("--hidden needs positive layer sizes")
    return sizes


def cmd_nn(args) -> int:
    seed = resolve_seed(args.seed)
    started = _timestamp()
    t0 = time.perf_counter()
    ds = _load_dataset(args)
    spec = _split_sizes(args, len(ds))
    train, val, test = split(ds, spec, [seed, STREAM_SPLIT])
    task = args.task
    metric = "f1" if task == "classify" else "mse"
    use_gql = args.algo == "gql-nn"
    if use_gql and args.gamma_s is not None:
        gammas = [args.gamma_s]
    elif use_gql:
        gammas = list(nn_mod.GAMMA_S_LINE_SEARCH)
    else:
        gammas = [None]
    cfg = nn_mod.TrainConfig(epochs=args.epochs, batch_size=args.batch_size, seed=seed)
    layer_sizes = [train.features.shape[1]] + _parse_hidden(args.hidden) + [1]

    candidates = []
    for gamma in gammas:
        model = nn_mod.init_mlp(layer_sizes, task, seed, args.weight_penalty)
        run_t0 = time.perf_counter()
        result = nn_mod.train(
            model,
            train,
            cfg,
            loss="gql" if use_gql else "standard",
            gamma_S=gamma,
            val=val,
            metric=metric,
        )
        run_wall = (time.perf_counter() - run_t0) * 1000.0
        val_score = nn_mod.evaluate(result.model, val, metric)
        test_score = nn_mod.evaluate(result.model, test, metric)
        candidates.append((gamma, result, val_score, test_score, run_wall))

    def val_key(entry):
        return entry[2]

    best = max(candidates, key=val_key) if metric == "f1" else min(candidates, key=val_key)
    wall_ms = (time.perf_counter() - t0) * 1000.0
    outdir = _ensure_out(args.out)
    # Networks run to their epoch count, never against a wall clock.
    records = [
        run_record(
            args.algo,
            ds.name,
            {} if gamma is None else {"gamma_S": gamma},
            val_score,
            test_score,
            run_wall,
            False,
        )
        for gamma, result, val_score, test_score, run_wall in candidates
    ]
    write_records(os.path.join(outdir, "result.jsonl"), records)
    write_json(
        os.path.join(outdir, "model.json"),
        {"kind": args.algo, "model": nn_mod.checkpoint_payload(best[1].model)},
    )
    nn_mod.write_trace_csv(os.path.join(outdir, "trace.csv"), best[1].trace, best[1].val_metrics)
    write_json(
        os.path.join(outdir, "manifest.json"),
        _manifest(
            "nn", args, seed,
            extra={
                "metric": metric,
                "task": task,
                "hidden": _parse_hidden(args.hidden),
                "epochs": args.epochs,
                "batch_size": args.batch_size,
                "weight_penalty": args.weight_penalty,
                "gamma_S": args.gamma_s,
            },
        ),
    )
    write_json(
        os.path.join(outdir, "meta.json"),
        {"started_at": started, "finished_at": _timestamp(), "wall_ms": wall_ms},
    )
    label = f"gamma_S={best[0]}" if best[0] is not None else "standard loss"
    print(f"{args.algo} on {ds.name}: best {label} val_{metric}={best[2]:.6f} test_{metric}={best[3]:.6f}")
    return 0


def _collect_report_rows(run_dir):
    rows = []
    for dirpath, _, filenames in sorted(os.walk(run_dir)):
        if "result.jsonl" not in filenames:
            continue
        metric = "f1"
        manifest_path = os.path.join(dirpath, "manifest.json")
        if os.path.exists(manifest_path):
            from .evaluation import read_json

            metric = read_json(manifest_path).get("metric", "f1")
        for rec in read_records(os.path.join(dirpath, "result.jsonl")):
            rows.append((metric, rec))
    return rows


def _format_table(rows, metric) -> str:
    header = ("dataset", "algorithm", f"val_{metric}", f"test_{metric}", "wall_ms", "timeout")
    body = []
    for rec in rows:
        body.append(
            (
                str(rec["dataset"]),
                str(rec["algorithm"]),
                "-" if rec["val_score"] is None else f"{rec['val_score']:.6f}",
                "-" if rec["test_score"] is None else f"{rec['test_score']:.6f}",
                f"{rec['wall_ms']:.1f}",
                str(bool(rec["timeout"])).lower(),
            )
        )
    widths = [max(len(h), *(len(r[i]) for r in body)) if body else len(h) for i, h in enumerate(header)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
    for r in body:
        lines.append("  ".join(c.ljust(w) for c, w in zip(r, widths)))
    return "\n".join(lines)


def cmd_report(args) -> int:
    rows = _collect_report_rows(args.run_dir)
    if not rows:
        raise InputError(f"no result records under {args.run_dir!r}")
    by_metric: dict = {}
    for metric, rec in rows:
        by_metric.setdefault(metric, []).append(rec)
    for metric in sorted(by_metric):
        recs = sorted(by_metric[metric], key=lambda r: (r["dataset"], r["algorithm"]))
        print(f"== {metric} ==")
        print(_format_table(recs, metric))
        print()
        csv_path = os.path.join(args.run_dir, f"report_{metric}.csv")
        with open(csv_path, "w") as fh:
            fh.write(f"dataset,algorithm,val_{metric},test_{metric},wall_ms,timeout\n")
            for rec in recs:
                val = "" if rec["val_score"] is None else repr(float(rec["val_score"]))
                test = "" if rec["test_score"] is None else repr(float(rec["test_score"]))
                fh.write(
                    f"{rec['dataset']},{rec['algorithm']},{val},{test},"
                    f"{repr(float(rec['wall_ms']))},{str(bool(rec['timeout'])).lower()}\n"
                )
    return 0


# ---------------------------------------------------------------------------
# parser

def _add_dataset_flags(p):
    p.add_argument("--dataset", required=True, help="path to the dataset file")
    p.add_argument("--format", choices=("csv", "sparse"), default="csv")
    p.add_argument("--target-col", type=int, default=0, dest="target_col")
    p.add_argument("--header", action="store_true", help="skip one CSV header row")
    p.add_argument("--normalize", action="store_true", help="min-max scale features")
    p.add_argument("--split", default=None, help="n_train,n_val,n_test (default 70/15/15)")
    p.add_argument("--no-shuffle", action="store_true", dest="no_shuffle")


def _add_run_flags(p):
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--budget-secs", type=float, default=DEFAULT_BUDGET_SECONDS, dest="budget_secs")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True, help="output directory")


def _add_grid_flags(p):
    p.add_argument("--grid-min", type=float, default=None, dest="grid_min")
    p.add_argument("--grid-max", type=float, default=None, dest="grid_max")
    p.add_argument("--max-nk", type=int, default=None, dest="max_nk")
    p.add_argument("--max-ns", type=int, default=None, dest="max_ns")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gqlearn",
        description="similarity-coupled loss solvers: calibration, CV, and reports",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset CSV")
    p.add_argument("kind", choices=("uniform", "normal"))
    p.add_argument("n", type=int)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None, help="output CSV path")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("calibrate", help="grid-search one algorithm on one dataset")
    _add_dataset_flags(p)
    _add_run_flags(p)
    _add_grid_flags(p)
    p.add_argument("--algo", required=True, choices=tuple(ALGORITHMS))
    p.set_defaults(func=cmd_calibrate, task="classify")

    p = sub.add_parser("cv", help="k-fold cross-validated calibration")
    _add_dataset_flags(p)
    _add_run_flags(p)
    _add_grid_flags(p)
    p.add_argument("--algo", required=True, choices=tuple(ALGORITHMS))
    p.add_argument("--k", type=int, default=DEFAULT_FOLDS)
    p.set_defaults(func=cmd_cv, task="classify")

    p = sub.add_parser("nn", help="train a dense network (standard or coupled loss)")
    _add_dataset_flags(p)
    _add_run_flags(p)
    p.add_argument("--algo", choices=NN_ALGORITHMS, default="nn")
    p.add_argument("--task", choices=("classify", "regress"), default="classify")
    p.add_argument("--hidden", default="100", help="comma-separated hidden sizes")
    p.add_argument("--epochs", type=int, default=1000)
    p.add_argument("--batch-size", type=int, default=5000, dest="batch_size")
    p.add_argument("--gamma-s", type=float, default=None, dest="gamma_s")
    p.add_argument("--weight-penalty", type=float, default=1e-4, dest="weight_penalty")
    p.set_defaults(func=cmd_nn)

    p = sub.add_parser("report", help="render result records as tables")
    p.add_argument("run_dir")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    try:
        return args.func(args)
    except (InputError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except GqlearnError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
