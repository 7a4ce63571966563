"""Metrics, cooperative time budgets, grid-search calibration, and k-fold runs."""

from __future__ import annotations

import itertools
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .data import Dataset, kfold, require_binary_targets
from .errors import GqlearnError, InputError, NoCompletedCellError

DEFAULT_BUDGET_SECONDS = 120.0
DEFAULT_GRACE_SECONDS = 2.0
DEFAULT_FOLDS = 10


# ---------------------------------------------------------------------------
# metrics

def f1(preds, truth) -> float:
    """F1 on the positive class (+1). Zero true positives give 0.0."""
    p = require_binary_targets(preds)
    t = require_binary_targets(truth)
    if p.shape != t.shape:
        raise InputError("prediction/truth length mismatch")
    tp = float(np.sum((p == 1.0) & (t == 1.0)))
    fp = float(np.sum((p == 1.0) & (t == -1.0)))
    fn = float(np.sum((p == -1.0) & (t == 1.0)))
    if tp == 0.0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2.0 * precision * recall / (precision + recall)


def mse(preds, truth) -> float:
    p = np.asarray(preds, dtype=float)
    t = np.asarray(truth, dtype=float)
    if p.shape != t.shape:
        raise InputError("prediction/truth length mismatch")
    return float(np.mean((p - t) ** 2))


@dataclass(frozen=True)
class Metric:
    name: str
    fn: object
    higher_is_better: bool


METRICS = {
    "f1": Metric("f1", f1, True),
    "mse": Metric("mse", mse, False),
}


def resolve_metric(name) -> Metric:
    try:
        return METRICS[name]
    except KeyError:
        raise InputError(f"unknown metric {name!r}") from None


# ---------------------------------------------------------------------------
# time budgets

@dataclass(frozen=True)
class TimeBudget:
    """Cooperative wall-clock allowance.

    Enforcement happens at iteration boundaries, so a running step may
    overshoot by up to one iteration plus ``grace``.
    """

    seconds: float = DEFAULT_BUDGET_SECONDS
    grace: float = DEFAULT_GRACE_SECONDS
    started_at: float = field(default_factory=time.perf_counter)

    def __post_init__(self):
        if not self.seconds > 0:
            raise InputError("budget seconds must be positive")

    def restarted(self) -> "TimeBudget":
        """Same allowance with a fresh clock (one per grid cell or fold)."""
        return replace(self, started_at=time.perf_counter())

    def elapsed(self) -> float:
        return time.perf_counter() - self.started_at

    def expired(self) -> bool:
        return self.elapsed() >= self.seconds

    def overdrawn(self) -> bool:
        return self.elapsed() >= self.seconds + self.grace


def run_with_budget(task, budget: TimeBudget):
    """Drive a generator-shaped task until completion or budget expiry.

    The task yields its best-so-far state at every iteration boundary and
    may return a final value. Returns ``(result, timed_out)`` where on
    timeout the result is the last yielded state (the generator is left
    suspended, never half-mutated).
    """
    last = None
    while True:
        if budget.expired():
            return last, True
        try:
            last = next(task)
        except StopIteration as stop:
            if stop.value is not None:
                return stop.value, False
            return last, False


# ---------------------------------------------------------------------------
# grids

def log_axis(lo, hi) -> tuple:
    """Powers of 10 from ``lo`` to ``hi`` inclusive; bounds must be powers of 10."""
    exps = []
    for bound in (lo, hi):
        if not bound > 0:
            raise InputError("grid bounds must be positive")
        e = math.log10(bound)
        if abs(e - round(e)) > 1e-9:
            raise InputError(f"grid bound {bound!r} is not a power of 10")
        exps.append(round(e))
    if exps[1] < exps[0]:
        raise InputError("grid upper bound below lower bound")
    return tuple(10.0 ** e for e in range(exps[0], exps[1] + 1))


@dataclass(frozen=True)
class GridSpec:
    """Named hyper-parameter axes; cells enumerate their cartesian product.

    Axis order is significant: enumeration is lexicographic in the given
    order with each axis ascending, which is also the tie-break order.
    """

    axes: tuple

    def __post_init__(self):
        if hasattr(self.axes, "items"):
            pairs = tuple(self.axes.items())
        else:
            pairs = tuple(self.axes)
        norm = []
        for name, values in pairs:
            vals = tuple(float(v) for v in values)
            if not vals:
                raise InputError(f"axis {name!r} is empty")
            if any(v <= 0 for v in vals):
                raise InputError(f"axis {name!r} has non-positive values")
            norm.append((str(name), vals))
        if not norm:
            raise InputError("grid needs at least one axis")
        object.__setattr__(self, "axes", tuple(norm))

    @property
    def names(self) -> tuple:
        return tuple(name for name, _ in self.axes)

    @property
    def n_cells(self) -> int:
        out = 1
        for _, values in self.axes:
            out *= len(values)
        return out

    def cells(self):
        names = self.names
        for combo in itertools.product(*(values for _, values in self.axes)):
            yield dict(zip(names, combo))


# ---------------------------------------------------------------------------
# calibration

@dataclass(frozen=True)
class CellLog:
    params: dict
    score: float | None
    wall_ms: float
    timed_out: bool
    error: str | None = None

    def record(self) -> dict:
        return {
            "params": self.params,
            "score": self.score,
            "wall_ms": self.wall_ms,
            "timed_out": self.timed_out,
            "error": self.error,
        }


@dataclass(frozen=True)
class CalibrationResult:
    best_params: dict
    best_model: dict
    validation_score: float
    test_score: float | None
    cells: tuple


def select_best(cells, higher_is_better=True) -> int:
    """Index of the winning cell from per-cell scores alone.

    Cells without a score (timeout or failure) never win. Ties keep the
    earliest cell, i.e. the lexicographically smallest parameters under
    the grid's enumeration order.
    """
    best = None
    for idx, cell in enumerate(cells):
        if cell.score is None:
            continue
        if best is None:
            best = idx
            continue
        if higher_is_better:
            if cell.score > cells[best].score:
                best = idx
        elif cell.score < cells[best].score:
            best = idx
    if best is None:
        raise NoCompletedCellError("no grid cell completed within budget")
    return best


def _run_cell(solver, train, val, params, budget_seconds, metric_name):
    """One calibration cell; top level so process pools can ship it."""
    metric = resolve_metric(metric_name)
    start = time.perf_counter()
    try:
        fitted = solver(train, params, budget_seconds)
    except GqlearnError as exc:
        wall_ms = (time.perf_counter() - start) * 1000.0
        return CellLog(dict(params), None, wall_ms, False, error=str(exc)), None
    wall_ms = (time.perf_counter() - start) * 1000.0
    if getattr(fitted, "timed_out", False):
        return CellLog(dict(params), None, wall_ms, True), None
    score = float(metric.fn(fitted.predict(val.features), val.targets))
    return CellLog(dict(params), score, wall_ms, False), fitted


def grid_search(
    solver,
    train: Dataset,
    val: Dataset,
    grid: GridSpec,
    budget: TimeBudget,
    metric="f1",
    jobs=1,
    test: Dataset | None = None,
) -> CalibrationResult:
    """Fit every grid cell, select by validation score, keep the winner.

    Each cell gets a fresh budget of ``budget.seconds``. Cells that time
    out or raise a solver error are logged with a null score and cannot
    win. ``solver(train, params, budget_seconds)`` must return a fitted
    model exposing ``predict``, ``payload`` and ``timed_out``.
    """
    metric_obj = resolve_metric(metric if isinstance(metric, str) else metric.name)
    cell_params = list(grid.cells())
    outcomes: list = [None] * len(cell_params)
    if int(jobs) > 1:
        with ProcessPoolExecutor(max_workers=int(jobs)) as pool:
            futures = {
                pool.submit(
                    _run_cell, solver, train, val, params, budget.seconds, metric_obj.name
                ): idx
                for idx, params in enumerate(cell_params)
            }
            for fut, idx in futures.items():
                outcomes[idx] = fut.result()
    else:
        for idx, params in enumerate(cell_params):
            outcomes[idx] = _run_cell(
                solver, train, val, params, budget.seconds, metric_obj.name
            )
    logs = tuple(log for log, _ in outcomes)
    best = select_best(logs, metric_obj.higher_is_better)
    fitted = outcomes[best][1]
    test_score = None
    if test is not None:
        test_score = float(metric_obj.fn(fitted.predict(test.features), test.targets))
    return CalibrationResult(
        best_params=dict(logs[best].params),
        best_model=fitted.payload(),
        validation_score=logs[best].score,
        test_score=test_score,
        cells=logs,
    )


# ---------------------------------------------------------------------------
# k-fold driver

@dataclass(frozen=True)
class FoldOutcome:
    fold: int
    params: dict | None
    val_score: float | None
    test_score: float | None
    wall_ms: float
    error: str | None = None


@dataclass(frozen=True)
class KfoldResult:
    mean: float
    stddev: float
    folds: tuple
    metric: str

    @property
    def excluded(self) -> tuple:
        return tuple(f.fold for f in self.folds if f.error is not None)


def run_kfold(
    solver,
    train: Dataset,
    val: Dataset,
    test: Dataset,
    k,
    grid: GridSpec,
    budget: TimeBudget,
    metric="f1",
    seed=0,
    jobs=1,
) -> KfoldResult:
    """Calibrate on each fold-complement, score on the shared test set.

    Every pattern of ``train`` lands in exactly one held-out fold; the
    fold itself is unused (validation and test sets are shared across
    folds). Reports mean and population standard deviation of the fold
    test scores; failed folds are recorded and excluded.
    """
    metric_obj = resolve_metric(metric if isinstance(metric, str) else metric.name)
    plan = kfold(train, k, seed)
    folds = []
    for fold in range(plan.k):
        subtrain = train.subset(plan.complement(fold))
        start = time.perf_counter()
        try:
            calib = grid_search(
                solver,
                subtrain,
                val,
                grid,
                budget.restarted(),
                metric=metric_obj.name,
                jobs=jobs,
                test=test,
            )
        except GqlearnError as exc:
            wall_ms = (time.perf_counter() - start) * 1000.0
            folds.append(FoldOutcome(fold, None, None, None, wall_ms, error=str(exc)))
            continue
        wall_ms = (time.perf_counter() - start) * 1000.0
        folds.append(
            FoldOutcome(
                fold,
                calib.best_params,
                calib.validation_score,
                calib.test_score,
                wall_ms,
            )
        )
    scores = [f.test_score for f in folds if f.error is None]
    if not scores:
        raise GqlearnError("every fold failed")
    arr = np.asarray(scores, dtype=float)
    return KfoldResult(
        mean=float(arr.mean()),
        stddev=float(arr.std(ddof=0)),
        folds=tuple(folds),
        metric=metric_obj.name,
    )


# ---------------------------------------------------------------------------
# structured records

def write_records(path, records) -> None:
    """Line-delimited JSON with sorted keys, stable byte-for-byte."""
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_records(path) -> list:
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out


def write_json(path, payload) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def run_record(algorithm, dataset, params, val_score, test_score, wall_ms, timeout) -> dict:
    """The one record shape every run emits."""
    return {
        "algorithm": str(algorithm),
        "dataset": str(dataset),
        "params": params,
        "val_score": val_score,
        "test_score": test_score,
        "wall_ms": wall_ms,
        "timeout": bool(timeout),
    }
