import json
import time

import numpy as np
import pytest

from gqlearn.data import Dataset
from gqlearn.errors import GqlearnError, InputError, NoCompletedCellError
from gqlearn.evaluation import (
    CellLog,
    FoldOutcome,
    GridSpec,
    KfoldResult,
    TimeBudget,
    f1,
    grid_search,
    log_axis,
    mse,
    read_json,
    read_records,
    resolve_metric,
    run_kfold,
    run_record,
    run_with_budget,
    select_best,
    write_json,
    write_records,
)


class TestMetrics:
    def test_f1_perfect(self):
        y = np.array([1.0, -1.0, 1.0, -1.0])
        assert f1(y, y) == 1.0

    def test_f1_hand_counted(self):
        # tp=2 fp=1 fn=1: precision 2/3, recall 2/3
        preds = np.array([1.0, 1.0, 1.0, -1.0, -1.0])
        truth = np.array([1.0, 1.0, -1.0, 1.0, -1.0])
        assert f1(preds, truth) == pytest.approx(2.0 / 3.0)

    def test_f1_no_true_positives(self):
        preds = np.array([-1.0, -1.0])
        truth = np.array([1.0, -1.0])
        assert f1(preds, truth) == 0.0

    def test_f1_permutation_invariant(self, rng):
        preds = np.where(rng.random(40) < 0.5, 1.0, -1.0)
        truth = np.where(rng.random(40) < 0.5, 1.0, -1.0)
        perm = rng.permutation(40)
        assert f1(preds[perm], truth[perm]) == pytest.approx(f1(preds, truth))

    def test_f1_input_checks(self):
        with pytest.raises(InputError):
            f1(np.array([1.0, 2.0]), np.array([1.0, -1.0]))
        with pytest.raises(InputError):
            f1(np.array([1.0]), np.array([1.0, -1.0]))

    def test_mse_basics(self):
        assert mse([1.0, 2.0], [1.0, 2.0]) == 0.0
        assert mse([2.0], [0.0]) == 4.0
        assert mse([0.0, 2.0], [1.0, 0.0]) == pytest.approx(2.5)
        with pytest.raises(InputError):
            mse([1.0], [1.0, 2.0])

    def test_resolve_metric(self):
        assert resolve_metric("f1").higher_is_better
        assert not resolve_metric("mse").higher_is_better
        with pytest.raises(InputError):
            resolve_metric("accuracy")


class TestLogAxis:
    def test_standard_span(self):
        assert log_axis(1e-3, 1e2) == (1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0)

    def test_degenerate_span(self):
        assert log_axis(1.0, 1.0) == (1.0,)

    def test_rejections(self):
        with pytest.raises(InputError):
            log_axis(0.5, 10.0)
        with pytest.raises(InputError):
            log_axis(10.0, 1.0)
        with pytest.raises(InputError):
            log_axis(0.0, 1.0)


class TestGridSpec:
    def test_cell_count_and_values(self):
        axis = log_axis(1e-3, 1e2)
        grid = GridSpec(axes=(("C", axis), ("gamma_K", axis), ("gamma_S", axis)))
        assert grid.n_cells == 216
        cells = list(grid.cells())
        assert len(cells) == 216
        assert cells[0] == {"C": 1e-3, "gamma_K": 1e-3, "gamma_S": 1e-3}
        # last axis varies fastest under the documented enumeration order
        assert cells[1] == {"C": 1e-3, "gamma_K": 1e-3, "gamma_S": 1e-2}
        assert cells[-1] == {"C": 1e2, "gamma_K": 1e2, "gamma_S": 1e2}

    def test_dict_axes_accepted(self):
        grid = GridSpec(axes={"C": (1.0, 2.0)})
        assert grid.names == ("C",)
        assert grid.n_cells == 2

    def test_validation(self):
        with pytest.raises(InputError):
            GridSpec(axes=(("C", ()),))
        with pytest.raises(InputError):
            GridSpec(axes=(("C", (1.0, -2.0)),))
        with pytest.raises(InputError):
            GridSpec(axes=())


class TestSelectBest:
    def cell(self, score, timed_out=False, error=None):
        return CellLog({}, score, 1.0, timed_out, error)

    def test_argmax_and_argmin(self):
        cells = [self.cell(0.2), self.cell(0.9), self.cell(0.5)]
        assert select_best(cells, higher_is_better=True) == 1
        assert select_best(cells, higher_is_better=False) == 0

    def test_ties_keep_earliest(self):
        cells = [self.cell(0.7), self.cell(0.7), self.cell(0.7)]
        assert select_best(cells) == 0

    def test_unscored_cells_never_win(self):
        cells = [self.cell(None, timed_out=True), self.cell(0.1), self.cell(None)]
        assert select_best(cells) == 1

    def test_no_completed_cells(self):
        with pytest.raises(NoCompletedCellError):
            select_best([self.cell(None, timed_out=True)])


class TestTimeBudget:
    def test_positive_seconds_required(self):
        with pytest.raises(InputError):
            TimeBudget(seconds=0.0)

    def test_restart_resets_clock(self):
        budget = TimeBudget(seconds=1.0)
        time.sleep(0.02)
        assert budget.restarted().elapsed() < budget.elapsed()

    def test_run_to_completion_returns_value(self):
        def task():
            yield "partial"
            return "done"

        result, timed_out = run_with_budget(task(), TimeBudget(seconds=5.0))
        assert result == "done" and not timed_out

    def test_run_without_return_keeps_last_yield(self):
        def task():
            yield 1
            yield 2

        result, timed_out = run_with_budget(task(), TimeBudget(seconds=5.0))
        assert result == 2 and not timed_out

    def test_endless_task_times_out(self):
        def task():
            while True:
                yield "state"

        budget = TimeBudget(seconds=0.05, grace=0.5)
        start = time.perf_counter()
        result, timed_out = run_with_budget(task(), budget)
        assert timed_out and result == "state"
        assert time.perf_counter() - start < 0.05 + 0.5


class StubFitted:
    """Predicts from a label column baked into the features."""

    def __init__(self, params, perfect, timed_out=False):
        self.params = dict(params)
        self.perfect = perfect
        self.timed_out = timed_out

    def predict(self, X):
        if self.perfect:
            return np.where(np.asarray(X)[:, 0] >= 0.0, 1.0, -1.0)
        return np.ones(len(X))

    def payload(self):
        return {"params": self.params}


def labeled_dataset(labels, name=""):
    labels = np.asarray(labels, dtype=float)
    return Dataset(features=labels.reshape(-1, 1), targets=labels, name=name)


def stub_solver(train, params, budget_seconds):
    return StubFitted(params, perfect=params["C"] == 10.0)


def failing_solver(train, params, budget_seconds):
    raise InputError("synthetic failure")


def timing_out_solver(train, params, budget_seconds):
    return StubFitted(params, perfect=True, timed_out=True)


class TestGridSearch:
    def datasets(self):
        train = labeled_dataset([1, -1, 1, -1], name="train")
        val = labeled_dataset([1, 1, -1, -1], name="val")
        test = labeled_dataset([1, -1, -1, 1], name="test")
        return train, val, test

    def test_single_cell(self):
        train, val, _ = self.datasets()
        grid = GridSpec(axes={"C": (10.0,)})
        out = grid_search(stub_solver, train, val, grid, TimeBudget(seconds=5))
        assert out.best_params == {"C": 10.0}
        assert out.validation_score == 1.0
        assert out.test_score is None
        assert len(out.cells) == 1

    def test_selects_best_scoring_cell(self):
        train, val, test = self.datasets()
        grid = GridSpec(axes={"C": (0.1, 1.0, 10.0, 100.0)})
        out = grid_search(
            stub_solver, train, val, grid, TimeBudget(seconds=5), test=test
        )
        assert out.best_params == {"C": 10.0}
        assert out.validation_score == 1.0
        assert out.test_score == 1.0
        assert out.best_model == {"params": {"C": 10.0}}
        assert [c.params["C"] for c in out.cells] == [0.1, 1.0, 10.0, 100.0]

    def test_tie_keeps_lexicographically_first(self):
        train, val, test = self.datasets()
        # no cell is perfect: every one predicts all-positive, same score
        grid = GridSpec(axes={"C": (0.5, 1.0, 2.0)})
        out = grid_search(stub_solver, train, val, grid, TimeBudget(seconds=5))
        assert out.best_params == {"C": 0.5}

    def test_all_cells_timed_out(self):
        train, val, _ = self.datasets()
        grid = GridSpec(axes={"C": (1.0, 2.0)})
        with pytest.raises(NoCompletedCellError):
            grid_search(timing_out_solver, train, val, grid, TimeBudget(seconds=5))

    def test_solver_errors_are_logged_not_fatal(self):
        train, val, _ = self.datasets()
        grid = GridSpec(axes={"C": (1.0,)})
        with pytest.raises(NoCompletedCellError):
            grid_search(failing_solver, train, val, grid, TimeBudget(seconds=5))
        # mixed: a failing params value plus a working one

        def mixed(train_ds, params, budget_seconds):
            if params["C"] < 5.0:
                raise InputError("bad cell")
            return StubFitted(params, perfect=True)

        out = grid_search(mixed, train, val, grid_search_grid(), TimeBudget(seconds=5))
        assert out.best_params == {"C": 10.0}
        errored = [c for c in out.cells if c.error is not None]
        assert len(errored) == 1 and errored[0].params == {"C": 1.0}
        assert errored[0].score is None

    def test_timed_out_cells_logged(self):
        train, val, _ = self.datasets()

        def sometimes(train_ds, params, budget_seconds):
            return StubFitted(params, perfect=True, timed_out=params["C"] < 5.0)

        out = grid_search(
            sometimes, train, val, grid_search_grid(), TimeBudget(seconds=5)
        )
        flagged = [c for c in out.cells if c.timed_out]
        assert len(flagged) == 1
        assert flagged[0].score is None
        assert out.best_params == {"C": 10.0}


def grid_search_grid():
    return GridSpec(axes={"C": (1.0, 10.0)})


class CallCountingSolver:
    """Quality keyed on fit order: first fold perfect, second all-positive."""

    def __init__(self):
        self.calls = 0

    def __call__(self, train, params, budget_seconds):
        self.calls += 1
        return StubFitted(params, perfect=self.calls == 1)


class TestRunKfold:
    def datasets(self, n=8):
        labels = np.tile([1.0, -1.0], n // 2)
        train = labeled_dataset(labels, name="train")
        val = labeled_dataset([1, 1, -1, -1], name="val")
        test = labeled_dataset([1, 1, -1, -1], name="test")
        return train, val, test

    def test_identical_folds_have_zero_spread(self):
        train, val, test = self.datasets()
        grid = GridSpec(axes={"C": (10.0,)})
        out = run_kfold(
            stub_solver, train, val, test, 4, grid, TimeBudget(seconds=5), seed=0
        )
        assert out.metric == "f1"
        assert len(out.folds) == 4
        assert out.mean == 1.0 and out.stddev == 0.0
        assert out.excluded == ()
        assert all(f.error is None for f in out.folds)
        assert [f.fold for f in out.folds] == [0, 1, 2, 3]

    def test_mean_and_population_stddev(self):
        train, val, test = self.datasets()
        grid = GridSpec(axes={"C": (10.0,)})
        out = run_kfold(
            CallCountingSolver(), train, val, test, 2, grid,
            TimeBudget(seconds=5), seed=0,
        )
        # fold scores: 1.0 then 2/3 (all-positive: precision 1/2, recall 1)
        assert out.mean == pytest.approx((1.0 + 2.0 / 3.0) / 2.0)
        assert out.stddev == pytest.approx((1.0 - 2.0 / 3.0) / 2.0)

    def test_every_fold_failing_raises(self):
        train, val, test = self.datasets()
        grid = GridSpec(axes={"C": (1.0,)})
        with pytest.raises(GqlearnError):
            run_kfold(
                failing_solver, train, val, test, 2, grid, TimeBudget(seconds=5)
            )

    def test_excluded_property_reports_errored_folds(self):
        ok = FoldOutcome(0, {"C": 1.0}, 0.9, 0.8, 12.0)
        bad = FoldOutcome(1, None, None, None, 3.0, error="boom")
        result = KfoldResult(mean=0.8, stddev=0.0, folds=(ok, bad), metric="f1")
        assert result.excluded == (1,)


class TestRecords:
    def test_run_record_shape(self):
        rec = run_record("rts", "normal800", {"C": 1.0}, 0.9, 0.8, 123.4, False)
        assert set(rec) == {
            "algorithm", "dataset", "params", "val_score",
            "test_score", "wall_ms", "timeout",
        }
        assert rec["algorithm"] == "rts"
        assert rec["timeout"] is False

    def test_records_round_trip_and_stable_bytes(self, tmp_path):
        recs = [
            run_record("s", "d1", {"gamma_S": 0.1}, 0.5, None, 10.0, False),
            run_record("rt", "d2", {"C": 2.0}, None, 0.25, 99.0, True),
        ]
        p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        write_records(p1, recs)
        write_records(p2, recs)
        assert p1.read_bytes() == p2.read_bytes()
        assert read_records(p1) == recs
        lines = p1.read_text().strip().split("\n")
        assert len(lines) == 2
        assert json.loads(lines[0])["algorithm"] == "s"

    def test_json_round_trip(self, tmp_path):
        payload = {"b": [1.0, 2.0], "a": {"nested": True}}
        path = tmp_path / "out.json"
        write_json(path, payload)
        assert read_json(path) == payload
        text = path.read_text()
        assert text.endswith("\n")
        assert text.index('"a"') < text.index('"b"')
