"""Uniform fitting interface over the kernel solvers.

Every ``fit_*`` function is a module-level callable with the signature
``(train, params, budget_seconds) -> FittedSvm`` so grid search can ship
cells to worker processes. Default calibration grids live here too.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import svm_dual, svm_primal
from .data import Dataset
from .errors import InputError
from .evaluation import GridSpec, log_axis
from .kernels import MAX_COMPONENTS, MklCombo, cross_gram, mkl_cross_gram

SMOS_RTS_BOUNDS = (1e-3, 1e2)
S_BOUNDS = (1e-5, 1e4)


@dataclass(frozen=True)
class FittedSvm:
    """A trained kernel model bound to its training patterns."""

    kind: str
    X_train: np.ndarray
    y_train: np.ndarray
    row_ids: np.ndarray
    params: dict
    dual_state: svm_dual.DualState | None = None
    primal_state: svm_primal.PrimalState | None = None
    combo_k: MklCombo | None = None
    combo_s: MklCombo | None = None

    @property
    def timed_out(self) -> bool:
        state = self.dual_state if self.dual_state is not None else self.primal_state
        return bool(state.timed_out)

    def _eval_gram(self, X_new) -> np.ndarray:
        if self.combo_k is not None:
            return mkl_cross_gram(self.X_train, X_new, self.combo_k)
        return cross_gram(self.X_train, X_new, self.params["gamma_K"])

    def predict(self, X_new) -> np.ndarray:
        K_eval = self._eval_gram(X_new)
        if self.dual_state is not None:
            return svm_dual.predict(self.dual_state, K_eval, self.y_train)
        return svm_primal.predict(self.primal_state, K_eval)

    def payload(self) -> dict:
        if self.kind == "smos":
            sp = svm_dual.SolverParams(
                C=self.params["C"],
                gamma_K=self.params["gamma_K"],
                gamma_S=self.params["gamma_S"],
            )
            return svm_dual.model_payload(self.dual_state, sp, self.row_ids)
        if self.kind == "rts":
            return svm_primal.model_payload(
                self.primal_state,
                self.params["gamma_K"],
                self.row_ids,
                C=self.params["C"],
                gamma_S=self.params["gamma_S"],
            )
        if self.kind == "s":
            return svm_primal.model_payload(
                self.primal_state,
                self.params["gamma_K"],
                self.row_ids,
                gamma_S=self.params["gamma_S"],
            )
        if self.kind == "rt":
            return svm_primal.model_payload(
                self.primal_state,
                self.params["gamma_K"],
                self.row_ids,
                C=self.params["C"],
            )
        return svm_primal.mkl_payload(
            self.primal_state,
            self.params["C"],
            self.combo_k,
            self.row_ids,
            combo_s=self.combo_s,
        )


def fit_smos(train: Dataset, params, budget_seconds) -> FittedSvm:
    sp = svm_dual.SolverParams(
        C=params["C"],
        gamma_K=params["gamma_K"],
        gamma_S=params["gamma_S"],
        budget_seconds=budget_seconds,
    )
    state = svm_dual.smos_solve(train, sp)
    return FittedSvm(
        kind="smos",
        X_train=train.features,
        y_train=train.targets,
        row_ids=train.row_ids,
        params=dict(params),
        dual_state=state,
    )


def fit_rts(train: Dataset, params, budget_seconds) -> FittedSvm:
    sp = svm_dual.SolverParams(
        C=params["C"],
        gamma_K=params["gamma_K"],
        gamma_S=params["gamma_S"],
        budget_seconds=budget_seconds,
    )
    state = svm_primal.rts_solve(train, sp)
    return FittedSvm(
        kind="rts",
        X_train=train.features,
        y_train=train.targets,
        row_ids=train.row_ids,
        params=dict(params),
        primal_state=state,
    )


def fit_s(train: Dataset, params, budget_seconds) -> FittedSvm:
    state = svm_primal.s_solve(
        train, params["gamma_K"], params["gamma_S"], budget_seconds=budget_seconds
    )
    return FittedSvm(
        kind="s",
        X_train=train.features,
        y_train=train.targets,
        row_ids=train.row_ids,
        params=dict(params),
        primal_state=state,
    )


def fit_rt(train: Dataset, params, budget_seconds) -> FittedSvm:
    state = svm_primal.rt_solve(
        train, params["C"], params["gamma_K"], budget_seconds=budget_seconds
    )
    return FittedSvm(
        kind="rt",
        X_train=train.features,
        y_train=train.targets,
        row_ids=train.row_ids,
        params=dict(params),
        primal_state=state,
    )


def fit_rt_mkl(train: Dataset, params, budget_seconds) -> FittedSvm:
    state, combo = svm_primal.rt_mkl_solve(
        train, params["C"], int(params["n_k"]), budget_seconds=budget_seconds
    )
    return FittedSvm(
        kind="rt-mkl",
        X_train=train.features,
        y_train=train.targets,
        row_ids=train.row_ids,
        params=dict(params),
        primal_state=state,
        combo_k=combo,
    )


def fit_rts_mkl(train: Dataset, params, budget_seconds) -> FittedSvm:
    state, combo_k, combo_s = svm_primal.rts_mkl_solve(
        train,
        params["C"],
        int(params["n_k"]),
        int(params["n_s"]),
        budget_seconds=budget_seconds,
    )
    return FittedSvm(
        kind="rts-mkl",
        X_train=train.features,
        y_train=train.targets,
        row_ids=train.row_ids,
        params=dict(params),
        primal_state=state,
        combo_k=combo_k,
        combo_s=combo_s,
    )


def _component_axis() -> tuple:
    return tuple(float(n) for n in range(1, MAX_COMPONENTS + 1))


def default_grid(algorithm, bounds=None) -> GridSpec:
    """Calibration grid for one algorithm, optionally with custom bounds."""
    if algorithm in ("smos", "rts"):
        axis = log_axis(*(bounds or SMOS_RTS_BOUNDS))
        return GridSpec((("C", axis), ("gamma_K", axis), ("gamma_S", axis)))
    if algorithm == "s":
        axis = log_axis(*(bounds or S_BOUNDS))
        return GridSpec((("gamma_K", axis), ("gamma_S", axis)))
    if algorithm == "rt":
        axis = log_axis(*(bounds or SMOS_RTS_BOUNDS))
        return GridSpec((("C", axis), ("gamma_K", axis)))
    if algorithm == "rt-mkl":
        axis = log_axis(*(bounds or SMOS_RTS_BOUNDS))
        return GridSpec((("C", axis), ("n_k", _component_axis())))
    if algorithm == "rts-mkl":
        axis = log_axis(*(bounds or SMOS_RTS_BOUNDS))
        return GridSpec(
            (("C", axis), ("n_k", _component_axis()), ("n_s", _component_axis()))
        )
    raise InputError(f"no default grid for algorithm {algorithm!r}")


ALGORITHMS = {
    "smos": fit_smos,
    "rts": fit_rts,
    "s": fit_s,
    "rt": fit_rt,
    "rt-mkl": fit_rt_mkl,
    "rts-mkl": fit_rts_mkl,
}


def resolve_algorithm(name):
    try:
        return ALGORITHMS[name]
    except KeyError:
        raise InputError(f"unknown algorithm {name!r}") from None
