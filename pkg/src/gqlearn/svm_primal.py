"""Coordinate-Newton descent on representer-form primal objectives.

One engine drives three objectives over f(x) = sum_i a_i K(x_i, x) + b:

- regularized, similarity-coupled error:  1/2 a'Ka + C xi'S xi
- bare coupled error (no regularizer):    xi'S xi
- regularized linear-hinge baseline:      1/2 a'Ka + C sum(xi)

with xi_i = max(0, 1 - y_i f(x_i)). Along any single coordinate the
objective is piecewise quadratic, so each visit minimizes it exactly:
the Newton target for the current hinge active set is walked across
breakpoints (patterns entering or leaving the active set) until it lands
inside its own piece. A step is accepted only if the recomputed objective
does not increase; the run ends when the best value seen stops improving
for a fixed number of consecutive steps. No similarity-matrix inversion
is ever needed here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, dedup, require_binary_targets
from .errors import InputError
from .evaluation import DEFAULT_BUDGET_SECONDS, TimeBudget, run_with_budget
from .kernels import (
    GramMatrix,
    MklCombo,
    build_gram,
    component_gammas,
    component_grams,
    mkl_combine,
    mkl_weights,
)
from .svm_dual import SolverParams, bias_from_margins

STALL_LIMIT = 100
DIVERGENCE_LIMIT = 1e12
CURVATURE_FLOOR = 1e-12


@dataclass
class PrimalState:
    a: np.ndarray
    b: float
    objective: float
    best_objective: float
    best_a: np.ndarray
    best_b: float
    stall_count: int = 0
    stop_reason: str = "running"
    timed_out: bool = False
    diverged: bool = False


def _values(mat) -> np.ndarray:
    return mat.values if isinstance(mat, GramMatrix) else np.asarray(mat, dtype=float)


def _slack(a, b, Kv, y) -> np.ndarray:
    return np.maximum(0.0, 1.0 - y * (Kv @ a + b))


def primal_objective(state: PrimalState, K, S, y, C) -> float:
    """1/2 a'Ka + C xi'S xi for the regularized coupled solver."""
    Kv, Sv = _values(K), _values(S)
    y = np.asarray(y, dtype=float)
    xi = _slack(state.a, state.b, Kv, y)
    return float(0.5 * (state.a @ (Kv @ state.a)) + C * (xi @ (Sv @ xi)))


def s_objective(state: PrimalState, K, S, y) -> float:
    """Bare coupled error xi'S xi (no regularizer, no C)."""
    Kv, Sv = _values(K), _values(S)
    y = np.asarray(y, dtype=float)
    xi = _slack(state.a, state.b, Kv, y)
    return float(xi @ (Sv @ xi))


def hinge_objective(state: PrimalState, K, y, C) -> float:
    """1/2 a'Ka + C sum(xi), the linear-loss baseline."""
    Kv = _values(K)
    y = np.asarray(y, dtype=float)
    xi = _slack(state.a, state.b, Kv, y)
    return float(0.5 * (state.a @ (Kv @ state.a)) + C * xi.sum())


def coordinate_derivatives(i, state: PrimalState, K, S, y, C):
    """Analytic (dP/da_i, d2P/da_i2) of the regularized coupled objective.

    One-sided at hinge kinks: the active set {xi > 0} is held fixed, so the
    values agree with finite differences only away from kinks.
    """
    Kv, Sv = _values(K), _values(S)
    y = np.asarray(y, dtype=float)
    Ka = Kv @ state.a
    xi = np.maximum(0.0, 1.0 - y * (Ka + state.b))
    active = xi > 0
    t = Sv @ xi
    grad = float(Ka[i] - 2.0 * C * (Kv[i] @ (y * t * active)))
    u = y * Kv[i] * active
    curv = float(Kv[i, i] + 2.0 * C * (u @ (Sv @ u)))
    return grad, curv


def newton_step(i, state: PrimalState, K, S, y, C) -> float:
    """Updated a_i from one Newton step; flat coordinates are skipped."""
    grad, curv = coordinate_derivatives(i, state, K, S, y, C)
    if curv <= CURVATURE_FLOOR:
        return float(state.a[i])
    return float(state.a[i] - grad / curv)


def _exact_coordinate_delta(resid, ka_i, d, k_ii, Mv, weight, include_reg):
    """Exact minimizer offset along one coordinate.

    ``resid`` holds the signed margins r_p = 1 - y_p f_p, ``d`` how each
    shrinks per unit step (r_p(t) = r_p - t d_p). The objective restricted
    to the coordinate is convex piecewise quadratic with breakpoints where
    a pattern's slack hits zero, so the piece minimizer is walked from the
    current piece toward the global one, updating the piece coefficients
    incrementally at each crossing. Returns 0.0 when the coordinate is
    already optimal or the direction is flat.
    """
    n = resid.shape[0]
    active = resid > 0.0
    if Mv is not None:
        dA = np.where(active, d, 0.0)
        rA = np.where(active, resid, 0.0)
        v_d = Mv @ dA
        q1 = float(rA @ v_d)
        q2 = float(dA @ v_d)
    else:
        q1 = float(d[active].sum())
        q2 = 0.0
    reg_g = ka_i if include_reg else 0.0
    reg_c = k_ii if include_reg else 0.0

    def piece_minimizer():
        # phi'(t) = reg_g + t*reg_c + weight*(-2 q1 + 2 t q2)   (coupled)
        # phi'(t) = reg_g + t*reg_c - weight*q1                 (linear)
        if Mv is not None:
            slope0 = reg_g - 2.0 * weight * q1
            denom = reg_c + 2.0 * weight * q2
        else:
            slope0 = reg_g - weight * q1
            denom = reg_c
        if denom > CURVATURE_FLOOR:
            return -slope0 / denom
        if slope0 < 0.0:
            return np.inf
        if slope0 > 0.0:
            return -np.inf
        return 0.0

    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        tbp = resid / d
    crossable = np.isfinite(tbp) & (d != 0.0)

    t_star = piece_minimizer()
    if t_star == 0.0:
        return 0.0
    right = t_star > 0.0
    pos = 0.0
    for _ in range(n + 1):
        ahead = crossable & ((tbp > pos) if right else (tbp < pos))
        if not ahead.any():
            break
        t_next = float(tbp[ahead].min() if right else tbp[ahead].max())
        if np.isfinite(t_star) and (t_star <= t_next if right else t_star >= t_next):
            break
        for w in np.flatnonzero(crossable & (tbp == t_next)):
            w = int(w)
            entering = (d[w] < 0.0) if right else (d[w] > 0.0)
            if Mv is None:
                q1 += d[w] if entering else -d[w]
                continue
            row_w = Mv[w]
            mr_w = float(row_w @ rA)
            if entering:
                q2 += 2.0 * d[w] * v_d[w] + d[w] * d[w] * row_w[w]
                q1 += resid[w] * v_d[w] + d[w] * mr_w + resid[w] * d[w] * row_w[w]
                v_d += d[w] * row_w
                rA[w] = resid[w]
                dA[w] = d[w]
            else:
                q2 += -2.0 * d[w] * v_d[w] + d[w] * d[w] * row_w[w]
                q1 += -resid[w] * v_d[w] - d[w] * mr_w + resid[w] * d[w] * row_w[w]
                v_d -= d[w] * row_w
                rA[w] = 0.0
                dA[w] = 0.0
        pos = t_next
        t_star = piece_minimizer()
        if (t_star <= pos) if right else (t_star >= pos):
            # Derivative sign flipped at the kink itself (linear loss) or
            # numerical noise pushed the target back: the kink is the min.
            t_star = pos
            break
    if not np.isfinite(t_star):
        t_star = pos  # flat tail beyond the last breakpoint
    return float(t_star)


def init_primal_state(n, obj0=np.inf) -> PrimalState:
    n = int(n)
    return PrimalState(
        a=np.zeros(n),
        b=0.0,
        objective=float(obj0),
        best_objective=float(obj0),
        best_a=np.zeros(n),
        best_b=0.0,
    )


def primal_steps(state: PrimalState, K, M, y, *, weight, include_reg, quad_loss):
    """Engine generator: one exact coordinate step per yield.

    ``M`` is the error-coupling matrix (ignored for the linear loss).
    ``weight`` multiplies the error term; the regularizer 1/2 a'Ka is
    optional. Stops when the running best has not improved for
    STALL_LIMIT consecutive coordinate steps, or on divergence.
    """
    Kv = _values(K)
    Mv = None if not quad_loss else _values(M)
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    Kdiag = np.diagonal(Kv).copy()
    a = state.a
    b = state.b

    def loss_of(xi):
        if quad_loss:
            return weight * (xi @ (Mv @ xi))
        return weight * xi.sum()

    Ka = Kv @ a
    aKa = float(a @ Ka)
    xi = np.maximum(0.0, 1.0 - y * (Ka + b))
    obj = (0.5 * aKa if include_reg else 0.0) + loss_of(xi)
    state.objective = obj
    if obj < state.best_objective:
        state.best_objective = obj
        state.best_a = a.copy()
        state.best_b = b

    def settle_best():
        a[:] = state.best_a
        state.b = state.best_b
        state.objective = state.best_objective

    while True:
        for i in range(n):
            resid = 1.0 - y * (Ka + b)
            delta = _exact_coordinate_delta(
                resid, Ka[i], y * Kv[i], Kdiag[i], Mv, weight, include_reg
            )
            if delta == 0.0:
                state.stall_count += 1
                if state.stall_count >= STALL_LIMIT:
                    settle_best()
                    state.stop_reason = "stalled"
                    return state
                yield state
                continue
            # a huge step on a near-flat direction can overflow here; the
            # isfinite check below rejects the move either way
            with np.errstate(over="ignore", invalid="ignore"):
                Ka_new = Ka + delta * Kv[i]
                xi_new = np.maximum(0.0, 1.0 - y * (Ka_new + b))
                aKa_new = aKa + 2.0 * delta * Ka[i] + delta * delta * Kdiag[i]
                obj_new = (0.5 * aKa_new if include_reg else 0.0) + loss_of(xi_new)
            if np.isfinite(obj_new) and obj_new <= obj:
                a[i] += delta
                Ka, aKa, obj = Ka_new, aKa_new, float(obj_new)
                state.objective = obj
            if obj < state.best_objective:
                state.best_objective = obj
                state.best_a = a.copy()
                state.best_b = b
                state.stall_count = 0
            else:
                state.stall_count += 1
                if state.stall_count >= STALL_LIMIT:
                    settle_best()
                    state.stop_reason = "stalled"
                    return state
            yield state
        # Sweep boundary: exact refresh, then the shared bias rule.
        Ka = Kv @ a
        aKa = float(a @ Ka)
        b = bias_from_margins(Ka, b, y)
        state.b = b
        xi = np.maximum(0.0, 1.0 - y * (Ka + b))
        obj = (0.5 * aKa if include_reg else 0.0) + loss_of(xi)
        state.objective = obj
        if not np.isfinite(obj) or obj > DIVERGENCE_LIMIT:
            settle_best()
            state.diverged = True
            state.stop_reason = "diverged"
            return state
        if obj < state.best_objective:
            state.best_objective = obj
            state.best_a = a.copy()
            state.best_b = b
            state.stall_count = 0
        yield state


def _run_primal(K, M, y, *, weight, include_reg, quad_loss, budget_seconds):
    state = init_primal_state(len(y))
    budget = TimeBudget(seconds=budget_seconds)
    gen = primal_steps(
        state, K, M, y, weight=weight, include_reg=include_reg, quad_loss=quad_loss
    )
    result, timed_out = run_with_budget(gen, budget)
    state = result if result is not None else state
    if timed_out:
        state.timed_out = True
        state.stop_reason = "timeout"
    state.a[:] = state.best_a
    state.b = state.best_b
    state.objective = state.best_objective
    return state


def _check_training(train: Dataset) -> np.ndarray:
    y = require_binary_targets(train.targets)
    if len(dedup(train)) != len(train):
        raise InputError("training patterns contain exact duplicates; dedup first")
    return y


def rts_solve(train: Dataset, params: SolverParams) -> PrimalState:
    """Regularized coupled-error solver, best-seen state returned."""
    y = _check_training(train)
    K = build_gram(train.features, params.gamma_K)
    S = build_gram(train.features, params.gamma_S)
    return _run_primal(
        K,
        S,
        y,
        weight=params.C,
        include_reg=True,
        quad_loss=True,
        budget_seconds=params.budget_seconds,
    )


def s_solve(train: Dataset, gamma_K, gamma_S, budget_seconds=DEFAULT_BUDGET_SECONDS) -> PrimalState:
    """Error-term-only solver: minimizes xi'S xi with no regularizer."""
    y = _check_training(train)
    K = build_gram(train.features, gamma_K)
    S = build_gram(train.features, gamma_S)
    return _run_primal(
        K, S, y, weight=1.0, include_reg=False, quad_loss=True,
        budget_seconds=budget_seconds,
    )


def rt_solve(train: Dataset, C, gamma_K, budget_seconds=DEFAULT_BUDGET_SECONDS) -> PrimalState:
    """Linear-hinge baseline on the same representer form."""
    y = _check_training(train)
    K = build_gram(train.features, gamma_K)
    return _run_primal(
        K, None, y, weight=C, include_reg=True, quad_loss=False,
        budget_seconds=budget_seconds,
    )


def rt_mkl_solve(train: Dataset, C, n_kernels, budget_seconds=DEFAULT_BUDGET_SECONDS):
    """Linear baseline on an alignment-weighted kernel combination."""
    y = _check_training(train)
    grams = component_grams(train.features, n_kernels)
    wk = mkl_weights(grams, y)
    K = mkl_combine(grams, wk)
    combo = MklCombo(gammas=component_gammas(n_kernels), weights=tuple(wk))
    state = _run_primal(
        K, None, y, weight=C, include_reg=True, quad_loss=False,
        budget_seconds=budget_seconds,
    )
    return state, combo


def rts_mkl_solve(
    train: Dataset, C, n_kernels, n_similarities, budget_seconds=DEFAULT_BUDGET_SECONDS
):
    """Coupled solver with both matrices built as weighted combinations."""
    y = _check_training(train)
    k_grams = component_grams(train.features, n_kernels)
    wk = mkl_weights(k_grams, y)
    K = mkl_combine(k_grams, wk)
    s_grams = component_grams(train.features, n_similarities)
    ws = mkl_weights(s_grams, y)
    S = mkl_combine(s_grams, ws)
    combo_k = MklCombo(gammas=component_gammas(n_kernels), weights=tuple(wk))
    combo_s = MklCombo(gammas=component_gammas(n_similarities), weights=tuple(ws))
    state = _run_primal(
        K, S, y, weight=C, include_reg=True, quad_loss=True,
        budget_seconds=budget_seconds,
    )
    return state, combo_k, combo_s


def predict(state: PrimalState, K_eval) -> np.ndarray:
    """Labels from train-by-new kernel evaluations; f = 0 maps to +1."""
    K_eval = np.asarray(K_eval, dtype=float)
    f = state.a @ K_eval + state.b
    return np.where(f >= 0.0, 1.0, -1.0)


def model_payload(state: PrimalState, gamma_K, train_row_ids, C=None, gamma_S=None) -> dict:
    out = {
        "a": [float(v) for v in state.a],
        "b": float(state.b),
        "gamma_K": float(gamma_K),
        "train_row_ids": [int(r) for r in train_row_ids],
    }
    if gamma_S is not None:
        out["gamma_S"] = float(gamma_S)
    if C is not None:
        out["C"] = float(C)
    return out


def mkl_payload(state: PrimalState, C, combo_k: MklCombo, train_row_ids, combo_s=None) -> dict:
    out = {
        "a": [float(v) for v in state.a],
        "b": float(state.b),
        "C": float(C),
        "kernel_gammas": [float(g) for g in combo_k.gammas],
        "kernel_weights": [float(w) for w in combo_k.weights],
        "train_row_ids": [int(r) for r in train_row_ids],
    }
    if combo_s is not None:
        out["similarity_gammas"] = [float(g) for g in combo_s.gammas]
        out["similarity_weights"] = [float(w) for w in combo_s.weights]
    return out
