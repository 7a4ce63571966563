"""SMO-style ascent on the similarity-coupled soft-margin dual.

The dual couples the usual box-free support weights ``alpha`` with a second
non-negative vector ``lam`` through the inverse of the pattern-similarity
matrix. Updates come in pairs: a two-coordinate ``alpha`` move of size ``nu``
that preserves the equality constraint, followed by a single-coordinate
``lam`` move of size ``mu_k``; both are clipped to the feasible cone and
accepted only when the dual value increases.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, dedup, require_binary_targets
from .errors import DegeneratePairError, InputError
from .evaluation import DEFAULT_BUDGET_SECONDS, TimeBudget, run_with_budget
from .kernels import FactorizedInverse, GramMatrix, build_gram, factorize_inverse

CURVATURE_FLOOR = 1e-12
ACCEPT_RTOL = 1e-12
REBUILD_EVERY = 1000
DEFAULT_GAP_TOL = 1e-3


@dataclass(frozen=True)
class SolverParams:
    C: float
    gamma_K: float
    gamma_S: float
    budget_seconds: float = DEFAULT_BUDGET_SECONDS
    gap_tol: float = DEFAULT_GAP_TOL

    def __post_init__(self):
        for name in ("C", "gamma_K", "gamma_S", "budget_seconds", "gap_tol"):
            if not getattr(self, name) > 0:
                raise InputError(f"{name} must be positive")


@dataclass
class DualState:
    """Mutable solver state; one instance is owned by a single run."""

    alpha: np.ndarray
    lam: np.ndarray
    b: float
    cached_margins: np.ndarray
    objective: float = 0.0
    accepted: int = 0
    stop_reason: str = "running"
    timed_out: bool = False


def init_state(n) -> DualState:
    n = int(n)
    return DualState(
        alpha=np.zeros(n),
        lam=np.zeros(n),
        b=0.0,
        cached_margins=np.zeros(n),
    )


def _values(mat) -> np.ndarray:
    return mat.values if isinstance(mat, GramMatrix) else np.asarray(mat, dtype=float)


def _inverse_matrix(sinv) -> np.ndarray:
    if isinstance(sinv, FactorizedInverse):
        return sinv.matrix
    return np.asarray(sinv, dtype=float)


def dual_objective(state: DualState, K, Sinv, y, C) -> float:
    """alpha'1 - 1/2 (alpha y)'K(alpha y) - (alpha+lam)'S^-1(alpha+lam)/4C."""
    Kv = _values(K)
    y = np.asarray(y, dtype=float)
    a = state.alpha * y
    w = state.alpha + state.lam
    if isinstance(Sinv, FactorizedInverse):
        sw = Sinv.solve(w)
    else:
        sw = np.asarray(Sinv, dtype=float) @ w
    return float(state.alpha.sum() - 0.5 * (a @ (Kv @ a)) - (w @ sw) / (4.0 * C))


def bias_from_margins(margins, b, y) -> float:
    """Average residual y_p - margin_p over positive-slack patterns.

    Patterns with slack zero (confident side of the margin) carry no bias
    information under the quadratic error; with none at all, b is kept.
    """
    margins = np.asarray(margins, dtype=float)
    y = np.asarray(y, dtype=float)
    slack = 1.0 - y * (margins + b)
    mask = slack > 0
    if not mask.any():
        return float(b)
    return float(np.mean(y[mask] - margins[mask]))


def update_bias(state: DualState, K, y, C) -> float:
    return bias_from_margins(state.cached_margins, state.b, y)


def compute_nu(i, j, state: DualState, K, Sinv, mu, y, C) -> float:
    """Unconstrained maximizer of the dual along (alpha_i += nu y_i, alpha_j -= nu y_j).

    ``mu`` is a fixed pending lam increment (vector or None). Raises
    DegeneratePairError when the direction has no curvature, which for
    distinct patterns cannot happen thanks to the SPD inverse term.
    """
    if i == j:
        raise InputError("pair update needs two distinct indices")
    Kv = _values(K)
    y = np.asarray(y, dtype=float)
    g = state.cached_margins
    w = state.alpha + state.lam
    if mu is not None:
        w = w + np.asarray(mu, dtype=float)
    if isinstance(Sinv, FactorizedInverse):
        h = Sinv.solve(w)
        s_ii, s_ij, s_jj = Sinv.entry(i, i), Sinv.entry(i, j), Sinv.entry(j, j)
    else:
        Si = np.asarray(Sinv, dtype=float)
        h = Si @ w
        s_ii, s_ij, s_jj = Si[i, i], Si[i, j], Si[j, j]
    psi = (y[i] - y[j]) - (g[i] - g[j]) - (y[i] * h[i] - y[j] * h[j]) / (2.0 * C)
    omega = (Kv[i, i] - 2.0 * Kv[i, j] + Kv[j, j]) + (
        s_ii - 2.0 * y[i] * y[j] * s_ij + s_jj
    ) / (2.0 * C)
    if omega <= CURVATURE_FLOOR:
        raise DegeneratePairError(f"pair ({i}, {j}) has no usable curvature")
    return float(psi / omega)


def compute_mu(k, nu, i, j, Sinv, y) -> float:
    """Stationary single-coordinate lam increment for a fresh pair move.

    This is the maximizer of the lam_k quadratic when the only mass in
    alpha+lam is the pair increment itself (the in-run solver accounts for
    accumulated state separately).
    """
    y = np.asarray(y, dtype=float)
    if isinstance(Sinv, FactorizedInverse):
        s_ki, s_kj, s_kk = Sinv.entry(k, i), Sinv.entry(k, j), Sinv.entry(k, k)
    else:
        Si = np.asarray(Sinv, dtype=float)
        s_ki, s_kj, s_kk = Si[k, i], Si[k, j], Si[k, k]
    return float(-nu * (y[i] * s_ki - y[j] * s_kj) / s_kk)


def clip_updates(state: DualState, i, j, k, nu, mu_k, y):
    """Project the proposed increments back onto alpha >= 0, lam >= 0.

    Clips sequentially: the i-side bound first, then the j-side, then the
    lam coordinate; returns (nu', lam_k') where lam_k' is the post-update
    value of lam_k.
    """
    y = np.asarray(y, dtype=float)
    if state.alpha[i] + y[i] * nu < 0:
        nu = -y[i] * state.alpha[i]
    if state.alpha[j] - y[j] * nu < 0:
        nu = y[j] * state.alpha[j]
    lam_k = state.lam[k]
    if lam_k + mu_k < 0:
        lam_k = 0.0
    else:
        lam_k = lam_k + mu_k
    return float(nu), float(lam_k)


# ---------------------------------------------------------------------------
# vectorized scans used by the solver loop

def _pair_scan(i, alpha, g, h, y, Kv, Kdiag, Simat, Sidiag, C):
    """Best partner j for index i: clipped step and exact dual increment.

    Returns (j, nu, delta) or None when no partner yields a positive
    increment. Ties keep the lowest j.
    """
    yi = y[i]
    psi = (yi - y) - (g[i] - g) - (yi * h[i] - y * h) / (2.0 * C)
    omega = (Kv[i, i] - 2.0 * Kv[i] + Kdiag) + (
        Simat[i, i] - 2.0 * yi * y * Simat[i] + Sidiag
    ) / (2.0 * C)
    valid = omega > CURVATURE_FLOOR
    valid[i] = False
    omega_safe = np.where(valid, omega, 1.0)
    nu = psi / omega_safe
    # Feasibility of (alpha_i + y_i nu, alpha_j - y_j nu) is an interval in nu.
    lo = np.where(y < 0, -alpha, -np.inf)
    hi = np.where(y > 0, alpha, np.inf)
    if yi > 0:
        lo = np.maximum(lo, -alpha[i])
    else:
        hi = np.minimum(hi, alpha[i])
    nu = np.clip(nu, lo, hi)
    delta = nu * psi - 0.5 * nu * nu * omega
    delta = np.where(valid, delta, -np.inf)
    j = int(np.argmax(delta))
    if not delta[j] > 0.0:
        return None
    return j, float(nu[j]), float(delta[j])


def _lam_scan(nu, i, j, lam, h, y, Simat, Sidiag, C):
    """Best single lam coordinate after a pending pair move of size nu.

    Returns (k, mu_k, delta) or None when no coordinate improves the dual.
    """
    m = h if nu == 0.0 else h + (nu * y[i]) * Simat[i] - (nu * y[j]) * Simat[j]
    mu = -m / Sidiag
    mu = np.maximum(mu, -lam)
    delta = -(2.0 * mu * m + mu * mu * Sidiag) / (4.0 * C)
    k = int(np.argmax(delta))
    if not delta[k] > 0.0:
        return None
    return k, float(mu[k]), float(delta[k])


def select_patterns(i, state: DualState, K, Sinv, y, params: SolverParams):
    """Partner index j maximizing the clipped dual increment from i.

    Returns None when no partner makes progress. The threshold rule with
    its selectivity knob at the sharp end keeps exactly the argmax.
    """
    Kv = _values(K)
    Simat = _inverse_matrix(Sinv)
    y = np.asarray(y, dtype=float)
    w = state.alpha + state.lam
    h = Sinv.solve(w) if isinstance(Sinv, FactorizedInverse) else Simat @ w
    hit = _pair_scan(
        i,
        state.alpha,
        state.cached_margins,
        h,
        y,
        Kv,
        np.diagonal(Kv).copy(),
        Simat,
        np.diagonal(Simat).copy(),
        params.C,
    )
    return None if hit is None else hit[0]


def _primal_value(alpha, g, b, y, Sv, C) -> float:
    a = alpha * y
    slack = np.maximum(0.0, 1.0 - y * (g + b))
    return float(0.5 * (a @ g) + C * (slack @ (Sv @ slack)))


def smos_steps(state: DualState, K, S, Sinv, y, params: SolverParams):
    """Solver loop as a generator; yields after every outer-index visit.

    Stops on relative duality gap <= gap_tol, or after a full sweep with
    no accepted update. Budget handling lives in the caller.
    """
    Kv = _values(K)
    Sv = _values(S)
    Simat = _inverse_matrix(Sinv)
    y = np.asarray(y, dtype=float)
    C = params.C
    Kdiag = np.diagonal(Kv).copy()
    Sidiag = np.diagonal(Simat).copy()
    alpha, lam, g = state.alpha, state.lam, state.cached_margins
    h = Simat @ (alpha + lam)
    n = y.shape[0]
    while True:
        accepted_in_sweep = 0
        for i in range(n):
            pair = _pair_scan(i, alpha, g, h, y, Kv, Kdiag, Simat, Sidiag, C)
            if pair is None:
                j, nu, d_pair = i, 0.0, 0.0
            else:
                j, nu, d_pair = pair
            hit = _lam_scan(nu, i, j, lam, h, y, Simat, Sidiag, C)
            if hit is None:
                k, mu_k, d_lam = None, 0.0, 0.0
            else:
                k, mu_k, d_lam = hit
            total = d_pair + d_lam
            if total > ACCEPT_RTOL * max(1.0, abs(state.objective)):
                if nu != 0.0:
                    alpha[i] += y[i] * nu
                    alpha[j] -= y[j] * nu
                    g += nu * (Kv[i] - Kv[j])
                    h += (nu * y[i]) * Simat[i] - (nu * y[j]) * Simat[j]
                if k is not None:
                    lam[k] += mu_k
                    if lam[k] < 0.0:
                        lam[k] = 0.0
                    h += mu_k * Simat[k]
                state.objective += total
                state.accepted += 1
                accepted_in_sweep += 1
                state.b = bias_from_margins(g, state.b, y)
                if state.accepted % REBUILD_EVERY == 0:
                    g[:] = Kv @ (alpha * y)
                    h = Simat @ (alpha + lam)
            yield state
        # Sweep boundary: refresh caches exactly, then test the gap.
        g[:] = Kv @ (alpha * y)
        h = Simat @ (alpha + lam)
        a = alpha * y
        state.objective = float(
            alpha.sum() - 0.5 * (a @ g) - ((alpha + lam) @ h) / (4.0 * C)
        )
        primal = _primal_value(alpha, g, state.b, y, Sv, C)
        gap = (primal - state.objective) / max(1.0, abs(primal))
        if gap <= params.gap_tol:
            state.stop_reason = "converged"
            return state
        if accepted_in_sweep == 0:
            state.stop_reason = "no_progress"
            return state


def smos_solve(train: Dataset, params: SolverParams) -> DualState:
    """Fit the coupled dual on a de-duplicated training set."""
    y = require_binary_targets(train.targets)
    if len(dedup(train)) != len(train):
        raise InputError("training patterns contain exact duplicates; dedup first")
    K = build_gram(train.features, params.gamma_K)
    S = build_gram(train.features, params.gamma_S)
    Sinv = factorize_inverse(S)
    state = init_state(len(train))
    budget = TimeBudget(seconds=params.budget_seconds)
    result, timed_out = run_with_budget(
        smos_steps(state, K, S, Sinv, y, params), budget
    )
    state = result if result is not None else state
    if timed_out:
        state.timed_out = True
        state.stop_reason = "timeout"
    # Exact refresh so the returned state is self-consistent.
    state.cached_margins[:] = K.values @ (state.alpha * y)
    state.objective = dual_objective(state, K, Sinv, y, params.C)
    return state


def predict(state: DualState, K_eval, y_train) -> np.ndarray:
    """Labels for new patterns from train-by-new kernel evaluations."""
    K_eval = np.asarray(K_eval, dtype=float)
    y_train = np.asarray(y_train, dtype=float)
    f = (state.alpha * y_train) @ K_eval + state.b
    return np.where(f >= 0.0, 1.0, -1.0)


def model_payload(state: DualState, params: SolverParams, train_row_ids) -> dict:
    """Serializable model: decimal repr round-trips bit-exactly via JSON."""
    return {
        "alphas": [float(v) for v in state.alpha],
        "lambdas": [float(v) for v in state.lam],
        "b": float(state.b),
        "C": float(params.C),
        "gamma_K": float(params.gamma_K),
        "gamma_S": float(params.gamma_S),
        "train_row_ids": [int(r) for r in train_row_ids],
    }
