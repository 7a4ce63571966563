"""Kernel machines and networks with similarity-coupled quadratic losses.

The error term couples per-pattern slacks (or per-pattern losses) through
an RBF similarity matrix over the training patterns; everything reduces to
the familiar uncoupled quadratic forms when that matrix is the identity.
"""

from .data import Dataset, FoldPlan, SplitSpec, dedup, kfold, load_csv, split, synth_normal, synth_uniform
from .errors import (
    DegeneratePairError,
    FactorizationError,
    GqlearnError,
    InputError,
    NoCompletedCellError,
    ParseError,
)
from .evaluation import (
    CalibrationResult,
    GridSpec,
    KfoldResult,
    TimeBudget,
    f1,
    grid_search,
    log_axis,
    mse,
    run_kfold,
    run_with_budget,
)
from .kernels import GramMatrix, build_gram, cross_gram, factorize_inverse, rbf
from .svm_dual import DualState, SolverParams, smos_solve
from .svm_primal import PrimalState, rt_solve, rts_solve, s_solve

__all__ = [
    "CalibrationResult",
    "Dataset",
    "DegeneratePairError",
    "DualState",
    "FactorizationError",
    "FoldPlan",
    "GqlearnError",
    "GramMatrix",
    "GridSpec",
    "InputError",
    "KfoldResult",
    "NoCompletedCellError",
    "ParseError",
    "PrimalState",
    "SolverParams",
    "SplitSpec",
    "TimeBudget",
    "build_gram",
    "cross_gram",
    "dedup",
    "f1",
    "factorize_inverse",
    "grid_search",
    "kfold",
    "load_csv",
    "log_axis",
    "mse",
    "rbf",
    "rt_solve",
    "rts_solve",
    "run_kfold",
    "run_with_budget",
    "s_solve",
    "smos_solve",
    "split",
    "synth_normal",
    "synth_uniform",
]
