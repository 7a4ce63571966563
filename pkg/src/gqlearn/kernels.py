"""RBF Gram matrices, SPD inverse factorizations, and aligned kernel mixtures.

Similarity matrices here always come from the Gaussian kernel
``exp(-gamma * ||x - z||^2)``, so they are symmetric with unit diagonal and
entries in ``(0, 1]`` (the smallest entries may underflow to exactly zero).
Mixtures are convex combinations of such matrices, weighted by a centered
alignment score against the label outer product.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.spatial.distance import cdist

from .errors import FactorizationError, InputError

SYMMETRY_TOL = 1e-12
JITTER = 1e-10

# Widths available to mixture components, coarsest to sharpest; a mixture of
# size n uses the first n of these.
GAMMA_LADDER = tuple(10.0 ** e for e in range(-4, 6))
MAX_COMPONENTS = 10


def _check_gamma(gamma) -> float:
    gamma = float(gamma)
    if not np.isfinite(gamma) or gamma <= 0.0:
        raise InputError(f"gamma must be a positive real, got {gamma!r}")
    return gamma


@dataclass(frozen=True)
class GramMatrix:
    """Dense symmetric similarity matrix with unit diagonal.

    ``gamma`` records the kernel width used to build the matrix; mixtures
    built by :func:`mkl_combine` carry ``gamma=None``.
    """

    values: np.ndarray
    gamma: float | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise InputError("similarity matrix must be square")
        if v.shape[0] < 1:
            raise InputError("similarity matrix needs at least one pattern")
        if not np.isfinite(v).all():
            raise InputError("similarity matrix has non-finite entries")
        if np.abs(v - v.T).max() > SYMMETRY_TOL:
            raise InputError("similarity matrix is not symmetric")
        if not (np.diagonal(v) == 1.0).all():
            raise InputError("similarity matrix diagonal must be exactly 1")
        if v.min() < 0.0 or v.max() > 1.0:
            raise InputError("similarity entries must lie in [0, 1]")

    @property
    def size(self) -> int:
        return self.values.shape[0]


def rbf(x, z, gamma) -> float:
    """Gaussian similarity ``exp(-gamma * ||x - z||^2)`` of two vectors."""
    x = np.asarray(x, dtype=float).ravel()
    z = np.asarray(z, dtype=float).ravel()
    if x.shape != z.shape:
        raise InputError(f"dimension mismatch: {x.shape[0]} vs {z.shape[0]}")
    gamma = _check_gamma(gamma)
    diff = x - z
    return float(np.exp(-gamma * float(diff @ diff)))


def _as_features(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 1:
        raise InputError("features must be a non-empty 2-D array")
    if not np.isfinite(X).all():
        raise InputError("features contain non-finite values")
    return X


def cross_gram(Xa, Xb, gamma) -> np.ndarray:
    """Rectangular kernel matrix ``K[r, c] = rbf(Xa[r], Xb[c], gamma)``."""
    Xa, Xb = _as_features(Xa), _as_features(Xb)
    if Xa.shape[1] != Xb.shape[1]:
        raise InputError("feature dimensions differ between the two sides")
    gamma = _check_gamma(gamma)
    d2 = cdist(Xa, Xb, "sqeuclidean")
    return np.exp(-gamma * np.maximum(d2, 0.0))


def build_gram(X, gamma) -> GramMatrix:
    """Square RBF similarity matrix of a pattern set with itself."""
    vals = cross_gram(X, X, gamma)
    vals = 0.5 * (vals + vals.T)
    np.fill_diagonal(vals, 1.0)
    return GramMatrix(vals, gamma=_check_gamma(gamma))


@dataclass
class FactorizedInverse:
    """Cholesky factorization of a similarity matrix, exposing its inverse.

    ``jitter`` is 0 when the matrix factorized as given, or the diagonal
    shift that was needed to rescue a failed pivot.
    """

    source: GramMatrix
    jitter: float
    _cho: tuple
    _inverse: np.ndarray | None = field(default=None, repr=False)

    def solve(self, rhs) -> np.ndarray:
        return cho_solve(self._cho, np.asarray(rhs, dtype=float))

    @property
    def matrix(self) -> np.ndarray:
        """Dense symmetric inverse, computed once and cached."""
        if self._inverse is None:
            inv = cho_solve(self._cho, np.eye(self.source.size))
            self._inverse = 0.5 * (inv + inv.T)
        return self._inverse

    def entry(self, p, q) -> float:
        return float(self.matrix[p, q])


def factorize_inverse(S: GramMatrix) -> FactorizedInverse:
    """Factorize an SPD similarity matrix, jittering once on pivot failure.

    A non-positive pivot almost always means duplicated or near-duplicated
    patterns; a single diagonal shift of ``1e-10`` is tried before failing so
    that numerically near-duplicate rows (which survive exact dedup) can
    still be handled.
    """
    vals = S.values
    try:
        c = cho_factor(vals, lower=True)
        return FactorizedInverse(source=S, jitter=0.0, _cho=c)
    except np.linalg.LinAlgError:
        pass
    try:
        c = cho_factor(vals + JITTER * np.eye(S.size), lower=True)
        return FactorizedInverse(source=S, jitter=JITTER, _cho=c)
    except np.linalg.LinAlgError:
        raise FactorizationError(
            "similarity matrix is not positive definite even after jitter; "
            "training patterns are likely duplicated, dedup them first"
        ) from None


def centered_alignment(component: GramMatrix, y) -> float:
    """Alignment ``<Kc, yy'>_F / ||Kc||_F`` of a centered similarity matrix.

    Components with no variation (all-equal similarities) center to zero and
    get alignment 0.
    """
    K = component.values
    y = np.asarray(y, dtype=float)
    if y.shape[0] != K.shape[0]:
        raise InputError("label vector length does not match the matrix")
    mu = K.mean(axis=0)
    Kc = K - mu[None, :] - mu[:, None] + K.mean()
    denom = float(np.linalg.norm(Kc))
    if denom <= 1e-15:
        return 0.0
    return float(y @ Kc @ y) / denom


def mkl_weights(components, y) -> np.ndarray:
    """Convex weights for a list of similarity components.

    Each component scores by centered alignment with the labels; negative
    scores clip to zero and the rest normalize to sum one. When no component
    aligns positively the weights fall back to uniform.
    """
    n = len(components)
    if not 1 <= n <= MAX_COMPONENTS:
        raise InputError(f"need between 1 and {MAX_COMPONENTS} components, got {n}")
    size = components[0].size
    if any(c.size != size for c in components):
        raise InputError("components must share the same pattern set")
    raw = np.array([max(0.0, centered_alignment(c, y)) for c in components])
    if raw.sum() <= 0.0:
        return np.full(n, 1.0 / n)
    return raw / raw.sum()


def mkl_combine(components, weights) -> GramMatrix:
    """Convex combination of similarity components."""
    weights = np.asarray(weights, dtype=float)
    if len(components) != weights.shape[0]:
        raise InputError("component/weight length mismatch")
    if weights.ndim != 1 or (weights < 0.0).any():
        raise InputError("weights must be non-negative")
    if abs(float(weights.sum()) - 1.0) > 1e-12:
        raise InputError("weights must sum to one")
    size = components[0].size
    if any(c.size != size for c in components):
        raise InputError("components must share the same pattern set")
    out = np.zeros((size, size))
    for w, comp in zip(weights, components):
        out += w * comp.values
    out = 0.5 * (out + out.T)
    np.fill_diagonal(out, 1.0)
    np.clip(out, 0.0, 1.0, out=out)
    return GramMatrix(out, gamma=None)


@dataclass(frozen=True)
class MklCombo:
    """Widths and convex weights of a fitted kernel mixture."""

    gammas: tuple
    weights: tuple

    def __post_init__(self):
        object.__setattr__(self, "gammas", tuple(float(g) for g in self.gammas))
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        n = len(self.gammas)
        if not 1 <= n <= MAX_COMPONENTS:
            raise InputError(f"need between 1 and {MAX_COMPONENTS} components, got {n}")
        if len(self.weights) != n:
            raise InputError("component/weight length mismatch")
        if any(g <= 0 for g in self.gammas):
            raise InputError("gammas must be positive")
        if any(w < 0 for w in self.weights):
            raise InputError("weights must be non-negative")
        if abs(sum(self.weights) - 1.0) > 1e-12:
            raise InputError("weights must sum to one")


def component_gammas(n) -> tuple:
    """First ``n`` widths of the mixture ladder."""
    n = int(n)
    if not 1 <= n <= MAX_COMPONENTS:
        raise InputError(f"component count must be in [1, {MAX_COMPONENTS}], got {n}")
    return GAMMA_LADDER[:n]


def component_grams(X, n) -> list:
    """Square similarity components of ``X`` for the first ``n`` ladder widths."""
    return [build_gram(X, g) for g in component_gammas(n)]


def mkl_cross_gram(Xa, Xb, combo: MklCombo) -> np.ndarray:
    """Rectangular mixture kernel between two pattern sets."""
    out = np.zeros((len(Xa), len(Xb)))
    for g, w in zip(combo.gammas, combo.weights):
        if w != 0.0:
            out += w * cross_gram(Xa, Xb, g)
    return out
