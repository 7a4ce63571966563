"""Datasets: CSV loading, synthetic generators, dedup, splits, and folds."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import InputError, ParseError

# Sub-stream tags so one user-facing seed can drive independent generators.
STREAM_SPLIT = 0
STREAM_INIT = 1
STREAM_BATCH = 2
STREAM_FOLD = 3

# Accepted binary label encodings, each mapped onto {-1, +1}.
_LABEL_MAPS = (
    ({-1.0, 1.0}, {-1.0: -1.0, 1.0: 1.0}),
    ({0.0, 1.0}, {0.0: -1.0, 1.0: 1.0}),
    ({2.0, 4.0}, {2.0: -1.0, 4.0: 1.0}),
)


def stream_rng(seed, stream) -> np.random.Generator:
    """Deterministic generator for one named sub-stream of a base seed."""
    return np.random.default_rng([int(seed), int(stream)])


@dataclass(frozen=True)
class Dataset:
    """Feature matrix with aligned targets and stable row identities.

    ``row_ids`` index into the originating dataset and survive splits and
    dedup, so a serialized model can name the exact rows it was fit on.
    """

    features: np.ndarray
    targets: np.ndarray
    name: str = ""
    row_ids: np.ndarray | None = None
    seed: int | None = None

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        t = np.asarray(self.targets, dtype=float)
        if X.ndim != 2:
            raise InputError("features must be 2-D")
        if t.ndim != 1 or t.shape[0] != X.shape[0]:
            raise InputError("targets must be 1-D and aligned with features")
        ids = self.row_ids
        ids = np.arange(X.shape[0]) if ids is None else np.asarray(ids, dtype=int)
        if ids.shape != (X.shape[0],):
            raise InputError("row_ids must align with features")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "targets", t)
        object.__setattr__(self, "row_ids", ids)

    def __len__(self) -> int:
        return self.features.shape[0]

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=int)
        return Dataset(
            self.features[idx],
            self.targets[idx],
            name=self.name,
            row_ids=self.row_ids[idx],
            seed=self.seed,
        )


def require_binary_targets(targets) -> np.ndarray:
    t = np.asarray(targets, dtype=float)
    if not set(np.unique(t)) <= {-1.0, 1.0}:
        raise InputError("classification targets must be in {-1, +1}")
    return t


@dataclass(frozen=True)
class SplitSpec:
    """Sizes of the train/validation/test partition.

    With ``shuffle=False`` the first ``n_train`` rows become the training
    set, the next ``n_val`` the validation set, and so on (sequential
    protocol for time-ordered data).
    """

    n_train: int
    n_val: int
    n_test: int
    shuffle: bool = True

    def __post_init__(self):
        if min(self.n_train, self.n_val, self.n_test) < 0 or self.n_train < 1:
            raise InputError("split sizes must be non-negative with n_train >= 1")


def load_csv(path, target_col=0, encoding="binary", header=False, name=None) -> Dataset:
    """Load a dense CSV dataset.

    ``encoding="binary"`` accepts labels in {-1,+1}, {0,1} or {2,4} and maps
    them onto {-1,+1}; ``encoding="regression"`` keeps targets as given.
    """
    if encoding not in ("binary", "regression"):
        raise InputError(f"unknown target encoding {encoding!r}")
    rows: list[list[float]] = []
    width = None
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for lineno, raw in enumerate(reader, start=1):
            if header and lineno == 1:
                continue
            if not raw or all(not cell.strip() for cell in raw):
                continue
            try:
                row = [float(cell) for cell in raw]
            except ValueError:
                raise ParseError(f"{path}: line {lineno}: unreadable value") from None
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise ParseError(
                    f"{path}: line {lineno}: expected {width} columns, got {len(row)}"
                )
            rows.append(row)
    if not rows:
        raise ParseError(f"{path}: no data rows")
    mat = np.asarray(rows, dtype=float)
    if not -mat.shape[1] <= target_col < mat.shape[1]:
        raise InputError(f"target column {target_col} out of range")
    targets = mat[:, target_col]
    features = np.delete(mat, target_col % mat.shape[1], axis=1)
    if features.shape[1] == 0:
        raise InputError("dataset has no feature columns")
    if encoding == "binary":
        targets = _encode_binary(targets)
    stem = name if name is not None else _stem(path)
    return Dataset(features, targets, name=stem)


def _stem(path) -> str:
    import os

    return os.path.splitext(os.path.basename(str(path)))[0]


def _encode_binary(targets: np.ndarray) -> np.ndarray:
    uniq = set(np.unique(targets))
    for domain, mapping in _LABEL_MAPS:
        if uniq <= domain:
            return np.array([mapping[v] for v in targets])
    raise InputError(f"labels {sorted(uniq)} do not form a supported binary encoding")


def save_csv(dataset: Dataset, path) -> None:
    """Write a dataset with the target in column 0, byte-stable across runs."""
    with open(path, "w", newline="") as fh:
        for t, row in zip(dataset.targets, dataset.features):
            cells = [_fmt(t)] + [_fmt(v) for v in row]
            fh.write(",".join(cells) + "\n")


def _fmt(v) -> str:
    v = float(v)
    if v.is_integer():
        return str(int(v))
    return repr(v)


def load_sparse(path, encoding="binary", name=None) -> Dataset:
    """Minimal ``label index:value`` loader (1-based indices), densified."""
    rows = []
    labels = []
    max_idx = 0
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            try:
                labels.append(float(parts[0]))
                pairs = []
                for tok in parts[1:]:
                    idx, val = tok.split(":")
                    pairs.append((int(idx), float(val)))
            except (ValueError, IndexError):
                raise ParseError(f"{path}: line {lineno}: unreadable entry") from None
            if pairs:
                max_idx = max(max_idx, max(i for i, _ in pairs))
            rows.append(pairs)
    if not rows:
        raise ParseError(f"{path}: no data rows")
    X = np.zeros((len(rows), max(max_idx, 1)))
    for r, pairs in enumerate(rows):
        for idx, val in pairs:
            if idx < 1:
                raise ParseError(f"{path}: feature indices are 1-based")
            X[r, idx - 1] = val
    targets = np.asarray(labels)
    if encoding == "binary":
        targets = _encode_binary(targets)
    return Dataset(X, targets, name=name if name is not None else _stem(path))


def dedup(dataset: Dataset) -> Dataset:
    """Drop rows whose features are bitwise-equal to an earlier row.

    The first occurrence wins and the original order is preserved, so the
    operation is idempotent.
    """
    seen = set()
    keep = []
    for idx, row in enumerate(dataset.features):
        key = row.tobytes()
        if key not in seen:
            seen.add(key)
            keep.append(idx)
    if len(keep) == len(dataset):
        return dataset
    return dataset.subset(keep)


def synth_uniform(n, seed) -> Dataset:
    """``n`` points uniform on the cube [-5, 5]^3 with fair-coin labels."""
    if n < 1:
        raise InputError("need at least one point")
    rng = np.random.default_rng(int(seed))
    X = rng.uniform(-5.0, 5.0, size=(int(n), 3))
    y = rng.integers(0, 2, size=int(n)) * 2.0 - 1.0
    return Dataset(X, y, name=f"uniform{int(n)}", seed=int(seed))


def synth_normal(n, seed) -> Dataset:
    """``n`` points from N(0, 3^2) per axis in 3-D with fair-coin labels."""
    if n < 1:
        raise InputError("need at least one point")
    rng = np.random.default_rng(int(seed))
    X = rng.normal(0.0, 3.0, size=(int(n), 3))
    y = rng.integers(0, 2, size=int(n)) * 2.0 - 1.0
    return Dataset(X, y, name=f"normal{int(n)}", seed=int(seed))


def split(dataset: Dataset, spec: SplitSpec, seed) -> tuple:
    """Partition into (train, val, test) per ``spec``.

    Shuffling permutes rows with the given seed first; otherwise rows are
    taken in file order.
    """
    total = spec.n_train + spec.n_val + spec.n_test
    if total > len(dataset):
        raise InputError(f"split needs {total} rows, dataset has {len(dataset)}")
    if spec.shuffle:
        order = np.random.default_rng(seed).permutation(len(dataset))
    else:
        order = np.arange(len(dataset))
    a, b = spec.n_train, spec.n_train + spec.n_val
    return (
        dataset.subset(order[:a]),
        dataset.subset(order[a:b]),
        dataset.subset(order[b:total]),
    )


@dataclass(frozen=True)
class FoldPlan:
    """Assignment of every training pattern to one of ``k`` folds."""

    k: int
    assignments: np.ndarray

    def members(self, fold) -> np.ndarray:
        return np.flatnonzero(self.assignments == fold)

    def complement(self, fold) -> np.ndarray:
        return np.flatnonzero(self.assignments != fold)


def kfold(dataset: Dataset, k, seed) -> FoldPlan:
    """Balanced k-fold partition; fold sizes differ by at most one."""
    n = len(dataset)
    k = int(k)
    if k < 2:
        raise InputError("k must be at least 2")
    if k > n:
        raise InputError(f"k={k} exceeds the {n} available patterns")
    perm = np.random.default_rng(seed).permutation(n)
    base, extra = divmod(n, k)
    sizes = [base + 1 if f < extra else base for f in range(k)]
    sorted_assignments = np.repeat(np.arange(k), sizes)
    assignments = np.empty(n, dtype=int)
    assignments[perm] = sorted_assignments
    return FoldPlan(k=k, assignments=assignments)


def minmax_normalize(dataset: Dataset) -> Dataset:
    """Scale each feature to [0, 1]; constant columns map to 0."""
    X = dataset.features
    lo = X.min(axis=0)
    span = X.max(axis=0) - lo
    span_safe = np.where(span > 0, span, 1.0)
    scaled = np.where(span > 0, (X - lo) / span_safe, 0.0)
    return Dataset(
        scaled, dataset.targets, name=dataset.name, row_ids=dataset.row_ids, seed=dataset.seed
    )
