"""Small dense networks trained with a similarity-coupled batch loss.

The per-pattern losses o_i (binary cross-entropy or squared error) are
coupled through the batch similarity matrix: the training objective is
o'So, which collapses to the usual sum of squared per-pattern losses at
S = I. Classification runs use one full-dataset batch so S is built once;
regression rebuilds S for every minibatch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, STREAM_BATCH, STREAM_INIT, require_binary_targets, stream_rng
from .errors import InputError
from .evaluation import resolve_metric
from .kernels import GramMatrix, build_gram

BCE_CLAMP = 1e-7
DEFAULT_WEIGHT_PENALTY = 1e-4
GAMMA_S_LINE_SEARCH = (1e-5, 1e-4, 1e-3, 1e-2, 1e-1)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    batch_size: int
    step_size: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise InputError("epochs and batch_size must be at least 1")


@dataclass
class MlpModel:
    """Rectifier MLP with a single output unit.

    ``task`` selects the output head: "classify" applies a sigmoid and
    pairs with cross-entropy; "regress" is linear and pairs with squared
    error. Hidden-layer weight matrices carry a squared-magnitude penalty.
    """

    layer_sizes: list
    weights: list
    biases: list
    task: str
    weight_penalty: float = DEFAULT_WEIGHT_PENALTY


def init_mlp(layer_sizes, task, seed, weight_penalty=DEFAULT_WEIGHT_PENALTY) -> MlpModel:
    """Symmetric uniform fan-in initialization, reproducible from seed."""
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 2 or sizes[-1] != 1:
        raise InputError("layer_sizes must end in a single output unit")
    if task not in ("classify", "regress"):
        raise InputError(f"unknown task {task!r}")
    rng = stream_rng(seed, STREAM_INIT)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes, sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(rng.uniform(-bound, bound, size=fan_out))
    return MlpModel(sizes, weights, biases, task, float(weight_penalty))


def _forward_cached(model: MlpModel, X):
    acts = [np.asarray(X, dtype=float)]
    zs = []
    for depth, (W, b) in enumerate(zip(model.weights, model.biases)):
        z = acts[-1] @ W + b
        zs.append(z)
        if depth < len(model.weights) - 1:
            acts.append(np.maximum(z, 0.0))
    z_out = zs[-1][:, 0]
    if model.task == "classify":
        preds = 1.0 / (1.0 + np.exp(-z_out))
    else:
        preds = z_out
    return acts, zs, preds


def forward(model: MlpModel, X) -> np.ndarray:
    return _forward_cached(model, X)[2]


def per_pattern_loss(preds, targets, kind) -> np.ndarray:
    """Vector o of per-pattern losses: bce (targets in {0,1}) or sq."""
    p = np.asarray(preds, dtype=float)
    t = np.asarray(targets, dtype=float)
    if kind == "bce":
        pc = np.clip(p, BCE_CLAMP, 1.0 - BCE_CLAMP)
        return -(t * np.log(pc) + (1.0 - t) * np.log1p(-pc))
    if kind == "sq":
        return (t - p) ** 2
    raise InputError(f"unknown per-pattern loss {kind!r}")


def _coupling(S) -> np.ndarray:
    return S.values if isinstance(S, GramMatrix) else np.asarray(S, dtype=float)


def gql_loss(o, S) -> float:
    o = np.asarray(o, dtype=float)
    return float(o @ (_coupling(S) @ o))


def gql_loss_grad(o, S) -> np.ndarray:
    o = np.asarray(o, dtype=float)
    return 2.0 * (_coupling(S) @ o)


def loss_and_gradients(model: MlpModel, X, targets, S=None):
    """Batch objective and full parameter gradients.

    ``S=None`` means the uncoupled objective sum(o_i^2); otherwise o'So.
    Targets are {0,1} for classification, raw values for regression. The
    returned objective includes the hidden-weight penalty.
    """
    acts, zs, preds = _forward_cached(model, X)
    t = np.asarray(targets, dtype=float)
    kind = "bce" if model.task == "classify" else "sq"
    o = per_pattern_loss(preds, t, kind)
    if S is None:
        data_loss = float(o @ o)
        dl_do = 2.0 * o
    else:
        Sv = _coupling(S)
        data_loss = float(o @ (Sv @ o))
        dl_do = 2.0 * (Sv @ o)
    if model.task == "classify":
        # Clamped patterns contribute zero gradient; elsewhere the sigmoid
        # and the bce slope cancel into preds - t.
        inside = (preds > BCE_CLAMP) & (preds < 1.0 - BCE_CLAMP)
        do_dz = np.where(inside, preds - t, 0.0)
    else:
        do_dz = 2.0 * (zs[-1][:, 0] - t)
    delta = (dl_do * do_dz)[:, None]
    grads_w = [None] * len(model.weights)
    grads_b = [None] * len(model.biases)
    objective = data_loss
    for depth in range(len(model.weights) - 1, -1, -1):
        grads_w[depth] = acts[depth].T @ delta
        grads_b[depth] = delta.sum(axis=0)
        if depth < len(model.weights) - 1:
            penalty_w = model.weight_penalty * float(np.sum(model.weights[depth] ** 2))
            objective += penalty_w
            grads_w[depth] += 2.0 * model.weight_penalty * model.weights[depth]
        if depth > 0:
            delta = (delta @ model.weights[depth].T) * (zs[depth - 1] > 0.0)
    return objective, grads_w, grads_b


class Adam:
    """Adaptive-moment optimizer over a flat list of parameter arrays."""

    def __init__(self, params, step_size=1e-3, beta1=0.9, beta2=0.999, epsilon=1e-8):
        self.params = params
        self.step_size = step_size
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads):
        self.t += 1
        correction1 = 1.0 - self.beta1 ** self.t
        correction2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.step_size * (m / correction1) / (
                np.sqrt(v / correction2) + self.epsilon
            )


@dataclass
class TrainResult:
    model: MlpModel
    trace: tuple
    val_metrics: tuple | None
    diverged: bool = False


def train(
    model: MlpModel,
    data: Dataset,
    cfg: TrainConfig,
    loss="standard",
    gamma_S=None,
    val: Dataset | None = None,
    metric=None,
) -> TrainResult:
    """Train in place; returns the model with its per-epoch loss trace.

    ``loss="gql"`` needs ``gamma_S``. Classification with the coupled
    loss always runs one full-dataset batch (the similarity matrix is
    built once); the regression variant rebuilds it per minibatch. A
    non-finite epoch loss aborts training, keeping the trace up to the
    last completed epoch.
    """
    if loss not in ("standard", "gql"):
        raise InputError(f"unknown loss {loss!r}")
    if loss == "gql" and not (gamma_S and gamma_S > 0):
        raise InputError("the coupled loss needs gamma_S > 0")
    X = data.features
    if model.task == "classify":
        targets = (require_binary_targets(data.targets) + 1.0) / 2.0
    else:
        targets = np.asarray(data.targets, dtype=float)
    n = X.shape[0]
    full_batch = model.task == "classify" and loss == "gql"
    batch_size = n if full_batch else min(cfg.batch_size, n)
    S_full = build_gram(X, gamma_S) if full_batch else None
    params = model.weights + model.biases
    opt = Adam(params, cfg.step_size, cfg.beta1, cfg.beta2, cfg.epsilon)
    batch_rng = stream_rng(cfg.seed, STREAM_BATCH)
    metric_obj = resolve_metric(metric) if metric is not None else None
    trace, val_metrics = [], []
    n_w = len(model.weights)
    for _ in range(cfg.epochs):
        order = batch_rng.permutation(n) if batch_size < n else np.arange(n)
        epoch_loss = 0.0
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            if full_batch:
                S_batch = S_full
            elif loss == "gql":
                S_batch = build_gram(X[idx], gamma_S)
            else:
                S_batch = None
            objective, gw, gb = loss_and_gradients(model, X[idx], targets[idx], S_batch)
            if not np.isfinite(objective):
                return TrainResult(
                    model,
                    tuple(trace),
                    tuple(val_metrics) if metric_obj else None,
                    diverged=True,
                )
            opt.step(gw + gb)
            epoch_loss += objective
        trace.append(float(epoch_loss))
        if metric_obj is not None and val is not None:
            val_metrics.append(evaluate(model, val, metric_obj.name))
    return TrainResult(model, tuple(trace), tuple(val_metrics) if metric_obj else None)


def predict_labels(model: MlpModel, X) -> np.ndarray:
    """Hard {-1,+1} labels from a classification network."""
    return np.where(forward(model, X) >= 0.5, 1.0, -1.0)


def evaluate(model: MlpModel, data: Dataset, metric) -> float:
    m = resolve_metric(metric if isinstance(metric, str) else metric.name)
    if m.name == "f1":
        return float(m.fn(predict_labels(model, data.features), data.targets))
    return float(m.fn(forward(model, data.features), data.targets))


# ---------------------------------------------------------------------------
# persistence

def checkpoint_payload(model: MlpModel) -> dict:
    return {
        "layer_sizes": [int(s) for s in model.layer_sizes],
        "task": model.task,
        "weight_penalty": float(model.weight_penalty),
        "weights": [[[float(v) for v in row] for row in W] for W in model.weights],
        "biases": [[float(v) for v in b] for b in model.biases],
    }


def model_from_payload(payload) -> MlpModel:
    return MlpModel(
        layer_sizes=[int(s) for s in payload["layer_sizes"]],
        weights=[np.asarray(W, dtype=float) for W in payload["weights"]],
        biases=[np.asarray(b, dtype=float) for b in payload["biases"]],
        task=payload["task"],
        weight_penalty=float(payload["weight_penalty"]),
    )


def save_checkpoint(model: MlpModel, path) -> None:
    import json

    with open(path, "w") as fh:
        json.dump(checkpoint_payload(model), fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_checkpoint(path) -> MlpModel:
    import json

    with open(path) as fh:
        payload = json.load(fh)
    return model_from_payload(payload)


def write_trace_csv(path, trace, val_metrics=None) -> None:
    with open(path, "w") as fh:
        fh.write("epoch,loss,val_metric\n")
        for epoch, value in enumerate(trace):
            val = ""
            if val_metrics is not None and epoch < len(val_metrics):
                val = repr(float(val_metrics[epoch]))
            fh.write(f"{epoch},{repr(float(value))},{val}\n")
