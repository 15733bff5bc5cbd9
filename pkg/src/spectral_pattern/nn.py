"""Graph convolutional network over per-group spatial graphs.

Architecture: a stack of polynomial graph-convolution layers (each output
channel is a learned polynomial in the Laplacian applied across all input
channels, plus bias, through ReLU), one global pooling step that collapses
the variable vertex dimension, dropout on the pooled embedding, and a dense
softmax classifier.  Backpropagation is exact and hand-derived; training
uses mini-batch Adam or momentum SGD with early stopping on validation
loss.  Everything is deterministic for a fixed seed when single-threaded.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    CheckpointError,
    DimensionMismatch,
    DivergedLoss,
    EmptySplit,
    InvalidLabel,
    ShapeMismatch,
    StateError,
)
from .graph import GraphConfig, LaplacianMatrix, SpatialGraph, laplacian
from .spectral import power_stack

POOLS = ("mean", "max")
OPTIMIZERS = ("adam", "sgd")
_PROB_FLOOR = 1e-12
CHECKPOINT_VERSION = 1


# ---------------------------------------------------------------------------
# Parameters


class GraphConvLayer:
    """One spectral convolution layer.

    theta has shape (K, c_in, c_out): coefficient of L^k sending input
    channel c to output channel o sits at theta[k, c, o].  bias has shape
    (c_out,).
    """

    def __init__(self, theta, bias):
        self.theta = np.asarray(theta, dtype=float)
        self.bias = np.asarray(bias, dtype=float).reshape(-1)
        if self.theta.ndim != 3:
            raise ValueError(f"theta must be (K, c_in, c_out), got {self.theta.shape}")
        K, c_in, c_out = self.theta.shape
        if K < 1 or c_in < 1 or c_out < 1:
            raise ValueError(f"degenerate layer shape {self.theta.shape}")
        if self.bias.shape != (c_out,):
            raise ValueError(f"bias must be ({c_out},), got {self.bias.shape}")
        if not (np.all(np.isfinite(self.theta)) and np.all(np.isfinite(self.bias))):
            raise ValueError("layer parameters must be finite")

    @property
    def order(self) -> int:
        return self.theta.shape[0]

    @property
    def c_in(self) -> int:
        return self.theta.shape[1]

    @property
    def c_out(self) -> int:
        return self.theta.shape[2]


class DenseLayer:
    def __init__(self, weights, bias):
        self.weights = np.asarray(weights, dtype=float)
        self.bias = np.asarray(bias, dtype=float).reshape(-1)
        if self.weights.ndim != 2:
            raise ValueError(f"weights must be (c_in, c_classes), got {self.weights.shape}")
        if self.bias.shape != (self.weights.shape[1],):
            raise ValueError("bias length must equal the class count")
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias))):
            raise ValueError("dense parameters must be finite")

    @property
    def c_in(self) -> int:
        return self.weights.shape[0]

    @property
    def c_classes(self) -> int:
        return self.weights.shape[1]


@dataclass
class _ForwardCache:
    """Intermediates of one retained forward pass, consumed by backward."""

    L: np.ndarray
    X: np.ndarray
    powers: list  # per layer: (K, n, c_in)
    pre_acts: list  # per layer: (n, c_out), before ReLU
    last_act: np.ndarray  # output of the final conv layer
    pooled: np.ndarray
    drop_mask: np.ndarray | None  # None when dropout was off
    dropped: np.ndarray  # dense input
    probs: np.ndarray


class GcnnModel:
    """Conv stack + pooling + dropout + dense softmax."""

    def __init__(self, conv_layers, dense, pool="mean", dropout_rate=0.5, l2_lambda=5e-4):
        self.conv_layers = list(conv_layers)
        self.dense = dense
        self.pool = pool
        self.dropout_rate = float(dropout_rate)
        self.l2_lambda = float(l2_lambda)
        self._cache: _ForwardCache | None = None
        if not self.conv_layers:
            raise ValueError("model needs at least one conv layer")
        if pool not in POOLS:
            raise ValueError(f"pool must be one of {POOLS}, got {pool!r}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")
        if self.l2_lambda < 0:
            raise ValueError("l2_lambda must be nonnegative")
        for a, b in zip(self.conv_layers, self.conv_layers[1:]):
            if a.c_out != b.c_in:
                raise ValueError(
                    f"channel chain broken: layer emits {a.c_out}, next expects {b.c_in}"
                )
        if dense.c_in != self.conv_layers[-1].c_out:
            raise ValueError(
                f"dense expects {dense.c_in} channels, last conv emits {self.conv_layers[-1].c_out}"
            )

    @property
    def feature_dim(self) -> int:
        return self.conv_layers[0].c_in

    @property
    def n_classes(self) -> int:
        return self.dense.c_classes

    def parameters(self) -> list[np.ndarray]:
        """Live references: [theta_0, bias_0, ..., dense weights, dense bias]."""
        out = []
        for layer in self.conv_layers:
            out.append(layer.theta)
            out.append(layer.bias)
        out.append(self.dense.weights)
        out.append(self.dense.bias)
        return out

    def set_parameters(self, values: Sequence[np.ndarray]) -> None:
        current = self.parameters()
        if len(values) != len(current):
            raise ShapeMismatch(f"expected {len(current)} arrays, got {len(values)}")
        for have, new in zip(current, values):
            new = np.asarray(new, dtype=float)
            if new.shape != have.shape:
                raise ShapeMismatch(f"parameter shape {new.shape} != {have.shape}")
        k = 0
        for layer in self.conv_layers:
            layer.theta = np.array(values[k], dtype=float)
            layer.bias = np.array(values[k + 1], dtype=float)
            k += 2
        self.dense.weights = np.array(values[k], dtype=float)
        self.dense.bias = np.array(values[k + 1], dtype=float)

    def penalty_weight_squares(self) -> float:
        """Sum of squared conv thetas and dense weights; biases excluded."""
        total = sum(float(np.sum(l.theta**2)) for l in self.conv_layers)
        return total + float(np.sum(self.dense.weights**2))

    def forward(self, L, X, training=False, rng=None, retain=False) -> np.ndarray:
        """Class probabilities for one graph; optionally retains intermediates."""
        Lv = L.values if isinstance(L, LaplacianMatrix) else np.asarray(L, dtype=float)
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.feature_dim:
            raise DimensionMismatch(
                f"graph features have {X.shape[1]} channels, model expects {self.feature_dim}"
            )
        if X.shape[0] != Lv.shape[0]:
            raise DimensionMismatch("feature rows must match the Laplacian order")

        powers, pre_acts = [], []
        act = X
        for layer in self.conv_layers:
            P = power_stack(Lv, act, layer.order)
            Z = np.tensordot(P, layer.theta, axes=([0, 2], [0, 1])) + layer.bias
            powers.append(P)
            pre_acts.append(Z)
            act = np.maximum(Z, 0.0)

        pooled = global_mean_pool(act) if self.pool == "mean" else act.max(axis=0)

        mask = None
        dropped = pooled
        if training and self.dropout_rate > 0.0:
            if rng is None:
                raise ValueError("training-mode forward with dropout needs an rng")
            keep = rng.random(pooled.shape[0]) >= self.dropout_rate
            mask = keep.astype(float) / (1.0 - self.dropout_rate)
            dropped = pooled * mask

        probs = dense_softmax_forward(self.dense, dropped)
        if retain:
            self._cache = _ForwardCache(
                L=Lv,
                X=X,
                powers=powers,
                pre_acts=pre_acts,
                last_act=act,
                pooled=pooled,
                drop_mask=mask,
                dropped=dropped,
                probs=probs,
            )
        return probs


# ---------------------------------------------------------------------------
# Forward pieces


def conv_layer_forward(layer: GraphConvLayer, L, X, activation="relu") -> np.ndarray:
    """Y[:, o] = act( sum_c sum_k theta[k, c, o] L^k X[:, c] + bias[o] )."""
    if activation not in ("relu", "identity"):
        raise ValueError(f"unknown activation {activation!r}")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != layer.c_in:
        raise DimensionMismatch(f"signal has {X.shape[1]} channels, layer expects {layer.c_in}")
    P = power_stack(L, X, layer.order)
    Z = np.tensordot(P, layer.theta, axes=([0, 2], [0, 1])) + layer.bias
    return np.maximum(Z, 0.0) if activation == "relu" else Z


def global_mean_pool(X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] < 1:
        raise ValueError("cannot pool an empty signal")
    return X.mean(axis=0)


def dense_softmax_forward(layer: DenseLayer, h) -> np.ndarray:
    h = np.asarray(h, dtype=float).reshape(-1)
    if h.shape[0] != layer.c_in:
        raise DimensionMismatch(f"embedding has {h.shape[0]} entries, dense expects {layer.c_in}")
    logits = layer.weights.T @ h + layer.bias
    shifted = logits - np.max(logits)
    e = np.exp(shifted)
    return e / e.sum()


def cross_entropy_loss(probs, label, model: GcnnModel) -> float:
    probs = np.asarray(probs, dtype=float).reshape(-1)
    label = int(label)
    if not 0 <= label < probs.shape[0]:
        raise InvalidLabel(f"label {label} outside [0, {probs.shape[0]})")
    p = min(max(float(probs[label]), _PROB_FLOOR), 1.0)
    return -math.log(p) + model.l2_lambda * model.penalty_weight_squares()


def dropout_apply(h, rate, rng, training) -> np.ndarray:
    """Inverted dropout; identity when not training or rate is 0."""
    h = np.asarray(h, dtype=float)
    if not 0.0 <= rate < 1.0:
        raise ValueError("dropout rate must be in [0, 1)")
    if not training or rate == 0.0:
        return h.copy()
    keep = rng.random(h.shape) >= rate
    return h * keep / (1.0 - rate)


# ---------------------------------------------------------------------------
# Backward


def backward(model: GcnnModel, L, X, label) -> list[np.ndarray]:
    """Exact gradients of cross_entropy_loss, in parameters() order.

    Requires the intermediates of a forward(..., retain=True) on the same
    (L, X); raises StateError otherwise.
    """
    cache = model._cache
    Lv = L.values if isinstance(L, LaplacianMatrix) else np.asarray(L, dtype=float)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if cache is None:
        raise StateError("backward needs a preceding forward pass with retain=True")
    if cache.L.shape != Lv.shape or not np.array_equal(cache.L, Lv) or not np.array_equal(cache.X, X):
        raise StateError("retained forward intermediates do not match these inputs")
    label = int(label)
    if not 0 <= label < model.n_classes:
        raise InvalidLabel(f"label {label} outside [0, {model.n_classes})")

    n = X.shape[0]
    probs = cache.probs
    dlogits = probs.copy()
    dlogits[label] -= 1.0

    dense = model.dense
    d_w = np.outer(cache.dropped, dlogits) + 2.0 * model.l2_lambda * dense.weights
    d_b = dlogits.copy()
    dh = dense.weights @ dlogits
    if cache.drop_mask is not None:
        dh = dh * cache.drop_mask

    if model.pool == "mean":
        dY = np.tile(dh / n, (n, 1))
    else:
        dY = np.zeros_like(cache.last_act)
        dY[np.argmax(cache.last_act, axis=0), np.arange(dY.shape[1])] = dh

    grads: list[np.ndarray] = []
    for i in range(len(model.conv_layers) - 1, -1, -1):
        layer = model.conv_layers[i]
        Z = cache.pre_acts[i]
        P = cache.powers[i]
        dZ = dY * (Z > 0.0)
        d_theta = np.tensordot(P, dZ, axes=([1], [0])) + 2.0 * model.l2_lambda * layer.theta
        d_bias = dZ.sum(axis=0)
        grads.append(d_bias)
        grads.append(d_theta)
        if i > 0:
            # dX = sum_k L^k (dZ theta_k^T), Horner form; valid since L is symmetric
            K = layer.order
            acc = dZ @ layer.theta[K - 1].T
            for k in range(K - 2, -1, -1):
                acc = Lv @ acc + dZ @ layer.theta[k].T
            dY = acc

    grads.reverse()
    grads.append(d_w)
    grads.append(d_b)
    return grads


# ---------------------------------------------------------------------------
# Optimizers


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 200
    batch_size: int = 32
    seed: int = 0
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    momentum: float = 0.9
    early_stop_patience: int = 20

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("adam betas must be in (0, 1)")
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")
        if self.early_stop_patience < 1:
            raise ValueError("early_stop_patience must be at least 1")


def optimizer_init(params: Sequence[np.ndarray], config: TrainConfig) -> dict:
    zeros = [np.zeros_like(p) for p in params]
    if config.optimizer == "adam":
        return {"t": 0, "m": zeros, "v": [np.zeros_like(p) for p in params]}
    return {"velocity": zeros}


def optimizer_step(state: dict, params, grads, config: TrainConfig):
    """One update; returns (new_params, new_state) without mutating inputs."""
    params = list(params)
    grads = list(grads)
    if len(params) != len(grads):
        raise ShapeMismatch(f"{len(params)} parameters vs {len(grads)} gradients")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ShapeMismatch(f"parameter {p.shape} vs gradient {g.shape}")
    lr = config.learning_rate
    if config.optimizer == "adam":
        t = state["t"] + 1
        new_m, new_v, new_p = [], [], []
        for p, g, m, v in zip(params, grads, state["m"], state["v"]):
            m = config.beta1 * m + (1.0 - config.beta1) * g
            v = config.beta2 * v + (1.0 - config.beta2) * (g * g)
            m_hat = m / (1.0 - config.beta1**t)
            v_hat = v / (1.0 - config.beta2**t)
            new_p.append(p - lr * m_hat / (np.sqrt(v_hat) + config.eps))
            new_m.append(m)
            new_v.append(v)
        return new_p, {"t": t, "m": new_m, "v": new_v}
    new_vel, new_p = [], []
    for p, g, vel in zip(params, grads, state["velocity"]):
        vel = config.momentum * vel - lr * g
        new_p.append(p + vel)
        new_vel.append(vel)
    return new_p, {"velocity": new_vel}


# ---------------------------------------------------------------------------
# Training and evaluation


@dataclass(frozen=True, eq=False)
class GraphSample:
    """One group ready for the network: scaled Laplacian, standardized
    features, and an optional integer label (None for inference)."""

    laplacian: np.ndarray
    features: np.ndarray
    label: int | None = None
    sample_id: str | None = None


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    train_accuracy: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    val_accuracy: list[float] = field(default_factory=list)
    best_epoch: int = -1

    def __len__(self) -> int:
        return len(self.train_loss)


def build_model(
    feature_dim: int,
    conv_channels: Sequence[int] = (24, 24, 24, 24),
    order: int = 3,
    n_classes: int = 2,
    pool: str = "mean",
    dropout_rate: float = 0.5,
    l2_lambda: float = 5e-4,
    seed: int = 0,
) -> GcnnModel:
    """Fresh model with seeded uniform initialization.

    Conv thetas are uniform in +-sqrt(6 / (K*c_in + K*c_out)), dense weights
    uniform in +-sqrt(6 / (c_in + c_classes)); biases start at zero.
    """
    rng = np.random.default_rng(seed)
    layers = []
    c_prev = int(feature_dim)
    for c_out in conv_channels:
        bound = math.sqrt(6.0 / (order * c_prev + order * c_out))
        theta = rng.uniform(-bound, bound, size=(order, c_prev, c_out))
        layers.append(GraphConvLayer(theta=theta, bias=np.zeros(c_out)))
        c_prev = int(c_out)
    bound = math.sqrt(6.0 / (c_prev + n_classes))
    dense = DenseLayer(
        weights=rng.uniform(-bound, bound, size=(c_prev, n_classes)),
        bias=np.zeros(n_classes),
    )
    return GcnnModel(layers, dense, pool=pool, dropout_rate=dropout_rate, l2_lambda=l2_lambda)


def _split_metrics(model: GcnnModel, samples) -> tuple[float, float]:
    loss = 0.0
    hits = 0
    for s in samples:
        probs = model.forward(s.laplacian, s.features, training=False)
        loss += cross_entropy_loss(probs, s.label, model)
        hits += int(int(np.argmax(probs)) == s.label)
    return loss / len(samples), hits / len(samples)


def train(model: GcnnModel, splits: Mapping[str, Sequence[GraphSample]], config: TrainConfig | None = None):
    """Mini-batch training with early stopping on validation loss.

    Returns (model, TrainHistory); the model carries the parameters of the
    best validation epoch, not the last one.
    """
    if config is None:
        config = TrainConfig()
    train_set = list(splits.get("train", ()))
    val_set = list(splits.get("val", ()))
    if not train_set:
        raise EmptySplit("training split is empty")
    if not val_set:
        raise EmptySplit("validation split is empty")

    rng = np.random.default_rng(config.seed)
    params = [p.copy() for p in model.parameters()]
    state = optimizer_init(params, config)
    history = TrainHistory()
    best_loss = math.inf
    best_params = [p.copy() for p in params]
    stale = 0

    for epoch in range(config.epochs):
        order = rng.permutation(len(train_set))
        # overflow warnings are silenced: a diverging run produces inf/nan
        # values that the finite check below turns into DivergedLoss
        with np.errstate(over="ignore", invalid="ignore"):
            for start in range(0, len(order), config.batch_size):
                batch = order[start : start + config.batch_size]
                acc_grads = None
                for idx in batch:
                    s = train_set[int(idx)]
                    model.forward(s.laplacian, s.features, training=True, rng=rng, retain=True)
                    g = backward(model, s.laplacian, s.features, s.label)
                    if acc_grads is None:
                        acc_grads = g
                    else:
                        for a, b in zip(acc_grads, g):
                            a += b
                grads = [g / len(batch) for g in acc_grads]
                params, state = optimizer_step(state, params, grads, config)
                model.set_parameters(params)
                params = model.parameters()

            tr_loss, tr_acc = _split_metrics(model, train_set)
            va_loss, va_acc = _split_metrics(model, val_set)
        if not (math.isfinite(tr_loss) and math.isfinite(va_loss)):
            raise DivergedLoss(
                f"non-finite loss at epoch {epoch + 1} (train {tr_loss}, val {va_loss})"
            )
        history.train_loss.append(tr_loss)
        history.train_accuracy.append(tr_acc)
        history.val_loss.append(va_loss)
        history.val_accuracy.append(va_acc)

        if va_loss < best_loss:
            best_loss = va_loss
            best_params = [p.copy() for p in params]
            history.best_epoch = epoch
            stale = 0
        else:
            stale += 1
            if stale >= config.early_stop_patience:
                break

    model.set_parameters(best_params)
    model._cache = None
    return model, history


def evaluate(model: GcnnModel, samples: Sequence[GraphSample]):
    """(accuracy, confusion matrix); confusion rows are true labels."""
    samples = list(samples)
    if not samples:
        raise EmptySplit("cannot evaluate an empty split")
    c = model.n_classes
    confusion = np.zeros((c, c), dtype=int)
    for s in samples:
        probs = model.forward(s.laplacian, s.features, training=False)
        confusion[int(s.label), int(np.argmax(probs))] += 1
    accuracy = float(np.trace(confusion)) / len(samples)
    return accuracy, confusion


def predict(model: GcnnModel, g: SpatialGraph, config: GraphConfig | None = None):
    """(probabilities, class index) for one graph; dropout is off.

    The graph's feature matrix is used as-is; apply the training-time
    standardizer first when the model was trained on standardized features.
    """
    if config is None:
        config = GraphConfig()
    L = laplacian(g, kind=config.laplacian, scaled=config.scaled)
    probs = model.forward(L, g.features, training=False)
    return probs, int(np.argmax(probs))


# ---------------------------------------------------------------------------
# Checkpoints


def _model_payload(model: GcnnModel) -> dict:
    return {
        "conv_layers": [
            {"theta": l.theta.tolist(), "bias": l.bias.tolist()} for l in model.conv_layers
        ],
        "dense": {"weights": model.dense.weights.tolist(), "bias": model.dense.bias.tolist()},
        "pool": model.pool,
        "dropout_rate": model.dropout_rate,
        "l2_lambda": model.l2_lambda,
    }


def _checksum(payload: dict) -> str:
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def save_checkpoint(path, model: GcnnModel, extra: dict | None = None) -> None:
    """Versioned JSON checkpoint; nested lists are row-major (C order).

    `extra` rides along untouched (standardizer statistics, graph settings);
    it must be JSON-serializable.  A sha256 over the canonical payload guards
    corruption, and nothing time- or path-dependent is stored, so identical
    models produce byte-identical files.
    """
    payload = {"model": _model_payload(model), "extra": extra if extra is not None else {}}
    doc = {
        "version": CHECKPOINT_VERSION,
        "checksum": _checksum(payload),
        "payload": payload,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_checkpoint(path):
    """Returns (model, extra) or raises CheckpointError."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"unreadable checkpoint: {exc}") from exc
    if not isinstance(doc, dict) or "version" not in doc:
        raise CheckpointError("not a checkpoint file")
    if doc["version"] != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {doc['version']!r}")
    payload = doc.get("payload")
    if payload is None or "checksum" not in doc:
        raise CheckpointError("checkpoint missing payload or checksum")
    if _checksum(payload) != doc["checksum"]:
        raise CheckpointError("checksum mismatch: checkpoint is corrupt")
    try:
        m = payload["model"]
        layers = [
            GraphConvLayer(theta=np.array(l["theta"]), bias=np.array(l["bias"]))
            for l in m["conv_layers"]
        ]
        dense = DenseLayer(
            weights=np.array(m["dense"]["weights"]), bias=np.array(m["dense"]["bias"])
        )
        model = GcnnModel(
            layers,
            dense,
            pool=m["pool"],
            dropout_rate=m["dropout_rate"],
            l2_lambda=m["l2_lambda"],
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"malformed checkpoint payload: {exc}") from exc
    return model, payload.get("extra", {})
