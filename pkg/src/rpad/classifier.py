"""Pseudo-label classifier: FC(q,2q)-FC(2q,4q)-FC(4q,M) with batch norm.

Every layer is ``affine -> batch norm -> activation``. The two hidden layers
use LeakyReLU; the third layer's batch-norm output is the logit vector.
Gradients are written out by hand and checked against finite differences in
the test-suite.

Parameters live in ``model.params`` under the names ``W{l}``, ``b{l}``,
``gamma{l}``, ``beta{l}`` for ``l`` in 0..2; running statistics live in
``model.buffers`` as ``running_mean{l}`` / ``running_var{l}``. Weight matrices
are stored ``(fan_in, fan_out)`` so a layer computes ``x @ W + b``.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from rpad.errors import (
    ConfigurationError,
    DataError,
    SchemaVersionError,
    TrainingDivergedError,
)
from rpad.projection import PseudoLabeledSet
from rpad.tensor import Rng, child_seed

logger = logging.getLogger(__name__)

N_LAYERS = 3
CHECKPOINT_VERSION = 1


@dataclass
class ClassifierModel:
    params: dict[str, np.ndarray]
    buffers: dict[str, np.ndarray]
    negative_slope: float = 0.01
    momentum: float = 0.1
    bn_eps: float = 1e-5
    training: bool = True

    @property
    def input_dim(self) -> int:
        return self.params["W0"].shape[0]

    @property
    def m_count(self) -> int:
        return self.params[f"W{N_LAYERS - 1}"].shape[1]

    def layer_shapes(self) -> list[tuple[int, int]]:
        return [self.params[f"W{l}"].shape for l in range(N_LAYERS)]

    def eval(self) -> "ClassifierModel":
        self.training = False
        return self

    def train(self) -> "ClassifierModel":
        self.training = True
        return self

    def copy(self) -> "ClassifierModel":
        return ClassifierModel(
            {k: v.copy() for k, v in self.params.items()},
            {k: v.copy() for k, v in self.buffers.items()},
            self.negative_slope,
            self.momentum,
            self.bn_eps,
            self.training,
        )


def layer_sizes(q: int, m_count: int) -> list[int]:
    return [q, 2 * q, 4 * q, m_count]


def init_model(rng: Rng, q: int, m_count: int, negative_slope: float = 0.01) -> ClassifierModel:
    """He-initialized weights (std ``sqrt(2/fan_in)``), zero biases, identity batch norm."""
    if q < 1 or m_count < 1:
        raise ConfigurationError(f"q and m_count must be >= 1, got q={q}, M={m_count}")
    sizes = layer_sizes(q, m_count)
    params: dict[str, np.ndarray] = {}
    buffers: dict[str, np.ndarray] = {}
    for l in range(N_LAYERS):
        fan_in, fan_out = sizes[l], sizes[l + 1]
        w = rng.standard_normal(fan_in * fan_out).reshape(fan_in, fan_out)
        params[f"W{l}"] = w * np.sqrt(2.0 / fan_in)
        params[f"b{l}"] = np.zeros(fan_out)
        params[f"gamma{l}"] = np.ones(fan_out)
        params[f"beta{l}"] = np.zeros(fan_out)
        buffers[f"running_mean{l}"] = np.zeros(fan_out)
        buffers[f"running_var{l}"] = np.ones(fan_out)
    return ClassifierModel(params, buffers, negative_slope=negative_slope)


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _check_batch(model: ClassifierModel, batch, mode: str) -> np.ndarray:
    x = np.ascontiguousarray(batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.input_dim:
        raise ConfigurationError(f"batch shape {x.shape} does not match input dim {model.input_dim}")
    if not np.all(np.isfinite(x)):
        raise DataError("batch contains non-finite values")
    if mode not in ("train", "eval"):
        raise ConfigurationError(f"mode must be 'train' or 'eval', got {mode!r}")
    if mode == "train" and x.shape[0] < 2:
        raise ConfigurationError("train-mode batch norm needs at least 2 rows")
    return x


def forward(model: ClassifierModel, batch, mode: str | None = None, update_stats: bool = True):
    """Compute logits for ``batch``.

    ``mode`` defaults to the model's own flag. In train mode batch statistics
    normalize each layer and, when ``update_stats`` is set, running statistics
    are updated (momentum blend, unbiased variance). Eval mode never mutates
    the model.

    Returns ``(logits, cache)``; ``cache`` feeds :func:`backward`.
    """
    if mode is None:
        mode = "train" if model.training else "eval"
    x = _check_batch(model, batch, mode)
    n = x.shape[0]
    slope = model.negative_slope
    layers = []
    h = x
    for l in range(N_LAYERS):
        p = model.params
        z = h @ p[f"W{l}"] + p[f"b{l}"]
        if mode == "train":
            mean = z.mean(axis=0)
            var = z.var(axis=0)
            if update_stats:
                mom = model.momentum
                rm, rv = f"running_mean{l}", f"running_var{l}"
                model.buffers[rm] = (1.0 - mom) * model.buffers[rm] + mom * mean
                model.buffers[rv] = (1.0 - mom) * model.buffers[rv] + mom * var * (n / (n - 1))
        else:
            mean = model.buffers[f"running_mean{l}"]
            var = model.buffers[f"running_var{l}"]
        inv_std = 1.0 / np.sqrt(var + model.bn_eps)
        z_hat = (z - mean) * inv_std
        y = p[f"gamma{l}"] * z_hat + p[f"beta{l}"]
        if l < N_LAYERS - 1:
            out = np.where(y > 0, y, slope * y)
        else:
            out = y
        layers.append((h, z_hat, inv_std, y))
        h = out
    return h, {"mode": mode, "layers": layers}


def backward(model: ClassifierModel, cache, dlogits: np.ndarray):
    """Backpropagate ``dlogits`` through the network.

    Returns ``(grads, dinput)`` with ``grads`` keyed like ``model.params``.
    """
    train = cache["mode"] == "train"
    grads: dict[str, np.ndarray] = {}
    d = dlogits
    for l in reversed(range(N_LAYERS)):
        h, z_hat, inv_std, y = cache["layers"][l]
        if l < N_LAYERS - 1:
            d = d * np.where(y > 0, 1.0, model.negative_slope)
        grads[f"gamma{l}"] = (d * z_hat).sum(axis=0)
        grads[f"beta{l}"] = d.sum(axis=0)
        dz_hat = d * model.params[f"gamma{l}"]
        if train:
            n = dz_hat.shape[0]
            dz = (inv_std / n) * (
                n * dz_hat - dz_hat.sum(axis=0) - z_hat * (dz_hat * z_hat).sum(axis=0)
            )
        else:
            dz = dz_hat * inv_std
        grads[f"W{l}"] = h.T @ dz
        grads[f"b{l}"] = dz.sum(axis=0)
        d = dz @ model.params[f"W{l}"].T
    return grads, d


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy and its gradient with respect to the logits."""
    n = logits.shape[0]
    logp = log_softmax(logits)
    rows = np.arange(n)
    loss = float(-logp[rows, labels].mean())
    dlogits = np.exp(logp)
    dlogits[rows, labels] -= 1.0
    return loss, dlogits / n


def loss_and_grad(model: ClassifierModel, batch, labels, mode: str = "train", update_stats: bool = False):
    """Mean cross-entropy, parameter gradients and input gradient for one batch."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.ndim != 1 or labels.size and (labels.min() < 0 or labels.max() >= model.m_count):
        raise ConfigurationError(f"labels must lie in [0, {model.m_count})")
    logits, cache = forward(model, batch, mode, update_stats=update_stats)
    if labels.shape[0] != logits.shape[0]:
        raise ConfigurationError("labels and batch have different lengths")
    loss, dlogits = cross_entropy(logits, labels)
    grads, dx = backward(model, cache, dlogits)
    return loss, grads, dx


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params: dict[str, np.ndarray], **kwargs) -> "AdamState":
        return cls(
            {k: np.zeros_like(p) for k, p in params.items()},
            {k: np.zeros_like(p) for k, p in params.items()},
            **kwargs,
        )


def is_decayed(name: str) -> bool:
    """Weight decay applies to weight matrices only."""
    return name.startswith("W")


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState,
              lr: float, weight_decay: float = 0.0) -> None:
    """One Adam update in place, with coupled L2 decay on weight matrices."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ConfigurationError(f"gradient for {name} has shape {g.shape}, expected {p.shape}")
        if weight_decay and is_decayed(name):
            g = g + weight_decay * p
        state.m[name] = b1 * state.m[name] + (1.0 - b1) * g
        state.v[name] = b2 * state.v[name] + (1.0 - b2) * g * g
        m_hat = state.m[name] / c1
        v_hat = state.v[name] / c2
        p -= lr * m_hat / (np.sqrt(v_hat) + state.eps)


@dataclass
class TrainConfig:
    accuracy_threshold: float = 0.6
    lr: float = 1e-3
    weight_decay: float = 5e-4
    batch_size: int = 128
    max_epochs: int = 50
    shuffle_seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.accuracy_threshold < 1.0:
            raise ConfigurationError(f"accuracy threshold must lie in (0, 1), got {self.accuracy_threshold}")
        if not self.lr > 0:
            raise ConfigurationError(f"learning rate must be > 0, got {self.lr}")
        if self.weight_decay < 0:
            raise ConfigurationError(f"weight decay must be >= 0, got {self.weight_decay}")
        if self.batch_size < 2:
            raise ConfigurationError("batch size must be >= 2 (batch norm)")
        if self.max_epochs < 1:
            raise ConfigurationError("max_epochs must be >= 1")


@dataclass
class TrainResult:
    model: ClassifierModel
    converged: bool
    steps: int
    epochs: int
    final_batch_accuracy: float
    final_loss: float
    losses: list[float] = field(default_factory=list, repr=False)


def batch_accuracy(logits: np.ndarray, labels: np.ndarray) -> float:
    return float(np.mean(np.argmax(logits, axis=1) == labels))


def train(dataset: PseudoLabeledSet, config: TrainConfig, model: ClassifierModel) -> TrainResult:
    """Adam on shuffled mini-batches until one batch reaches the accuracy threshold.

    The batch accuracy is read off the logits of the forward pass that produced
    the step's gradient, right after the optimizer step; training stops with no
    further updates the first time it reaches ``config.accuracy_threshold``.
    Epoch ``e`` is shuffled with ``child_seed(config.shuffle_seed, e)``. A
    trailing batch of one row is skipped. The returned model is in eval mode.
    """
    x_all, y_all = dataset.features, dataset.labels
    n = x_all.shape[0]
    if n < 2:
        raise ConfigurationError("training set needs at least 2 rows")
    if x_all.shape[1] != model.input_dim or dataset.m_count != model.m_count:
        raise ConfigurationError("dataset does not match model dimensions")
    bs = min(config.batch_size, n)
    state = AdamState.zeros_like(model.params)
    model.train()
    steps = 0
    loss = acc = float("nan")
    losses: list[float] = []
    for epoch in range(config.max_epochs):
        order = Rng(child_seed(config.shuffle_seed, epoch)).permutation(n)
        for start in range(0, n, bs):
            idx = order[start : start + bs]
            if idx.size < 2:
                continue
            yb = y_all[idx]
            logits, cache = forward(model, x_all[idx], "train")
            loss, dlogits = cross_entropy(logits, yb)
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss at step {steps} (epoch {epoch}); try a smaller learning rate"
                )
            grads, _ = backward(model, cache, dlogits)
            adam_step(model.params, grads, state, config.lr, config.weight_decay)
            steps += 1
            losses.append(loss)
            acc = batch_accuracy(logits, yb)
            if acc >= config.accuracy_threshold:
                logger.debug("accuracy %.3f reached after %d steps", acc, steps)
                return TrainResult(model.eval(), True, steps, epoch + 1, acc, loss, losses)
    logger.warning("accuracy threshold %.3f not reached in %d epochs", config.accuracy_threshold, config.max_epochs)
    return TrainResult(model.eval(), False, steps, config.max_epochs, acc, loss, losses)


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def save_model(path, model: ClassifierModel, config: dict | None = None) -> None:
    """Write an ``.npz`` checkpoint holding all parameters, buffers and metadata."""
    meta = {
        "checkpoint_version": CHECKPOINT_VERSION,
        "negative_slope": model.negative_slope,
        "momentum": model.momentum,
        "bn_eps": model.bn_eps,
        "training": model.training,
        "config_hash": config_hash(config or {}),
    }
    arrays = {f"param/{k}": v for k, v in model.params.items()}
    arrays.update({f"buffer/{k}": v for k, v in model.buffers.items()})
    with open(path, "wb") as fh:
        np.savez(fh, __meta__=np.array(json.dumps(meta, sort_keys=True)), **arrays)


def load_model(path) -> tuple[ClassifierModel, dict]:
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["__meta__"]))
        if meta.get("checkpoint_version") != CHECKPOINT_VERSION:
            raise SchemaVersionError(
                f"checkpoint version {meta.get('checkpoint_version')} != {CHECKPOINT_VERSION}"
            )
        params = {k.split("/", 1)[1]: data[k].copy() for k in data.files if k.startswith("param/")}
        buffers = {k.split("/", 1)[1]: data[k].copy() for k in data.files if k.startswith("buffer/")}
    model = ClassifierModel(
        params, buffers, meta["negative_slope"], meta["momentum"], meta["bn_eps"], meta["training"]
    )
    return model, meta
