"""Single-hidden-layer binary classifier trained by full-batch gradient descent.

Inputs are column vectors (k x n blocks); the output is
``sigmoid(w_out . tanh(W_in z + b_in) + b_out)``, read as the probability
of the high-risk class.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

PARAM_NAMES = ("weights_in", "bias_in", "weights_out", "bias_out")


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class NetConfig:
    input_dim: int
    hidden_units: int
    learning_rate: float = 0.05
    max_epochs: int = 5000
    patience: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.input_dim < 1 or self.hidden_units < 1:
            raise ValueError("input_dim and hidden_units must be positive")
        if self.hidden_units > self.input_dim:
            raise ValueError(
                f"hidden_units ({self.hidden_units}) must not exceed input_dim ({self.input_dim})"
            )
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.max_epochs < 1 or self.patience < 0:
            raise ValueError("max_epochs must be >= 1 and patience >= 0")


@dataclass(frozen=True)
class NetModel:
    weights_in: np.ndarray
    bias_in: np.ndarray
    weights_out: np.ndarray
    bias_out: float
    config: NetConfig
    # (train_loss, val_loss) per epoch; val_loss is nan without a validation set
    train_log: tuple = field(default=(), compare=False)
    best_epoch: int = 0

    def params(self) -> dict:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def with_params(self, **params) -> "NetModel":
        return replace(self, **params)

    @property
    def n_params(self) -> int:
        return sum(np.size(p) for p in self.params().values())


def init_model(config: NetConfig) -> NetModel:
    rng = np.random.default_rng(config.seed)
    k, h = config.input_dim, config.hidden_units
    w_in = rng.uniform(-1.0, 1.0, size=(h, k)) / math.sqrt(k)
    w_out = rng.uniform(-1.0, 1.0, size=h) / math.sqrt(h)
    return NetModel(w_in, np.zeros(h), w_out, 0.0, config)


def _as_block(model: NetModel, Z) -> np.ndarray:
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    if Z.shape[0] != model.config.input_dim:
        raise ValueError(f"expected {model.config.input_dim} input features, got {Z.shape[0]}")
    return Z


def _sigmoid(a):
    # split by sign to avoid overflow in exp
    out = np.empty_like(a)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    e = np.exp(a[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _forward(model: NetModel, Z):
    hidden = np.tanh(model.weights_in @ Z + model.bias_in[:, None])
    logit = model.weights_out @ hidden + model.bias_out
    return hidden, logit


def predict(model: NetModel, z):
    """Scores in (0, 1); scalar for a vector input, array for a k x n block."""
    Z = _as_block(model, z)
    if not np.all(np.isfinite(Z)):
        raise ValueError("inputs must be finite")
    _, logit = _forward(model, Z)
    p = _sigmoid(logit)
    # keep strictly inside (0, 1) even when the logit saturates
    p = np.clip(p, np.nextafter(0.0, 1.0), np.nextafter(1.0, 0.0))
    return float(p[0]) if np.ndim(z) == 1 else p


def loss(model: NetModel, Z, y) -> float:
    """Mean binary cross-entropy, evaluated from the logit for stability."""
    Z = _as_block(model, Z)
    y = np.asarray(y, dtype=float)
    _, a = _forward(model, Z)
    return float(np.mean(np.logaddexp(0.0, a) - y * a))


def loss_and_grad(model: NetModel, Z, y) -> tuple[float, dict]:
    Z = _as_block(model, Z)
    y = np.asarray(y, dtype=float)
    n = Z.shape[1]
    hidden, a = _forward(model, Z)
    value = float(np.mean(np.logaddexp(0.0, a) - y * a))
    d_a = (_sigmoid(a) - y) / n
    d_hidden = np.outer(model.weights_out, d_a) * (1.0 - hidden**2)
    grads = {
        "weights_in": d_hidden @ Z.T,
        "bias_in": d_hidden.sum(axis=1),
        "weights_out": hidden @ d_a,
        "bias_out": float(d_a.sum()),
    }
    return value, grads


def train(model: NetModel, Z_train, y_train, Z_val=None, y_val=None) -> NetModel:
    """Gradient descent on cross-entropy with early stopping on the validation set.

    Labels are 1 = high-risk, 0 = low-risk. Without validation data the
    loop runs for ``max_epochs`` and returns the final parameters.
    """
    cfg = model.config
    Z_train = _as_block(model, Z_train)
    y_train = np.asarray(y_train, dtype=float)
    if Z_train.shape[1] != y_train.size:
        raise ValueError("Z_train columns and y_train length differ")
    if Z_train.shape[1] < 2 or np.unique(y_train).size < 2:
        raise TrainingError("training set must have at least 2 patients covering both classes")
    has_val = Z_val is not None and y_val is not None and np.size(y_val) > 0
    if has_val:
        Z_val = _as_block(model, Z_val)
        y_val = np.asarray(y_val, dtype=float)

    params = {k: np.array(v, dtype=float) for k, v in model.params().items()}
    params["bias_out"] = float(model.bias_out)
    current = model
    best, best_val, best_epoch, wait = None, math.inf, 0, 0
    log = []
    for epoch in range(1, cfg.max_epochs + 1):
        value, grads = loss_and_grad(current, Z_train, y_train)
        if not math.isfinite(value):
            raise TrainingError(f"non-finite training loss at epoch {epoch}")
        for name in PARAM_NAMES:
            params[name] = params[name] - cfg.learning_rate * grads[name]
        current = replace(model, **params)
        train_loss = loss(current, Z_train, y_train)
        val_loss = loss(current, Z_val, y_val) if has_val else math.nan
        log.append((train_loss, val_loss))
        if not math.isfinite(train_loss):
            raise TrainingError(f"non-finite training loss at epoch {epoch}")
        if not has_val:
            continue
        if val_loss < best_val:
            best, best_val, best_epoch, wait = current, val_loss, epoch, 0
        else:
            wait += 1
            if wait >= cfg.patience:
                break
    if best is None:
        best, best_epoch = current, len(log)
    return replace(best, train_log=tuple(log), best_epoch=best_epoch)


def gradient_check(model: NetModel, z, y, step: float = 1e-5, floor: float = 1e-8, gradient=None) -> float:
    """Largest relative gap between an analytic gradient and central differences.

    ``gradient`` defaults to :func:`loss_and_grad`; pass a replacement to
    check another implementation against the same finite-difference oracle.
    """
    gradient = gradient or loss_and_grad
    Z = _as_block(model, z)
    y = np.atleast_1d(np.asarray(y, dtype=float))
    _, analytic = gradient(model, Z, y)
    worst = 0.0
    for name in PARAM_NAMES:
        base = np.array(getattr(model, name), dtype=float)
        flat = base.reshape(-1)
        ana = np.asarray(analytic[name], dtype=float).reshape(-1)
        for i in range(flat.size):
            bumped = []
            for delta in (step, -step):
                p = flat.copy()
                p[i] += delta
                value = p.reshape(base.shape) if base.ndim else float(p[0])
                bumped.append(loss(model.with_params(**{name: value}), Z, y))
            numeric = (bumped[0] - bumped[1]) / (2 * step)
            denom = max(abs(ana[i]), abs(numeric), floor)
            worst = max(worst, abs(ana[i] - numeric) / denom)
    return worst


def model_arrays(model: NetModel, prefix: str = "net_") -> dict:
    out = {prefix + name: np.asarray(getattr(model, name)) for name in PARAM_NAMES}
    cfg = model.config
    out[prefix + "config"] = np.array(
        [cfg.input_dim, cfg.hidden_units, cfg.learning_rate, cfg.max_epochs, cfg.patience, cfg.seed],
        dtype=float,
    )
    return out


def model_from_arrays(arrays, prefix: str = "net_") -> NetModel:
    k, h, lr, epochs, patience, seed = arrays[prefix + "config"]
    cfg = NetConfig(int(k), int(h), float(lr), int(epochs), int(patience), int(seed))
    return NetModel(
        np.array(arrays[prefix + "weights_in"]),
        np.array(arrays[prefix + "bias_in"]),
        np.array(arrays[prefix + "weights_out"]),
        float(arrays[prefix + "bias_out"]),
        cfg,
    )
