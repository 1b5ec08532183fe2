"""Stacked LSTM with a dense head, trained by backpropagation through time.

Written directly on numpy in double precision: the factor panels are tiny,
training is full-batch, and exact input gradients are needed downstream for
saliency, so there is no reason to pull in a framework.

Conventions
-----------
* Sequences are (samples, steps, features); a single sample is (steps, features).
* Each LSTM layer holds an input kernel W (in, 4H), a recurrent kernel
  U (H, 4H) and a bias (4H,), with gates ordered [input, forget, cell, output]
  along the last axis.
* Dropout is inverted (mask Bernoulli(keep)/keep) and applies to the first
  layer's output sequence only; the mask is drawn per step and unit.
* The training loss is the mean over samples of the squared error norm.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DimensionError, NumericError, TrainingError

WEIGHTS_SCHEMA = "mortlab/network-v1"

_WEIGHT_KEYS = ("W1", "U1", "b1", "W2", "U2", "b2", "Wh", "bh")


def _sigmoid(x):
    # tanh form avoids overflow in exp for large negative inputs
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass
class NetworkParams:
    """Weights of the two-layer LSTM plus dense head.

    dropout_rate applies after layer 1; 0 disables the mask entirely so a
    dropout forward pass is bit-identical to a deterministic one.
    """

    W1: np.ndarray
    U1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    U2: np.ndarray
    b2: np.ndarray
    Wh: np.ndarray
    bh: np.ndarray
    dropout_rate: float = 0.2

    def __post_init__(self):
        for key in _WEIGHT_KEYS:
            setattr(self, key, np.asarray(getattr(self, key), dtype=float))
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        d, h4 = self.W1.shape
        h1 = h4 // 4
        if self.U1.shape != (h1, 4 * h1) or self.b1.shape != (4 * h1,):
            raise DimensionError("layer-1 shapes inconsistent")
        h2 = self.W2.shape[1] // 4
        if self.W2.shape != (h1, 4 * h2) or self.U2.shape != (h2, 4 * h2):
            raise DimensionError("layer-2 shapes inconsistent")
        if self.b2.shape != (4 * h2,):
            raise DimensionError("layer-2 bias shape inconsistent")
        if self.Wh.shape[0] != h2 or self.bh.shape != (self.Wh.shape[1],):
            raise DimensionError("head shapes inconsistent")
        for key in _WEIGHT_KEYS:
            if not np.all(np.isfinite(getattr(self, key))):
                raise NumericError(f"non-finite values in {key}")

    @property
    def input_dim(self) -> int:
        return self.W1.shape[0]

    @property
    def hidden(self) -> tuple[int, int]:
        return self.U1.shape[0], self.U2.shape[0]

    @property
    def output_dim(self) -> int:
        return self.Wh.shape[1]

    def copy(self) -> "NetworkParams":
        return NetworkParams(
            **{k: getattr(self, k).copy() for k in _WEIGHT_KEYS},
            dropout_rate=self.dropout_rate,
        )

    def weight_items(self):
        return [(k, getattr(self, k)) for k in _WEIGHT_KEYS]


def init_params(
    input_dim: int,
    hidden: tuple[int, int] = (32, 16),
    output_dim: int | None = None,
    dropout_rate: float = 0.2,
    seed: int = 0,
) -> NetworkParams:
    """Xavier-uniform kernels, zero biases except the forget gate at 1.0."""
    rng = np.random.default_rng(seed)
    h1, h2 = hidden
    out = input_dim if output_dim is None else output_dim

    def xavier(n_in, n_out):
        limit = np.sqrt(6.0 / (n_in + n_out))
        return rng.uniform(-limit, limit, size=(n_in, n_out))

    def bias(h):
        b = np.zeros(4 * h)
        b[h : 2 * h] = 1.0  # forget gate
        return b

    return NetworkParams(
        W1=xavier(input_dim, 4 * h1),
        U1=xavier(h1, 4 * h1),
        b1=bias(h1),
        W2=xavier(h1, 4 * h2),
        U2=xavier(h2, 4 * h2),
        b2=bias(h2),
        Wh=xavier(h2, out),
        bh=np.zeros(out),
        dropout_rate=dropout_rate,
    )


def _layer_forward(X, W, U, b):
    """Run one LSTM layer over (n, L, in); returns hidden sequence and caches."""
    n, L, _ = X.shape
    h = W.shape[1] // 4
    hs = np.zeros((L, n, h))
    cs = np.zeros((L, n, h))
    gates = np.zeros((L, n, 4 * h))
    h_t = np.zeros((n, h))
    c_t = np.zeros((n, h))
    for t in range(L):
        z = X[:, t, :] @ W + h_t @ U + b
        i = _sigmoid(z[:, :h])
        f = _sigmoid(z[:, h : 2 * h])
        g = np.tanh(z[:, 2 * h : 3 * h])
        o = _sigmoid(z[:, 3 * h :])
        c_t = f * c_t + i * g
        h_t = o * np.tanh(c_t)
        gates[t] = np.concatenate([i, f, g, o], axis=1)
        cs[t] = c_t
        hs[t] = h_t
    return hs, cs, gates


def _layer_backward(dh_seq, X, hs, cs, gates, W, U):
    """BPTT through one layer.

    dh_seq is the gradient arriving at each step's hidden output, shaped
    (L, n, h).  Returns (dX, dW, dU, db).
    """
    L, n, h = dh_seq.shape
    dX = np.zeros_like(X)
    dW = np.zeros_like(W)
    dU = np.zeros_like(U)
    db = np.zeros(4 * h)
    dh_carry = np.zeros((n, h))
    dc_carry = np.zeros((n, h))
    for t in range(L - 1, -1, -1):
        i = gates[t][:, :h]
        f = gates[t][:, h : 2 * h]
        g = gates[t][:, 2 * h : 3 * h]
        o = gates[t][:, 3 * h :]
        c_prev = cs[t - 1] if t > 0 else np.zeros((n, h))
        h_prev = hs[t - 1] if t > 0 else np.zeros((n, h))
        tc = np.tanh(cs[t])

        dh = dh_seq[t] + dh_carry
        dc = dc_carry + dh * o * (1.0 - tc * tc)
        dz = np.concatenate(
            [
                dc * g * i * (1.0 - i),
                dc * c_prev * f * (1.0 - f),
                dc * i * (1.0 - g * g),
                dh * tc * o * (1.0 - o),
            ],
            axis=1,
        )
        dW += X[:, t, :].T @ dz
        dU += h_prev.T @ dz
        db += dz.sum(axis=0)
        dX[:, t, :] = dz @ W.T
        dh_carry = dz @ U.T
        dc_carry = dc * f
    return dX, dW, dU, db


def _forward(params: NetworkParams, X: np.ndarray, mask: np.ndarray | None):
    """Full forward pass; mask (n, L, h1) is the pre-scaled dropout mask or
    None.  Returns (predictions, cache for backward)."""
    hs1, cs1, gates1 = _layer_forward(X, params.W1, params.U1, params.b1)
    h1_seq = np.moveaxis(hs1, 0, 1)  # (n, L, h1)
    h1_in = h1_seq if mask is None else h1_seq * mask
    hs2, cs2, gates2 = _layer_forward(h1_in, params.W2, params.U2, params.b2)
    h2_last = hs2[-1]
    pred = h2_last @ params.Wh + params.bh
    cache = (X, hs1, cs1, gates1, h1_in, hs2, cs2, gates2, mask)
    return pred, cache


def _backward(params: NetworkParams, cache, dpred: np.ndarray):
    """Gradients of a scalar loss with upstream dpred = dL/dprediction.

    Returns (grads dict keyed like weight_items, dX)."""
    X, hs1, cs1, gates1, h1_in, hs2, cs2, gates2, mask = cache
    n, L, _ = X.shape
    h2 = params.U2.shape[0]

    grads = {}
    grads["Wh"] = hs2[-1].T @ dpred
    grads["bh"] = dpred.sum(axis=0)

    dh2_seq = np.zeros((L, n, h2))
    dh2_seq[-1] = dpred @ params.Wh.T
    dh1_in, dW2, dU2, db2 = _layer_backward(
        dh2_seq, h1_in, hs2, cs2, gates2, params.W2, params.U2
    )
    grads["W2"], grads["U2"], grads["b2"] = dW2, dU2, db2

    dh1 = dh1_in if mask is None else dh1_in * mask
    dh1_seq = np.moveaxis(dh1, 0, 1)  # (L, n, h1)
    dX, dW1, dU1, db1 = _layer_backward(
        dh1_seq, X, hs1, cs1, gates1, params.W1, params.U1
    )
    grads["W1"], grads["U1"], grads["b1"] = dW1, dU1, db1
    return grads, dX


def draw_mask(
    params: NetworkParams, rng: np.random.Generator, n: int, steps: int
) -> np.ndarray | None:
    """Inverted-dropout mask for layer 1, or None when the rate is zero."""
    if params.dropout_rate == 0.0:
        return None
    keep = 1.0 - params.dropout_rate
    h1 = params.U1.shape[0]
    return (rng.random((n, steps, h1)) < keep) / keep


def forward(
    params: NetworkParams,
    x: np.ndarray,
    *,
    rng: np.random.Generator | None = None,
    mask: np.ndarray | None = None,
) -> np.ndarray:
    """Predict the next step from one window (steps, features).

    Deterministic without `rng`/`mask`; passing an rng draws a seeded
    dropout mask, so a fixed seed reproduces the same prediction.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise DimensionError("forward expects a single (steps, features) window")
    if not np.all(np.isfinite(x)):
        raise NumericError("non-finite input window")
    if mask is None and rng is not None:
        m3 = draw_mask(params, rng, 1, x.shape[0])
    elif mask is not None:
        m3 = mask[None, :, :]
    else:
        m3 = None
    pred, _ = _forward(params, x[None, :, :], m3)
    if not np.all(np.isfinite(pred)):
        raise NumericError("non-finite prediction")
    return pred[0]


def predict(params: NetworkParams, X: np.ndarray) -> np.ndarray:
    """Deterministic batched predictions for (samples, steps, features)."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 3:
        raise DimensionError("predict expects (samples, steps, features)")
    pred, _ = _forward(params, X, None)
    return pred


def input_gradient(
    params: NetworkParams, x: np.ndarray, output_index: int
) -> np.ndarray:
    """Exact gradient of one output component with respect to the window."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise DimensionError("input_gradient expects a single window")
    pred, cache = _forward(params, x[None, :, :], None)
    dpred = np.zeros_like(pred)
    dpred[0, output_index] = 1.0
    _, dX = _backward(params, cache, dpred)
    return dX[0]


def mse(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean over samples of the squared error norm."""
    err = pred - target
    return float(np.mean(np.sum(err * err, axis=1)))


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    max_epochs: int = 500
    patience: int = 15
    clip_norm: float = 5.0
    seed: int = 0

    def __post_init__(self):
        if self.patience < 1:
            raise ValueError("patience must be >= 1")


@dataclass
class TrainTrace:
    train_mse: list[float] = field(default_factory=list)
    val_mse: list[float] = field(default_factory=list)
    initial_val_mse: float = float("nan")
    best_epoch: int = 0
    best_val_mse: float = float("inf")
    stopped_early: bool = False

    @property
    def epochs_run(self) -> int:
        return len(self.train_mse)


class _Adam:
    def __init__(self, arrays, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(a) for k, a in arrays}
        self.v = {k: np.zeros_like(a) for k, a in arrays}
        self.t = 0

    def step(self, params: NetworkParams, grads: dict):
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for key, w in params.weight_items():
            g = grads[key]
            m = self.m[key]
            v = self.v[key]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            w -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


def _clip_global_norm(grads: dict, max_norm: float):
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / total
        for g in grads.values():
            g *= scale
    return total


def train(
    X_train: np.ndarray,
    Y_train: np.ndarray,
    X_val: np.ndarray,
    Y_val: np.ndarray,
    config: TrainConfig,
    *,
    hidden: tuple[int, int] = (32, 16),
    dropout_rate: float = 0.2,
    params: NetworkParams | None = None,
) -> tuple[NetworkParams, TrainTrace]:
    """Full-batch Adam with early stopping on the validation loss.

    Dropout is active on training forward passes, never on evaluation.
    Stops after `patience` epochs without a new best validation MSE and
    restores the best epoch's weights.  Deterministic under config.seed.
    """
    X_train = np.asarray(X_train, dtype=float)
    Y_train = np.asarray(Y_train, dtype=float)
    X_val = np.asarray(X_val, dtype=float)
    Y_val = np.asarray(Y_val, dtype=float)
    if X_train.shape[0] < 1 or X_val.shape[0] < 1:
        raise ValueError("need at least one training and one validation sample")

    init_seed, mask_seed = np.random.SeedSequence(config.seed).spawn(2)
    if params is None:
        params = init_params(
            X_train.shape[2],
            hidden=hidden,
            output_dim=Y_train.shape[1],
            dropout_rate=dropout_rate,
            seed=init_seed,
        )
    else:
        params = params.copy()
    mask_rng = np.random.default_rng(mask_seed)

    trace = TrainTrace()
    trace.initial_val_mse = mse(predict(params, X_val), Y_val)
    optimizer = _Adam(params.weight_items(), lr=config.learning_rate)
    best_params = params.copy()
    waiting = 0

    n, steps, _ = X_train.shape
    for epoch in range(1, config.max_epochs + 1):
        mask = draw_mask(params, mask_rng, n, steps)
        pred, cache = _forward(params, X_train, mask)
        train_loss = mse(pred, Y_train)
        if not np.isfinite(train_loss):
            raise TrainingError("training loss diverged", epoch=epoch)
        dpred = 2.0 * (pred - Y_train) / n
        grads, _ = _backward(params, cache, dpred)
        _clip_global_norm(grads, config.clip_norm)
        optimizer.step(params, grads)

        val_loss = mse(predict(params, X_val), Y_val)
        trace.train_mse.append(train_loss)
        trace.val_mse.append(val_loss)

        if val_loss < trace.best_val_mse:
            trace.best_val_mse = val_loss
            trace.best_epoch = epoch
            best_params = params.copy()
            waiting = 0
        else:
            waiting += 1
            if waiting >= config.patience:
                trace.stopped_early = True
                break

    return best_params, trace


@dataclass(frozen=True)
class GridCandidate:
    hidden: tuple[int, int]
    learning_rate: float = 1e-3


def grid_search(
    candidates: Sequence[GridCandidate],
    X_train: np.ndarray,
    Y_train: np.ndarray,
    X_val: np.ndarray,
    Y_val: np.ndarray,
    base: TrainConfig,
    *,
    dropout_rate: float = 0.2,
) -> list[tuple[GridCandidate, float]]:
    """Train every candidate and rank by best validation MSE (stable order).

    The dropout rate is a fixed architectural setting, deliberately not a
    grid dimension, so every candidate stays usable for stochastic
    inference.
    """
    if not candidates:
        raise ValueError("need at least one candidate")
    scored = []
    for idx, cand in enumerate(candidates):
        cfg = replace(base, learning_rate=cand.learning_rate)
        _, trace = train(
            X_train,
            Y_train,
            X_val,
            Y_val,
            cfg,
            hidden=cand.hidden,
            dropout_rate=dropout_rate,
        )
        scored.append((idx, cand, trace.best_val_mse))
    scored.sort(key=lambda item: (item[2], item[0]))
    return [(cand, score) for _, cand, score in scored]


def save_network(params: NetworkParams, path: str | Path) -> None:
    doc = {
        "schema": WEIGHTS_SCHEMA,
        "dropout_rate": params.dropout_rate,
        "shapes": {k: list(getattr(params, k).shape) for k in _WEIGHT_KEYS},
        "weights": {k: getattr(params, k).tolist() for k in _WEIGHT_KEYS},
    }
    Path(path).write_text(json.dumps(doc))


def load_network(path: str | Path) -> NetworkParams:
    doc = json.loads(Path(path).read_text())
    if doc.get("schema") != WEIGHTS_SCHEMA:
        raise DimensionError(
            f"unsupported network schema {doc.get('schema')!r}; expected {WEIGHTS_SCHEMA}"
        )
    weights = {}
    for key in _WEIGHT_KEYS:
        arr = np.asarray(doc["weights"][key], dtype=float)
        want = tuple(doc["shapes"][key])
        if arr.shape != want:
            raise DimensionError(f"{key} shape {arr.shape} does not match metadata {want}")
        weights[key] = arr
    return NetworkParams(**weights, dropout_rate=float(doc["dropout_rate"]))
