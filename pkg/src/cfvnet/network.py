"""Feed-forward counterfactual value network, written against numpy only.

Architecture: affine + PReLU hidden stack (one learnable slope per unit),
linear output head of 2K values (both players' bucket CVs), then a
zero-sum correction that subtracts e = (r1·raw1 + r2·raw2)/2 from every
output.  The correction is part of the computation graph, so gradients
flow through it during training.  Loss is Huber over live target entries
only; optimization is mini-batch Adam.

Everything is float64 and seed-deterministic: identical seeds give
bit-identical parameters and checkpoint files.
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass, field

import numpy as np

DESK_HIDDEN = (200, 200, 200)
PAPER_HIDDEN = (500,) * 7


@dataclass(frozen=True)
class MlpConfig:
    input_dim: int
    output_dim: int
    hidden: tuple[int, ...] = DESK_HIDDEN
    seed: int = 0

    def __post_init__(self):
        dims = (self.input_dim, self.output_dim, *self.hidden)
        if any(d < 1 for d in dims):
            raise ValueError(f"all dimensions must be >= 1, got {dims}")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 350
    batch_size: int = 1000
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    delta: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")


@dataclass
class MlpParams:
    weights: list  # (fan_in, fan_out) per layer
    biases: list
    slopes: list  # per-unit PReLU slopes, hidden layers only
    adam_m: list = field(default_factory=list)
    adam_v: list = field(default_factory=list)
    step: int = 0

    def tensors(self) -> list:
        """Trainable tensors in declared (checkpoint) order."""
        out = []
        for i in range(len(self.weights)):
            out.append(self.weights[i])
            out.append(self.biases[i])
            if i < len(self.slopes):
                out.append(self.slopes[i])
        return out

    def check_finite(self) -> None:
        for t in self.tensors():
            if not np.all(np.isfinite(t)):
                raise FloatingPointError("non-finite parameter after update")


def init_params(config: MlpConfig) -> MlpParams:
    rng = np.random.default_rng(config.seed)
    widths = [config.input_dim, *config.hidden, config.output_dim]
    weights, biases, slopes = [], [], []
    for i in range(len(widths) - 1):
        fan_in, fan_out = widths[i], widths[i + 1]
        lim = 1.0 / math.sqrt(fan_in)
        weights.append(rng.uniform(-lim, lim, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
        if i < len(widths) - 2:
            slopes.append(np.full(fan_out, 0.25))
    params = MlpParams(weights=weights, biases=biases, slopes=slopes)
    params.adam_m = [np.zeros_like(t) for t in params.tensors()]
    params.adam_v = [np.zeros_like(t) for t in params.tensors()]
    return params


def _forward_cached(params: MlpParams, X: np.ndarray):
    """Returns (raw outputs, list of (pre-activation, activation) per hidden layer)."""
    a = X
    caches = []
    n_hidden = len(params.slopes)
    for i in range(n_hidden):
        z = a @ params.weights[i] + params.biases[i]
        a = np.where(z > 0, z, params.slopes[i] * z)
        caches.append((z, a))
    raw = a @ params.weights[-1] + params.biases[-1]
    return raw, caches


def forward(params: MlpParams, x) -> np.ndarray:
    """Raw (uncorrected) network output for one input or a batch."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.shape[1] != params.weights[0].shape[0]:
        raise ValueError(f"input dim {X.shape[1]} != {params.weights[0].shape[0]}")
    raw, _ = _forward_cached(params, X)
    return raw[0] if single else raw


def zero_sum_correct(raw1, raw2, bucket_range1, bucket_range2):
    """Shift both players' outputs so the range-weighted sum is zero.

    e = (r1·raw1 + r2·raw2)/2, v_i = raw_i - e.  Supports batches
    (leading axis) and single vectors.
    """
    raw1 = np.asarray(raw1, dtype=np.float64)
    raw2 = np.asarray(raw2, dtype=np.float64)
    r1 = np.asarray(bucket_range1, dtype=np.float64)
    r2 = np.asarray(bucket_range2, dtype=np.float64)
    e = 0.5 * (np.sum(r1 * raw1, axis=-1, keepdims=True) + np.sum(r2 * raw2, axis=-1, keepdims=True))
    return raw1 - e, raw2 - e


def _normalized_ranges(X: np.ndarray, K: int):
    """Input slices holding the two bucket ranges, renormalized to sum 1."""
    r1 = X[:, :K].copy()
    r2 = X[:, K : 2 * K].copy()
    for r in (r1, r2):
        s = r.sum(axis=1, keepdims=True)
        np.divide(r, s, out=r, where=s > 0)
    return r1, r2


def corrected_outputs(params: MlpParams, X: np.ndarray, K: int) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    raw = forward(params, X)
    r1, r2 = _normalized_ranges(X, K)
    v1, v2 = zero_sum_correct(raw[:, :K], raw[:, K:], r1, r2)
    return np.concatenate([v1, v2], axis=1)


def _huber_value_grad(residual: np.ndarray, delta: float):
    a = np.abs(residual)
    small = a <= delta
    value = np.where(small, 0.5 * residual * residual, delta * (a - 0.5 * delta))
    grad = np.where(small, residual, delta * np.sign(residual))
    return value, grad


def loss_and_grads(params: MlpParams, X, T, M, K: int, delta: float = 1.0):
    """Masked Huber loss and gradients for a batch, through the zero-sum head.

    X (n, D) inputs, T (n, 2K) targets, M (n, 2K) live mask.  Loss is the
    pooled mean over live entries.  Returns (loss, grads) with grads in
    params.tensors() order.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    T = np.atleast_2d(np.asarray(T, dtype=np.float64))
    M = np.atleast_2d(np.asarray(M, dtype=bool))
    n_live = int(M.sum())
    if n_live == 0:
        raise ValueError("batch has no live target entries")
    raw, caches = _forward_cached(params, X)
    r1, r2 = _normalized_ranges(X, K)
    rr = np.concatenate([r1, r2], axis=1)
    e = 0.5 * np.sum(rr * raw, axis=1, keepdims=True)
    v = raw - e
    residual = np.where(M, v - T, 0.0)
    value, g = _huber_value_grad(residual, delta)
    loss = float(np.sum(np.where(M, value, 0.0))) / n_live
    g = np.where(M, g, 0.0) / n_live
    # v = raw - e(raw): d loss/d raw = g - (sum_j g_j) * rr/2
    d_raw = g - 0.5 * g.sum(axis=1, keepdims=True) * rr

    n_hidden = len(params.slopes)
    gw = [None] * len(params.weights)
    gb = [None] * len(params.biases)
    gs = [None] * n_hidden
    a_prev = caches[-1][1] if n_hidden else X
    gw[-1] = a_prev.T @ d_raw
    gb[-1] = d_raw.sum(axis=0)
    d_a = d_raw @ params.weights[-1].T
    for i in range(n_hidden - 1, -1, -1):
        z, _ = caches[i]
        neg = z <= 0
        gs[i] = np.sum(np.where(neg, d_a * z, 0.0), axis=0)
        d_z = np.where(neg, params.slopes[i] * d_a, d_a)
        a_prev = caches[i - 1][1] if i > 0 else X
        gw[i] = a_prev.T @ d_z
        gb[i] = d_z.sum(axis=0)
        if i > 0:
            d_a = d_z @ params.weights[i].T
    grads = []
    for i in range(len(gw)):
        grads.append(gw[i])
        grads.append(gb[i])
        if i < n_hidden:
            grads.append(gs[i])
    return loss, grads


def _adam_step(params: MlpParams, grads, cfg: TrainConfig) -> None:
    params.step += 1
    t = params.step
    bc1 = 1.0 - cfg.beta1**t
    bc2 = 1.0 - cfg.beta2**t
    for tensor, g, m, v in zip(params.tensors(), grads, params.adam_m, params.adam_v):
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * g * g
        tensor -= cfg.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + cfg.adam_eps)


def _stack(encoded):
    X = np.stack([ex.inputs for ex in encoded])
    T = np.stack([ex.targets for ex in encoded])
    M = np.stack([ex.mask for ex in encoded])
    return X, T, M


def masked_huber_loss(params: MlpParams, encoded, K: int, delta: float = 1.0) -> float:
    X, T, M = _stack(encoded)
    v = corrected_outputs(params, X, K)
    residual = np.where(M, v - T, 0.0)
    value, _ = _huber_value_grad(residual, delta)
    return float(np.sum(np.where(M, value, 0.0))) / int(M.sum())


def train(encoded_train, mlp_config: MlpConfig, train_config: TrainConfig, encoded_test=None, progress=None):
    """Mini-batch Adam on the masked Huber loss.

    Returns (params, curve) where curve rows are (epoch, train_huber,
    test_huber); test_huber is NaN when no test set is given.  Fully
    deterministic for fixed config seeds.
    """
    if len(encoded_train) == 0:
        raise ValueError("training set is empty")
    K = mlp_config.output_dim // 2
    X, T, M = _stack(encoded_train)
    if X.shape[1] != mlp_config.input_dim or T.shape[1] != mlp_config.output_dim:
        raise ValueError(
            f"dataset shapes {X.shape[1]}/{T.shape[1]} do not match config "
            f"{mlp_config.input_dim}/{mlp_config.output_dim}"
        )
    params = init_params(mlp_config)
    shuffle_rng = np.random.default_rng(train_config.seed)
    n = len(encoded_train)
    curve = []
    for epoch in range(1, train_config.epochs + 1):
        order = shuffle_rng.permutation(n)
        for lo in range(0, n, train_config.batch_size):
            idx = order[lo : lo + train_config.batch_size]
            _, grads = loss_and_grads(params, X[idx], T[idx], M[idx], K, train_config.delta)
            _adam_step(params, grads, train_config)
            params.check_finite()
        train_loss = masked_huber_loss(params, encoded_train, K, train_config.delta)
        test_loss = (
            masked_huber_loss(params, encoded_test, K, train_config.delta)
            if encoded_test
            else float("nan")
        )
        curve.append((epoch, train_loss, test_loss))
        if progress is not None:
            progress(epoch, train_loss, test_loss)
    return params, curve


def predict(params: MlpParams, encoded, K: int):
    """Corrected per-example output vectors, ready for evaluate()."""
    X, _, _ = _stack(encoded)
    return list(corrected_outputs(params, X, K))


def gradient_check(params: MlpParams, X, T, M, K: int, epsilon: float = 1e-5, delta: float = 1.0) -> float:
    """Max relative error between analytic and central-difference gradients.

    Perturbs every parameter entry, so only call on small networks.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    _, grads = loss_and_grads(params, X, T, M, K, delta)
    worst = 0.0
    for tensor, g in zip(params.tensors(), grads):
        flat = tensor.reshape(-1)
        gflat = g.reshape(-1)
        for j in range(flat.size):
            keep = flat[j]
            flat[j] = keep + epsilon
            up, _ = loss_and_grads(params, X, T, M, K, delta)
            flat[j] = keep - epsilon
            down, _ = loss_and_grads(params, X, T, M, K, delta)
            flat[j] = keep
            numeric = (up - down) / (2.0 * epsilon)
            scale = max(abs(numeric), abs(gflat[j]), 1e-8)
            worst = max(worst, abs(numeric - gflat[j]) / scale)
    return worst


# ------------------------------------------------------------------- file io

_MAGIC = b"CFVN"
_VERSION = 1
_HEADER = struct.Struct("<4sHIIQH")


def save_model(path, config: MlpConfig, params: MlpParams) -> None:
    with open(path, "wb") as f:
        f.write(_HEADER.pack(_MAGIC, _VERSION, config.input_dim, config.output_dim, config.seed, len(config.hidden)))
        f.write(np.asarray(config.hidden, dtype="<u4").tobytes())
        for t in params.tensors():
            f.write(np.asarray(t, dtype="<f8").tobytes())


def load_model(path):
    with open(path, "rb") as f:
        raw = f.read()
    magic, version, input_dim, output_dim, seed, n_hidden = _HEADER.unpack_from(raw, 0)
    if magic != _MAGIC:
        raise ValueError(f"{path}: not a model checkpoint")
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    off = _HEADER.size
    hidden = tuple(int(w) for w in np.frombuffer(raw, dtype="<u4", count=n_hidden, offset=off))
    off += 4 * n_hidden
    config = MlpConfig(input_dim=input_dim, output_dim=output_dim, hidden=hidden, seed=seed)
    widths = [input_dim, *hidden, output_dim]
    weights, biases, slopes = [], [], []

    def take(shape):
        nonlocal off
        size = int(np.prod(shape))
        arr = np.frombuffer(raw, dtype="<f8", count=size, offset=off).reshape(shape).copy()
        off += 8 * size
        return arr

    for i in range(len(widths) - 1):
        weights.append(take((widths[i], widths[i + 1])))
        biases.append(take((widths[i + 1],)))
        if i < len(widths) - 2:
            slopes.append(take((widths[i + 1],)))
    if off != len(raw):
        raise ValueError(f"{path}: trailing bytes ({len(raw) - off})")
    params = MlpParams(weights=weights, biases=biases, slopes=slopes)
    params.adam_m = [np.zeros_like(t) for t in params.tensors()]
    params.adam_v = [np.zeros_like(t) for t in params.tensors()]
    return config, params


def save_curve(path, curve) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(("epoch", "train_huber", "test_huber"))
        for epoch, train_huber, test_huber in curve:
            writer.writerow((epoch, repr(train_huber), repr(test_huber)))
