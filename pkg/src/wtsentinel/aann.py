"""Bottleneck auto-associative network [p, h, b, h, p] with tanh hidden layers.

Reconstruction residuals of the trained network feed the Hotelling chart.
``backprop`` is the reference gradient; the numba epoch kernel used for
training implements the same arithmetic and is tested against it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numba
import numpy as np

from .domain import SampleMatrix
from .errors import DataError, TrainingDivergedError
from .settings import TrainSettings

N_LAYERS = 4


@dataclass(frozen=True, eq=False)
class AannModel:
    sizes: tuple[int, ...]
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    seed: int = 0
    epochs_run: int = 0
    final_loss: float | None = None

    @property
    def p(self) -> int:
        return self.sizes[0]

    @property
    def bottleneck(self) -> int:
        return self.sizes[2]

    def equals(self, other: AannModel) -> bool:
        return (
            self.sizes == other.sizes
            and all(np.array_equal(a, b) for a, b in zip(self.weights, other.weights))
            and all(np.array_equal(a, b) for a, b in zip(self.biases, other.biases))
        )


def layer_sizes(p: int, hidden: int | None = None, bottleneck: int | None = None) -> tuple[int, ...]:
    h = 2 * p if hidden is None else hidden
    b = max(1, math.ceil(p / 2)) if bottleneck is None else bottleneck
    if not b < p:
        raise ValueError(f"bottleneck {b} must be smaller than input width {p}")
    if h < p:
        raise ValueError(f"mapping width {h} must be at least the input width {p}")
    return (p, h, b, h, p)


def init_aann(p: int, settings: TrainSettings | None = None) -> AannModel:
    """Glorot-uniform weights from the settings seed, zero biases."""
    settings = settings or TrainSettings()
    if p < 2:
        raise ValueError(f"AANN needs at least 2 inputs, got {p}")
    sizes = layer_sizes(p, settings.hidden, settings.bottleneck)
    rng = np.random.default_rng(settings.seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return AannModel(sizes, tuple(weights), tuple(biases), seed=settings.seed)


def forward(weights, biases, x: np.ndarray) -> list[np.ndarray]:
    """Activations of every layer, input first."""
    acts = [x]
    for i, (w, b) in enumerate(zip(weights, biases)):
        z = acts[-1] @ w + b
        acts.append(z if i == len(weights) - 1 else np.tanh(z))
    return acts


def mse(weights, biases, x: np.ndarray) -> float:
    y = forward(weights, biases, x)[-1]
    return float(np.mean((y - x) ** 2))


def backprop(weights, biases, x: np.ndarray):
    """Loss and gradients of the mean squared reconstruction error over a batch.

    Returns ``(loss, grad_weights, grad_biases)``.
    """
    x = np.atleast_2d(x)
    acts = forward(weights, biases, x)
    err = acts[-1] - x
    loss = float(np.mean(err ** 2))
    delta = 2.0 * err / err.size
    gw = [None] * len(weights)
    gb = [None] * len(weights)
    for i in range(len(weights) - 1, -1, -1):
        gw[i] = acts[i].T @ delta
        gb[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ weights[i].T) * (1.0 - acts[i] ** 2)
    return loss, gw, gb


def reconstruct(model: AannModel, sample) -> np.ndarray:
    sample = np.asarray(sample, dtype=float)
    if sample.ndim != 1 or sample.shape[0] != model.p:
        raise DataError(f"expected a vector of length {model.p}, got shape {sample.shape}")
    if not np.isfinite(sample).all():
        raise DataError("sample must be finite")
    return reconstruct_batch(model, sample[None, :])[0]


def reconstruct_batch(model: AannModel, x: np.ndarray) -> np.ndarray:
    return forward(model.weights, model.biases, np.asarray(x, dtype=float))[-1]


def residuals(model: AannModel, matrix: SampleMatrix) -> SampleMatrix:
    """r = x - reconstruct(x) row-wise; rows with any invalid cell stay invalid."""
    if matrix.values.shape[1] != model.p:
        raise DataError(f"model expects {model.p} columns, matrix has {matrix.values.shape[1]}")
    row_ok = matrix.valid.all(axis=1)
    out = np.full(matrix.values.shape, np.nan)
    if row_ok.any():
        x = matrix.values[row_ok]
        out[row_ok] = x - reconstruct_batch(model, x)
    valid = np.repeat(row_ok[:, None], matrix.values.shape[1], axis=1)
    return SampleMatrix(matrix.timestamps, matrix.columns, out, valid, matrix.interpolated)


# -------------------------------------------------------------------- training


@numba.njit(cache=True)
def _tanh(v):
    # exp-based form is about twice as fast as libm tanh inside the kernel
    e = math.exp(-2.0 * abs(v))
    t = (1.0 - e) / (1.0 + e)
    return t if v >= 0 else -t


@numba.njit(cache=True)
def _dense(a, w, b, out, use_tanh):
    n, fan_in = a.shape
    fan_out = w.shape[1]
    for r in range(n):
        for j in range(fan_out):
            s = b[j]
            for i in range(fan_in):
                s += a[r, i] * w[i, j]
            out[r, j] = _tanh(s) if use_tanh else s


@numba.njit(cache=True)
def _grad_layer(a_in, delta, gw, gb):
    n, fan_in = a_in.shape
    fan_out = delta.shape[1]
    for i in range(fan_in):
        for j in range(fan_out):
            s = 0.0
            for r in range(n):
                s += a_in[r, i] * delta[r, j]
            gw[i, j] = s
    for j in range(fan_out):
        s = 0.0
        for r in range(n):
            s += delta[r, j]
        gb[j] = s


@numba.njit(cache=True)
def _back_delta(delta, w, a_in, out):
    # out = (delta @ w.T) * (1 - a_in^2)
    n, fan_out = delta.shape
    fan_in = w.shape[0]
    for r in range(n):
        for i in range(fan_in):
            s = 0.0
            for j in range(fan_out):
                s += delta[r, j] * w[i, j]
            out[r, i] = s * (1.0 - a_in[r, i] * a_in[r, i])


@numba.njit(cache=True)
def _step(w, b, vw, vb, gw, gb, lr, momentum):
    for i in range(w.shape[0]):
        for j in range(w.shape[1]):
            vw[i, j] = momentum * vw[i, j] - lr * gw[i, j]
            w[i, j] += vw[i, j]
    for j in range(b.shape[0]):
        vb[j] = momentum * vb[j] - lr * gb[j]
        b[j] += vb[j]


@numba.njit(cache=True)
def _epoch(x, order, batch, lr, momentum, w0, w1, w2, w3, b0, b1, b2, b3,
           vw0, vw1, vw2, vw3, vb0, vb1, vb2, vb3):
    """One pass of mini-batch momentum SGD over ``x[order]``; updates in place.

    Returns the row-weighted mean of the mini-batch losses seen during the pass.
    """
    n = order.shape[0]
    p = x.shape[1]
    h1 = w0.shape[1]
    h2 = w1.shape[1]
    h3 = w2.shape[1]
    g0 = np.empty_like(w0)
    g1 = np.empty_like(w1)
    g2 = np.empty_like(w2)
    g3 = np.empty_like(w3)
    gb0 = np.empty_like(b0)
    gb1 = np.empty_like(b1)
    gb2 = np.empty_like(b2)
    gb3 = np.empty_like(b3)
    xf = np.empty((batch, p))
    a1f = np.empty((batch, h1))
    a2f = np.empty((batch, h2))
    a3f = np.empty((batch, h3))
    yf = np.empty((batch, p))
    d3f = np.empty((batch, p))
    d2f = np.empty((batch, h3))
    d1f = np.empty((batch, h2))
    d0f = np.empty((batch, h1))
    total = 0.0
    for start in range(0, n, batch):
        stop = min(start + batch, n)
        m = stop - start
        xb, a1, a2, a3, y = xf[:m], a1f[:m], a2f[:m], a3f[:m], yf[:m]
        d3, d2, d1, d0 = d3f[:m], d2f[:m], d1f[:m], d0f[:m]
        for r in range(m):
            for c in range(p):
                xb[r, c] = x[order[start + r], c]
        _dense(xb, w0, b0, a1, True)
        _dense(a1, w1, b1, a2, True)
        _dense(a2, w2, b2, a3, True)
        _dense(a3, w3, b3, y, False)
        scale = 2.0 / (m * p)
        sse = 0.0
        for r in range(m):
            for c in range(p):
                e = y[r, c] - xb[r, c]
                sse += e * e
                d3[r, c] = scale * e
        total += sse
        _grad_layer(a3, d3, g3, gb3)
        _back_delta(d3, w3, a3, d2)
        _grad_layer(a2, d2, g2, gb2)
        _back_delta(d2, w2, a2, d1)
        _grad_layer(a1, d1, g1, gb1)
        _back_delta(d1, w1, a1, d0)
        _grad_layer(xb, d0, g0, gb0)
        _step(w3, b3, vw3, vb3, g3, gb3, lr, momentum)
        _step(w2, b2, vw2, vb2, g2, gb2, lr, momentum)
        _step(w1, b1, vw1, vb1, g1, gb1, lr, momentum)
        _step(w0, b0, vw0, vb0, g0, gb0, lr, momentum)
    return total / (n * p)


@numba.njit(cache=True)
def _mse(x, w0, w1, w2, w3, b0, b1, b2, b3):
    n, p = x.shape
    chunk = 256
    a1f = np.empty((chunk, w0.shape[1]))
    a2f = np.empty((chunk, w1.shape[1]))
    a3f = np.empty((chunk, w2.shape[1]))
    yf = np.empty((chunk, p))
    total = 0.0
    for start in range(0, n, chunk):
        m = min(start + chunk, n) - start
        xb = x[start:start + m]
        a1, a2, a3, y = a1f[:m], a2f[:m], a3f[:m], yf[:m]
        _dense(xb, w0, b0, a1, True)
        _dense(a1, w1, b1, a2, True)
        _dense(a2, w2, b2, a3, True)
        _dense(a3, w3, b3, y, False)
        for r in range(m):
            for c in range(p):
                e = y[r, c] - xb[r, c]
                total += e * e
    return total / (n * p)


def sgd_epoch(weights, biases, velocity_w, velocity_b, x, order, batch, lr, momentum) -> float:
    """In-place momentum-SGD epoch on lists of float64 C-contiguous arrays.

    Returns the mean mini-batch training loss of the pass.
    """
    return _epoch(x, order, batch, lr, momentum, *weights, *biases, *velocity_w, *velocity_b)


def fast_mse(weights, biases, x) -> float:
    """Compiled equivalent of :func:`mse` for the five-layer shape."""
    return _mse(np.ascontiguousarray(x, dtype=float), *weights, *biases)


def train_aann(model: AannModel, matrix, settings: TrainSettings | None = None):
    """Mini-batch momentum SGD on reconstruction MSE with step decay and early stopping.

    Returns ``(best_model, history)`` where history holds one
    ``(train_loss, validation_loss)`` pair per epoch run.
    """
    settings = settings or TrainSettings()
    x = matrix.values if isinstance(matrix, SampleMatrix) else np.asarray(matrix, dtype=float)
    x = np.ascontiguousarray(x, dtype=float)
    n, p = x.shape
    if p != model.p:
        raise DataError(f"model expects {model.p} columns, training matrix has {p}")
    if n < 10 * p:
        raise DataError(f"AANN training needs at least {10 * p} rows, got {n}")
    if not np.isfinite(x).all():
        raise DataError("training matrix contains non-finite values")
    if settings.epochs == 0:
        return model, []

    rng = np.random.default_rng(settings.seed)
    perm = rng.permutation(n)
    n_val = max(1, int(round(settings.validation_fraction * n)))
    x_val = np.ascontiguousarray(x[perm[:n_val]])
    x_train = np.ascontiguousarray(x[perm[n_val:]])

    weights = [np.array(w, dtype=float, order="C") for w in model.weights]
    biases = [np.array(b, dtype=float) for b in model.biases]
    vel_w = [np.zeros_like(w) for w in weights]
    vel_b = [np.zeros_like(b) for b in biases]

    history = []
    best = (math.inf, [w.copy() for w in weights], [b.copy() for b in biases], 0)
    stale = 0
    for epoch in range(settings.epochs):
        lr = settings.learning_rate * 0.5 ** (epoch // settings.decay_every)
        order = rng.permutation(len(x_train)).astype(np.int64)
        train_loss = sgd_epoch(weights, biases, vel_w, vel_b, x_train, order, settings.batch_size, lr,
                               settings.momentum)
        val_loss = fast_mse(weights, biases, x_val)
        if not (math.isfinite(train_loss) and math.isfinite(val_loss)):
            raise TrainingDivergedError(
                f"AANN training diverged at epoch {epoch + 1} (non-finite loss); try a smaller learning_rate"
            )
        history.append((train_loss, val_loss))
        if val_loss < best[0]:
            best = (val_loss, [w.copy() for w in weights], [b.copy() for b in biases], epoch + 1)
            stale = 0
        else:
            stale += 1
            if stale >= settings.patience:
                break

    best_w, best_b = best[1], best[2]
    trained = replace(
        model,
        weights=tuple(best_w),
        biases=tuple(best_b),
        epochs_run=len(history),
        final_loss=mse(best_w, best_b, x_train),
        seed=settings.seed,
    )
    return trained, history


# ------------------------------------------------------------- gradient check


def gradient_check(model: AannModel, sample, epsilon: float = 1e-5, grad_fn=backprop) -> float:
    """Max relative error between ``grad_fn`` and central finite differences
    of the reconstruction MSE at ``sample``, over every weight and bias."""
    x = np.atleast_2d(np.asarray(sample, dtype=float))
    weights = [np.array(w, dtype=float) for w in model.weights]
    biases = [np.array(b, dtype=float) for b in model.biases]
    _, gw, gb = grad_fn(weights, biases, x)
    worst = 0.0
    for params, grads in ((weights, gw), (biases, gb)):
        for arr, g in zip(params, grads):
            flat = arr.reshape(-1)
            gflat = np.asarray(g).reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + epsilon
                up = mse(weights, biases, x)
                flat[i] = orig - epsilon
                down = mse(weights, biases, x)
                flat[i] = orig
                numeric = (up - down) / (2.0 * epsilon)
                analytic = gflat[i]
                rel = abs(analytic - numeric) / max(1e-8, abs(analytic) + abs(numeric))
                worst = max(worst, rel)
    return worst
