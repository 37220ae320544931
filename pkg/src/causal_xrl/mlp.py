"""Three-layer tanh MLP regressor trained with Adam.

The training loop is compiled with numba: the default configuration
(learning rate 3e-5, 50 epochs, per-sample updates) is several hundred
thousand optimizer steps per vertex, which is too slow as a Python loop.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

HIDDEN = 4


@njit(cache=True)
def _train(params, shapes, X, y, order, batch_size, lr, beta1, beta2, eps, losses):
    # params is one flat vector; shapes gives (n_in, hidden)
    n_in = shapes[0]
    hid = shapes[1]
    o1 = 0
    o_b1 = o1 + n_in * hid
    o2 = o_b1 + hid
    o_b2 = o2 + hid * hid
    o3 = o_b2 + hid
    o_b3 = o3 + hid
    n_par = o_b3 + 1
    m = np.zeros(n_par)
    v = np.zeros(n_par)
    g = np.zeros(n_par)
    h1 = np.zeros(hid)
    h2 = np.zeros(hid)
    d2 = np.zeros(hid)
    d1 = np.zeros(hid)
    step = 0
    n_epochs = order.shape[0]
    n = order.shape[1]
    for ep in range(n_epochs):
        total = 0.0
        start = 0
        while start < n:
            stop = min(start + batch_size, n)
            g[:] = 0.0
            for k in range(start, stop):
                r = order[ep, k]
                x = X[r]
                # forward
                for j in range(hid):
                    s = params[o_b1 + j]
                    for i in range(n_in):
                        s += x[i] * params[o1 + i * hid + j]
                    h1[j] = np.tanh(s)
                for j in range(hid):
                    s = params[o_b2 + j]
                    for i in range(hid):
                        s += h1[i] * params[o2 + i * hid + j]
                    h2[j] = np.tanh(s)
                out = params[o_b3]
                for i in range(hid):
                    out += h2[i] * params[o3 + i]
                err = out - y[r]
                total += err * err
                dout = 2.0 * err / (stop - start)
                # backward
                g[o_b3] += dout
                for i in range(hid):
                    g[o3 + i] += dout * h2[i]
                    d2[i] = dout * params[o3 + i] * (1.0 - h2[i] * h2[i])
                for j in range(hid):
                    g[o_b2 + j] += d2[j]
                for i in range(hid):
                    acc = 0.0
                    for j in range(hid):
                        g[o2 + i * hid + j] += h1[i] * d2[j]
                        acc += params[o2 + i * hid + j] * d2[j]
                    d1[i] = acc * (1.0 - h1[i] * h1[i])
                for j in range(hid):
                    g[o_b1 + j] += d1[j]
                for i in range(n_in):
                    for j in range(hid):
                        g[o1 + i * hid + j] += x[i] * d1[j]
            step += 1
            c1 = 1.0 - beta1**step
            c2 = 1.0 - beta2**step
            for p in range(n_par):
                m[p] = beta1 * m[p] + (1.0 - beta1) * g[p]
                v[p] = beta2 * v[p] + (1.0 - beta2) * g[p] * g[p]
                params[p] -= lr * (m[p] / c1) / (np.sqrt(v[p] / c2) + eps)
            start = stop
        losses[ep] = total / n


@dataclass
class MLPRegressor:
    """Standardized-input tanh network: n_in -> 4 -> 4 -> 1."""

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    W3: np.ndarray
    b3: np.ndarray
    x_mean: np.ndarray
    x_scale: np.ndarray
    y_mean: float
    y_scale: float

    kind = "mlp"

    @property
    def n_inputs(self) -> int:
        return self.W1.shape[0]

    def predict(self, x) -> float:
        z = (np.asarray(x, dtype=float) - self.x_mean) / self.x_scale
        h = np.tanh(z @ self.W1 + self.b1)
        h = np.tanh(h @ self.W2 + self.b2)
        return float((h @ self.W3 + self.b3)[0] * self.y_scale + self.y_mean)

    def predict_many(self, X: np.ndarray) -> np.ndarray:
        Z = (np.asarray(X, dtype=float) - self.x_mean) / self.x_scale
        H = np.tanh(Z @ self.W1 + self.b1)
        H = np.tanh(H @ self.W2 + self.b2)
        return (H @ self.W3 + self.b3)[:, 0] * self.y_scale + self.y_mean

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            **{k: getattr(self, k).tolist() for k in ("W1", "b1", "W2", "b2", "W3", "b3", "x_mean", "x_scale")},
            "y_mean": self.y_mean,
            "y_scale": self.y_scale,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MLPRegressor":
        arrays = {k: np.asarray(d[k], dtype=float) for k in ("W1", "b1", "W2", "b2", "W3", "b3", "x_mean", "x_scale")}
        arrays["W3"] = arrays["W3"].reshape(-1, 1)
        arrays["W1"] = arrays["W1"].reshape(len(arrays["x_mean"]), -1)
        return cls(**arrays, y_mean=float(d["y_mean"]), y_scale=float(d["y_scale"]))


def _scale(a: np.ndarray) -> np.ndarray:
    s = a.std(axis=0)
    return np.where(s > 0, s, 1.0)


def train_mlp(
    X: np.ndarray,
    y: np.ndarray,
    *,
    rng: np.random.Generator,
    epochs: int = 50,
    lr: float = 3e-5,
    batch_size: int = 1,
    hidden: int = HIDDEN,
) -> tuple[MLPRegressor, np.ndarray]:
    """Fit an MLP; returns the model and the per-epoch training MSE (standardized units)."""
    X = np.ascontiguousarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, n_in = X.shape
    x_mean, x_scale = X.mean(axis=0), _scale(X)
    y_mean = float(y.mean())
    y_scale = float(y.std()) or 1.0
    Z = np.ascontiguousarray((X - x_mean) / x_scale)
    t = (y - y_mean) / y_scale

    def glorot(fan_in: int, fan_out: int) -> np.ndarray:
        lim = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-lim, lim, size=(fan_in, fan_out))

    W1, W2, W3 = glorot(n_in, hidden), glorot(hidden, hidden), glorot(hidden, 1)
    params = np.concatenate([W1.ravel(), np.zeros(hidden), W2.ravel(), np.zeros(hidden), W3.ravel(), np.zeros(1)])
    order = np.stack([rng.permutation(n) for _ in range(epochs)]) if epochs else np.zeros((0, n), dtype=np.int64)
    losses = np.zeros(epochs)
    _train(params, np.array([n_in, hidden]), Z, t, order.astype(np.int64), int(batch_size), lr, 0.9, 0.999, 1e-8, losses)

    o = 0
    def take(size: int) -> np.ndarray:
        nonlocal o
        out = params[o : o + size].copy()
        o += size
        return out

    model = MLPRegressor(
        W1=take(n_in * hidden).reshape(n_in, hidden),
        b1=take(hidden),
        W2=take(hidden * hidden).reshape(hidden, hidden),
        b2=take(hidden),
        W3=take(hidden).reshape(hidden, 1),
        b3=take(1),
        x_mean=x_mean,
        x_scale=x_scale,
        y_mean=y_mean,
        y_scale=y_scale,
    )
    return model, losses
