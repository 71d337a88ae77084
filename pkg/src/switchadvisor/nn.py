"""Minimal neural-network primitives on numpy with manual backprop.

Everything here is deliberately explicit: each layer caches what its
backward pass needs, parameters are plain arrays with a paired gradient
buffer, and the optimizer is mini-batch gradient descent with global
norm clipping.  Gradients are verified against central finite differences
in the test suite, so keep forward and backward in lockstep when editing.
"""

from __future__ import annotations

import numpy as np


class Param:
    __slots__ = ("value", "grad")

    def __init__(self, value: np.ndarray):
        self.value = np.asarray(value, dtype=float)
        self.grad = np.zeros_like(self.value)


def _uniform(rng: np.random.Generator, shape, scale: float) -> np.ndarray:
    return rng.uniform(-scale, scale, size=shape)


class Linear:
    def __init__(self, name: str, in_dim: int, out_dim: int,
                 rng: np.random.Generator, bias: bool = True,
                 zero_bias: bool = True):
        scale = 1.0 / np.sqrt(in_dim)
        self.name = name
        self.W = Param(_uniform(rng, (in_dim, out_dim), scale))
        self.b = Param(np.zeros(out_dim)) if bias else None
        if bias and not zero_bias:
            self.b.value = _uniform(rng, (out_dim,), scale)
        self._x = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._x = x
        out = x @ self.W.value
        if self.b is not None:
            out = out + self.b.value
        return out

    def backward(self, gout: np.ndarray) -> np.ndarray:
        x = self._x
        flat_x = x.reshape(-1, x.shape[-1])
        flat_g = gout.reshape(-1, gout.shape[-1])
        self.W.grad += flat_x.T @ flat_g
        if self.b is not None:
            self.b.grad += flat_g.sum(axis=0)
        return gout @ self.W.value.T

    def params(self) -> dict[str, Param]:
        out = {f"{self.name}.W": self.W}
        if self.b is not None:
            out[f"{self.name}.b"] = self.b
        return out


class Embedding:
    def __init__(self, name: str, vocab: int, dim: int, rng: np.random.Generator):
        self.name = name
        self.table = Param(_uniform(rng, (vocab, dim), 0.1))
        self._idx = None

    def forward(self, idx: np.ndarray) -> np.ndarray:
        self._idx = idx
        return self.table.value[idx]

    def backward(self, gout: np.ndarray) -> None:
        np.add.at(self.table.grad, self._idx, gout)

    def params(self) -> dict[str, Param]:
        return {f"{self.name}.table": self.table}


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class GRU:
    """Single-direction GRU over a (batch, time, in_dim) sequence.

    Gate layout is [reset | update | candidate]:
        r = sigmoid(x W_r + h U_r),  z = sigmoid(x W_z + h U_z)
        n = tanh(x W_n + r * (h U_n))
        h' = (1 - z) * n + z * h
    """

    def __init__(self, name: str, in_dim: int, hidden: int,
                 rng: np.random.Generator):
        self.name = name
        self.hidden = hidden
        scale = 1.0 / np.sqrt(hidden)
        self.W = Param(_uniform(rng, (in_dim, 3 * hidden), scale))
        self.U = Param(_uniform(rng, (hidden, 3 * hidden), scale))
        self.b = Param(np.zeros(3 * hidden))
        self._cache = None

    def forward(self, X: np.ndarray) -> np.ndarray:
        B, K, _ = X.shape
        H = self.hidden
        h = np.zeros((B, H))
        outs = np.empty((B, K, H))
        steps = []
        for t in range(K):
            x = X[:, t]
            gi = x @ self.W.value + self.b.value
            gh = h @ self.U.value
            r = _sigmoid(gi[:, :H] + gh[:, :H])
            z = _sigmoid(gi[:, H:2 * H] + gh[:, H:2 * H])
            ghn = gh[:, 2 * H:]
            n = np.tanh(gi[:, 2 * H:] + r * ghn)
            h_new = (1.0 - z) * n + z * h
            steps.append((x, h, r, z, n, ghn))
            outs[:, t] = h_new
            h = h_new
        self._cache = steps
        return outs

    def backward(self, dOuts: np.ndarray) -> np.ndarray:
        steps = self._cache
        B, K, H = dOuts.shape
        dX = np.empty((B, K, self.W.value.shape[0]))
        dh = np.zeros((B, H))
        for t in range(K - 1, -1, -1):
            x, h_prev, r, z, n, ghn = steps[t]
            dh = dh + dOuts[:, t]
            dz = dh * (h_prev - n)
            dn = dh * (1.0 - z)
            dh_prev = dh * z
            dn_pre = dn * (1.0 - n * n)
            dr = dn_pre * ghn
            dr_pre = dr * r * (1.0 - r)
            dz_pre = dz * z * (1.0 - z)
            dgi = np.concatenate([dr_pre, dz_pre, dn_pre], axis=1)
            dgh = np.concatenate([dr_pre, dz_pre, dn_pre * r], axis=1)
            self.W.grad += x.T @ dgi
            self.b.grad += dgi.sum(axis=0)
            self.U.grad += h_prev.T @ dgh
            dX[:, t] = dgi @ self.W.value.T
            dh = dh_prev + dgh @ self.U.value.T
        return dX

    def params(self) -> dict[str, Param]:
        return {f"{self.name}.W": self.W, f"{self.name}.U": self.U,
                f"{self.name}.b": self.b}


class BiGRU:
    """Forward and backward GRUs; backward direction runs on the flipped
    time axis.  Output is the per-step concat (B, K, 2*hidden)."""

    def __init__(self, name: str, in_dim: int, hidden: int,
                 rng: np.random.Generator):
        self.hidden = hidden
        self.fw = GRU(f"{name}.fw", in_dim, hidden, rng)
        self.bw = GRU(f"{name}.bw", in_dim, hidden, rng)

    def forward(self, X: np.ndarray) -> np.ndarray:
        Hf = self.fw.forward(X)
        Hb = self.bw.forward(X[:, ::-1])[:, ::-1]
        return np.concatenate([Hf, Hb], axis=2)

    def backward(self, dH: np.ndarray) -> np.ndarray:
        H = self.hidden
        dXf = self.fw.backward(dH[:, :, :H])
        dXb = self.bw.backward(dH[:, ::-1, H:])[:, ::-1]
        return dXf + dXb

    def params(self) -> dict[str, Param]:
        return {**self.fw.params(), **self.bw.params()}


# ---------------------------------------------------------------------------
# Losses (mean over the batch; backward returns d loss / d logits)

def bce_with_logits(logits: np.ndarray, targets: np.ndarray
                    ) -> tuple[float, np.ndarray]:
    x = logits.reshape(-1)
    y = targets.reshape(-1).astype(float)
    loss = np.maximum(x, 0.0) - x * y + np.log1p(np.exp(-np.abs(x)))
    grad = (_sigmoid(x) - y) / x.size
    return float(loss.mean()), grad.reshape(logits.shape)


def ce_with_logits(logits: np.ndarray, targets: np.ndarray
                   ) -> tuple[float, np.ndarray]:
    shift = logits - logits.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shift).sum(axis=1, keepdims=True))
    logp = shift - logz
    n = logits.shape[0]
    loss = -logp[np.arange(n), targets].mean()
    grad = np.exp(logp)
    grad[np.arange(n), targets] -= 1.0
    return float(loss), grad / n


def mse(pred: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    diff = pred.reshape(-1) - targets.reshape(-1)
    return float((diff ** 2).mean()), (2.0 * diff / diff.size).reshape(pred.shape)


# ---------------------------------------------------------------------------
# Optimization helpers

def zero_grads(params: dict[str, Param]) -> None:
    for p in params.values():
        p.grad[...] = 0.0


def clip_global_norm(params: dict[str, Param], max_norm: float) -> float:
    total = 0.0
    for p in params.values():
        total += float((p.grad ** 2).sum())
    norm = float(np.sqrt(total))
    if norm > max_norm and norm > 0:
        scale = max_norm / norm
        for p in params.values():
            p.grad *= scale
    return norm


def sgd_step(params: dict[str, Param], lr: float) -> None:
    for p in params.values():
        p.value -= lr * p.grad


def gradient_check(params: dict[str, Param], loss_fn, backward_fn,
                   eps: float = 1e-4) -> float:
    """Max relative error between analytic and central-difference gradients.

    loss_fn() recomputes the scalar loss from current parameter values;
    backward_fn() runs one forward+backward pass filling param grads.
    """
    zero_grads(params)
    backward_fn()
    worst = 0.0
    for p in params.values():
        analytic = p.grad.copy()
        flat = p.value.reshape(-1)
        aflat = analytic.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = loss_fn()
            flat[i] = orig - eps
            lo = loss_fn()
            flat[i] = orig
            numeric = (hi - lo) / (2.0 * eps)
            denom = max(abs(aflat[i]), abs(numeric), 1e-8)
            worst = max(worst, abs(aflat[i] - numeric) / denom)
    return worst


# ---------------------------------------------------------------------------
# Versioned flat tensor files

TENSOR_HEADER = "tensor-file v1"


def save_tensors(path, tensors: dict[str, np.ndarray],
                 meta: dict[str, str] | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(TENSOR_HEADER + "\n")
        for key, value in (meta or {}).items():
            fh.write(f"meta {key} {value}\n")
        for name, arr in tensors.items():
            arr = np.asarray(arr, dtype=float)
            dims = " ".join(str(d) for d in arr.shape)
            fh.write(f"tensor {name} {arr.ndim} {dims}\n")
            fh.write(" ".join(repr(float(v)) for v in arr.reshape(-1)) + "\n")


def load_tensors(path) -> tuple[dict[str, np.ndarray], dict[str, str]]:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != TENSOR_HEADER:
        raise ValueError(f"not a tensor file: {path}")
    tensors: dict[str, np.ndarray] = {}
    meta: dict[str, str] = {}
    i = 1
    while i < len(lines):
        parts = lines[i].split()
        if not parts:
            i += 1
            continue
        if parts[0] == "meta":
            meta[parts[1]] = " ".join(parts[2:])
            i += 1
        elif parts[0] == "tensor":
            name = parts[1]
            ndim = int(parts[2])
            shape = tuple(int(d) for d in parts[3:3 + ndim])
            values = np.array([float(v) for v in lines[i + 1].split()])
            tensors[name] = values.reshape(shape)
            i += 2
        else:
            raise ValueError(f"unknown tensor file directive {parts[0]!r}")
    return tensors, meta
