"""Minimal float64 neural-network substrate.

Just the fixed primitives the reward network needs: dense layers, ReLU,
multi-head self-attention producing head-averaged attention weights, a
masked squared-error loss, Adam, and a finite-difference gradient checker.
Every layer owns explicit gradient buffers that backward passes accumulate
into; there is no autodiff graph.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "DenseLayer",
    "MultiHeadAttention",
    "AdamState",
    "relu_forward",
    "relu_backward",
    "masked_mse",
    "adam_step",
    "finite_difference_check",
]


class DenseLayer:
    """y = x W^T + b with accumulated dW/db and a cached input per pass."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator):
        bound = 1.0 / math.sqrt(in_dim)
        self.w = rng.uniform(-bound, bound, size=(out_dim, in_dim))
        self.b = np.zeros(out_dim)
        self.dw = np.zeros_like(self.w)
        self.db = np.zeros_like(self.b)
        self._x: np.ndarray | None = None

    @property
    def in_dim(self) -> int:
        return self.w.shape[1]

    @property
    def out_dim(self) -> int:
        return self.w.shape[0]

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.shape[-1] != self.in_dim:
            raise ValueError(f"expected input width {self.in_dim}, got {x.shape[-1]}")
        self._x = x
        return x @ self.w.T + self.b

    def backward(self, dy: np.ndarray) -> np.ndarray:
        if self._x is None:
            raise RuntimeError("backward before forward")
        self.dw += dy.T @ self._x
        self.db += dy.sum(axis=0)
        return dy @ self.w

    def zero_grad(self) -> None:
        self.dw[:] = 0.0
        self.db[:] = 0.0


def relu_forward(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    y = np.maximum(x, 0.0)
    return y, x > 0.0


def relu_backward(dy: np.ndarray, active: np.ndarray) -> np.ndarray:
    return dy * active


def _softmax_rows(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


class MultiHeadAttention:
    """Head-averaged row-softmax attention weights over slice embeddings.

    Each head projects the ``(batch, l, d)`` input with its own query and key
    matrices; the output is the mean over heads of
    ``softmax(Q K^T / sqrt(d))``, an ``(batch, l, l)`` matrix whose rows each
    sum to one. There is no value projection: the attention weights
    themselves are the per-slice context scores fed downstream.
    """

    def __init__(self, dim: int, heads: int, rng: np.random.Generator):
        bound = 1.0 / math.sqrt(dim)
        self.dim = dim
        self.heads = heads
        self.wq = [rng.uniform(-bound, bound, size=(dim, dim)) for _ in range(heads)]
        self.wk = [rng.uniform(-bound, bound, size=(dim, dim)) for _ in range(heads)]
        self.dwq = [np.zeros_like(w) for w in self.wq]
        self.dwk = [np.zeros_like(w) for w in self.wk]
        self._cache = None

    def forward(self, u: np.ndarray) -> np.ndarray:
        if u.ndim != 3 or u.shape[-1] != self.dim:
            raise ValueError(f"expected (batch, l, {self.dim}) input, got {u.shape}")
        inv_scale = 1.0 / math.sqrt(self.dim)
        qs, ks, attms = [], [], []
        out = None
        for h in range(self.heads):
            q = u @ self.wq[h]
            k = u @ self.wk[h]
            attn = _softmax_rows((q @ k.transpose(0, 2, 1)) * inv_scale)
            qs.append(q)
            ks.append(k)
            attms.append(attn)
            out = attn if out is None else out + attn
        self._cache = (u, qs, ks, attms)
        return out / self.heads

    def backward(self, ds: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise RuntimeError("backward before forward")
        u, qs, ks, attms = self._cache
        inv_scale = 1.0 / math.sqrt(self.dim)
        du = np.zeros_like(u)
        for h in range(self.heads):
            attn = attms[h]
            da = ds / self.heads
            # softmax rows: dz = a * (da - sum(da * a))
            dz = attn * (da - (da * attn).sum(axis=-1, keepdims=True))
            dz = dz * inv_scale
            dq = dz @ ks[h]
            dk = dz.transpose(0, 2, 1) @ qs[h]
            self.dwq[h] += np.tensordot(u, dq, axes=([0, 1], [0, 1]))
            self.dwk[h] += np.tensordot(u, dk, axes=([0, 1], [0, 1]))
            du += dq @ self.wq[h].T + dk @ self.wk[h].T
        return du

    def zero_grad(self) -> None:
        for g in self.dwq + self.dwk:
            g[:] = 0.0


def masked_mse(
    pred: np.ndarray, target: np.ndarray, mask: np.ndarray
) -> tuple[float, np.ndarray]:
    """Sum of squared errors over masked-in entries, plus d(loss)/d(pred)."""
    if pred.shape != target.shape or pred.shape != mask.shape:
        raise ValueError("pred, target and mask must share a shape")
    diff = (pred - target) * mask
    loss = float((diff * diff).sum())
    return loss, 2.0 * diff * mask


class AdamState:
    """First/second moment buffers keyed by parameter name."""

    def __init__(self, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def buffers(self, name: str, shape: tuple[int, ...]) -> tuple[np.ndarray, np.ndarray]:
        if name not in self.m:
            self.m[name] = np.zeros(shape)
            self.v[name] = np.zeros(shape)
        return self.m[name], self.v[name]


def adam_step(
    named_params: Sequence[tuple[str, np.ndarray, np.ndarray]],
    state: AdamState,
    lr: float,
) -> None:
    """One bias-corrected Adam update over (name, param, grad) triples."""
    for name, _, grad in named_params:
        if not np.isfinite(grad).all():
            raise RuntimeError(f"non-finite gradient in {name}; refusing to update")
    state.t += 1
    bc1 = 1.0 - state.beta1**state.t
    bc2 = 1.0 - state.beta2**state.t
    for name, param, grad in named_params:
        m, v = state.buffers(name, param.shape)
        m *= state.beta1
        m += (1.0 - state.beta1) * grad
        v *= state.beta2
        v += (1.0 - state.beta2) * grad * grad
        param -= lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


def finite_difference_check(
    loss_fn: Callable[[], float],
    tensors: Sequence[tuple[np.ndarray, np.ndarray]],
    epsilon: float = 1e-5,
    max_coords: int | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``tensors`` pairs each parameter array with its analytic gradient, which
    must already be populated for the same loss that ``loss_fn`` evaluates.
    The relative error uses an absolute floor of 1e-3 in the denominator so
    near-zero gradient pairs are not dominated by difference noise. When
    ``max_coords`` is set, that many coordinates per tensor are sampled.
    """
    worst = 0.0
    for arr, grad in tensors:
        flat = arr.reshape(-1)
        gflat = grad.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            if rng is None:
                raise ValueError("sampling coordinates requires an rng")
            coords = rng.choice(flat.size, size=max_coords, replace=False)
        for idx in coords:
            orig = flat[idx]
            flat[idx] = orig + epsilon
            plus = loss_fn()
            flat[idx] = orig - epsilon
            minus = loss_fn()
            flat[idx] = orig
            numeric = (plus - minus) / (2.0 * epsilon)
            analytic = gflat[idx]
            err = abs(numeric - analytic) / max(abs(numeric) + abs(analytic), 1e-3)
            worst = max(worst, err)
    return worst
