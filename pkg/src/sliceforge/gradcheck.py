"""Finite-difference verification fixtures for every network primitive.

Each check builds a small random instance, computes analytic gradients for a
scalar probe loss, and compares them against central differences. Shared by
the CLI ``grad-check`` command and the test suite.
"""

from __future__ import annotations

import numpy as np

from . import drn
from .core import stream
from .nn import (
    DenseLayer,
    MultiHeadAttention,
    finite_difference_check,
    masked_mse,
    relu_backward,
    relu_forward,
)

__all__ = [
    "check_dense",
    "check_relu",
    "check_mhsa",
    "check_masked_mse",
    "check_full_network",
    "PRIMITIVE_CHECKS",
]

_CHECK_STREAM = 777  # purpose id for gradient-check randomness


def _rng(seed: int) -> np.random.Generator:
    return stream(seed, _CHECK_STREAM)


def check_dense(seed: int, epsilon: float = 1e-5) -> float:
    rng = _rng(seed)
    in_dim = int(rng.integers(2, 7))
    out_dim = int(rng.integers(2, 7))
    batch = int(rng.integers(1, 5))
    layer = DenseLayer(in_dim, out_dim, rng)
    x = rng.normal(size=(batch, in_dim))
    probe = rng.normal(size=(batch, out_dim))

    layer.zero_grad()
    layer.forward(x)
    dx = layer.backward(probe)

    def loss() -> float:
        return float((layer.forward(x) * probe).sum())

    return finite_difference_check(
        loss, [(layer.w, layer.dw), (layer.b, layer.db), (x, dx)], epsilon
    )


def check_relu(seed: int, epsilon: float = 1e-5) -> float:
    rng = _rng(seed)
    x = rng.normal(size=(3, 5))
    # keep inputs away from the kink where the derivative is undefined
    x = np.where(np.abs(x) < 0.05, 0.05, x)
    probe = rng.normal(size=x.shape)
    y, active = relu_forward(x)
    dx = relu_backward(probe, active)

    def loss() -> float:
        return float((relu_forward(x)[0] * probe).sum())

    return finite_difference_check(loss, [(x, dx)], epsilon)


def check_mhsa(seed: int, epsilon: float = 1e-5) -> float:
    rng = _rng(seed)
    dim = int(rng.integers(2, 5))
    rows = int(rng.integers(1, 5))
    heads = int(rng.integers(1, 4))
    batch = int(rng.integers(1, 3))
    attn = MultiHeadAttention(dim, heads, rng)
    u = rng.normal(size=(batch, rows, dim))
    probe = rng.normal(size=(batch, rows, rows))

    attn.zero_grad()
    attn.forward(u)
    du = attn.backward(probe)

    def loss() -> float:
        return float((attn.forward(u) * probe).sum())

    tensors = [(u, du)]
    tensors += [(attn.wq[h], attn.dwq[h]) for h in range(heads)]
    tensors += [(attn.wk[h], attn.dwk[h]) for h in range(heads)]
    return finite_difference_check(loss, tensors, epsilon)


def check_masked_mse(seed: int, epsilon: float = 1e-5) -> float:
    rng = _rng(seed)
    size = int(rng.integers(2, 8))
    pred = rng.normal(size=size)
    target = rng.normal(size=size)
    mask = (rng.random(size) < 0.6).astype(np.float64)
    _, dpred = masked_mse(pred, target, mask)

    def loss() -> float:
        return masked_mse(pred, target, mask)[0]

    return finite_difference_check(loss, [(pred, dpred)], epsilon)


def check_full_network(
    config: drn.DrnConfig,
    seed: int,
    epsilon: float = 1e-5,
    max_coords: int | None = 40,
) -> float:
    """End-to-end check of every parameter gradient through the full forward."""
    rng = _rng(seed)
    params = drn.build(config, seed=seed)
    batch = 2
    substrate = rng.random(size=(batch, config.n))
    demand = rng.random(size=(batch, config.l, config.s))
    probe = rng.normal(size=(batch, config.l))

    params.zero_grad()
    _, cache = drn.forward_batch(params, substrate, demand)
    drn.backward_batch(params, cache, probe)

    def loss() -> float:
        rho, _ = drn.forward_batch(params, substrate, demand)
        return float((rho * probe).sum())

    tensors = [(arr, grad) for _, arr, grad in params.named_parameters()]
    return finite_difference_check(loss, tensors, epsilon, max_coords=max_coords, rng=rng)


PRIMITIVE_CHECKS = {
    "dense": check_dense,
    "relu": check_relu,
    "mhsa": check_mhsa,
    "masked_mse": check_masked_mse,
}
