"""The deep reward network that scores pending slices.

Two embedding blocks (one for remaining node capacities, one applied
row-wise to the remaining demand matrix) feed a multi-head self-attention
block whose averaged attention weights serve as per-slice context scores.
Each slice row is then concatenated with the substrate embedding and its
context row and pushed through a shared fully-connected head that emits one
predicted return per slice. The pending slice with the highest prediction is
scheduled next.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import ConfigError, Scenario, stream, STREAM_PARAM_INIT
from .nn import AdamState, DenseLayer, MultiHeadAttention, relu_backward, relu_forward

__all__ = [
    "CheckpointError",
    "DrnConfig",
    "DrnParams",
    "CHECKPOINT_VERSION",
    "build",
    "forward",
    "forward_batch",
    "backward_batch",
    "select_action",
    "save_checkpoint",
    "load_checkpoint",
]

CHECKPOINT_VERSION = 1

EMBED_DEPTH = 3
HEAD_HIDDEN_DEPTH = 3
DEFAULT_HEADS = 5


class CheckpointError(RuntimeError):
    """Unreadable, truncated, or incompatible checkpoint file."""


@dataclass(frozen=True)
class DrnConfig:
    """Network dimensions, tied to the scenario shape it is trained for."""

    n: int
    l: int
    s: int
    heads: int = DEFAULT_HEADS
    scale: float = 1.0  # divisor applied to raw integer inputs

    @property
    def head_in(self) -> int:
        return self.n + self.s + self.l

    @property
    def head_width(self) -> int:
        return 3 * (self.n + self.s)

    def validate(self) -> None:
        if min(self.n, self.l, self.s, self.heads) < 1:
            raise ConfigError("all network dimensions must be positive")
        if self.scale <= 0:
            raise ConfigError("input scale must be positive")

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "l": self.l,
            "s": self.s,
            "heads": self.heads,
            "scale": self.scale,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DrnConfig":
        return cls(
            n=int(data["n"]),
            l=int(data["l"]),
            s=int(data["s"]),
            heads=int(data["heads"]),
            scale=float(data["scale"]),
        )


class DrnParams:
    """All learnable weights plus optimizer state."""

    def __init__(self, config: DrnConfig, rng: np.random.Generator):
        config.validate()
        self.config = config
        self.substrate_layers = [
            DenseLayer(config.n, config.n, rng) for _ in range(EMBED_DEPTH)
        ]
        self.slice_layers = [
            DenseLayer(config.s, config.s, rng) for _ in range(EMBED_DEPTH)
        ]
        self.attention = MultiHeadAttention(config.s, config.heads, rng)
        widths = [config.head_in] + [config.head_width] * HEAD_HIDDEN_DEPTH + [1]
        self.head_layers = [
            DenseLayer(widths[i], widths[i + 1], rng) for i in range(len(widths) - 1)
        ]
        self.adam = AdamState()
        self.iteration = 0

    def named_parameters(self) -> list[tuple[str, np.ndarray, np.ndarray]]:
        out = []
        for tag, layers in (
            ("substrate", self.substrate_layers),
            ("slice", self.slice_layers),
            ("head", self.head_layers),
        ):
            for i, layer in enumerate(layers):
                out.append((f"{tag}{i}.w", layer.w, layer.dw))
                out.append((f"{tag}{i}.b", layer.b, layer.db))
        for h in range(self.config.heads):
            out.append((f"attn.q{h}", self.attention.wq[h], self.attention.dwq[h]))
            out.append((f"attn.k{h}", self.attention.wk[h], self.attention.dwk[h]))
        return out

    def zero_grad(self) -> None:
        for layer in self.substrate_layers + self.slice_layers + self.head_layers:
            layer.zero_grad()
        self.attention.zero_grad()

    def check_dims(self, n: int, l: int, s: int) -> None:
        cfg = self.config
        if (n, l, s) != (cfg.n, cfg.l, cfg.s):
            raise ConfigError(
                f"network built for (n={cfg.n}, l={cfg.l}, s={cfg.s}) cannot score a "
                f"(n={n}, l={l}, s={s}) scenario"
            )

    def check_scenario(self, scenario: Scenario) -> None:
        self.check_dims(scenario.n, scenario.l, scenario.s)


def build(config: DrnConfig, seed: int) -> DrnParams:
    """Allocate and initialize all layers, deterministically in the seed."""
    return DrnParams(config, stream(seed, STREAM_PARAM_INIT))


def forward_batch(
    params: DrnParams, substrate: np.ndarray, demand: np.ndarray
) -> tuple[np.ndarray, dict]:
    """Score every slice for a batch of states.

    ``substrate`` is (batch, n) and ``demand`` (batch, l, s); returns the
    (batch, l) predicted returns and the cache backward_batch needs.
    """
    cfg = params.config
    if substrate.ndim != 2 or substrate.shape[1] != cfg.n:
        raise ValueError(f"expected substrate (batch, {cfg.n}), got {substrate.shape}")
    if demand.ndim != 3 or demand.shape[1:] != (cfg.l, cfg.s):
        raise ValueError(f"expected demand (batch, {cfg.l}, {cfg.s}), got {demand.shape}")
    batch = substrate.shape[0]
    cache: dict = {"batch": batch}

    x = substrate
    sub_masks = []
    for layer in params.substrate_layers:
        x, mask = relu_forward(layer.forward(x))
        sub_masks.append(mask)
    cache["sub_masks"] = sub_masks
    u_sub = x  # (batch, n)

    y = demand.reshape(batch * cfg.l, cfg.s)
    slice_masks = []
    for layer in params.slice_layers:
        y, mask = relu_forward(layer.forward(y))
        slice_masks.append(mask)
    cache["slice_masks"] = slice_masks
    u_slice = y.reshape(batch, cfg.l, cfg.s)

    context = params.attention.forward(u_slice)  # (batch, l, l)

    joint = np.concatenate(
        [np.repeat(u_sub[:, None, :], cfg.l, axis=1), u_slice, context], axis=2
    )
    h = joint.reshape(batch * cfg.l, cfg.head_in)
    head_masks = []
    for layer in params.head_layers[:-1]:
        h, mask = relu_forward(layer.forward(h))
        head_masks.append(mask)
    cache["head_masks"] = head_masks
    rho = params.head_layers[-1].forward(h).reshape(batch, cfg.l)
    return rho, cache


def backward_batch(params: DrnParams, cache: dict, drho: np.ndarray) -> None:
    """Accumulate parameter gradients for a batch scored by forward_batch."""
    cfg = params.config
    batch = cache["batch"]

    dh = params.head_layers[-1].backward(drho.reshape(batch * cfg.l, 1))
    for layer, mask in zip(
        reversed(params.head_layers[:-1]), reversed(cache["head_masks"])
    ):
        dh = layer.backward(relu_backward(dh, mask))

    djoint = dh.reshape(batch, cfg.l, cfg.head_in)
    d_sub_rep = djoint[:, :, : cfg.n]
    d_slice = djoint[:, :, cfg.n : cfg.n + cfg.s].copy()
    d_context = djoint[:, :, cfg.n + cfg.s :]

    d_slice += params.attention.backward(np.ascontiguousarray(d_context))

    dy = d_slice.reshape(batch * cfg.l, cfg.s)
    for layer, mask in zip(
        reversed(params.slice_layers), reversed(cache["slice_masks"])
    ):
        dy = layer.backward(relu_backward(dy, mask))

    dx = d_sub_rep.sum(axis=1)
    for layer, mask in zip(
        reversed(params.substrate_layers), reversed(cache["sub_masks"])
    ):
        dx = layer.backward(relu_backward(dx, mask))


def forward(
    params: DrnParams, substrate_vec: np.ndarray, demand_mat: np.ndarray
) -> np.ndarray:
    """Per-slice predicted returns for a single encoded state."""
    rho, _ = forward_batch(params, substrate_vec[None, :], demand_mat[None, :, :])
    return rho[0]


def select_action(rho: np.ndarray, feasible_mask: np.ndarray) -> int:
    """Index of the feasible slice with the highest score, ties to the lowest."""
    mask = np.asarray(feasible_mask)
    if not mask.any():
        raise ValueError("select_action requires at least one feasible slice")
    masked = np.where(mask > 0, rho, -np.inf)
    return int(np.argmax(masked))


def save_checkpoint(params: DrnParams, path: str | Path) -> None:
    """Write all weights, optimizer moments and counters as JSON."""
    doc = {
        "format_version": CHECKPOINT_VERSION,
        "config": params.config.to_dict(),
        "iteration": params.iteration,
        "adam": {
            "t": params.adam.t,
            "beta1": params.adam.beta1,
            "beta2": params.adam.beta2,
            "eps": params.adam.eps,
        },
        "arrays": {name: arr.tolist() for name, arr, _ in params.named_parameters()},
        "adam_m": {name: arr.tolist() for name, arr in sorted(params.adam.m.items())},
        "adam_v": {name: arr.tolist() for name, arr in sorted(params.adam.v.items())},
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True) + "\n")


def load_checkpoint(path: str | Path) -> DrnParams:
    """Rebuild DrnParams from a checkpoint; exact round-trip of save_checkpoint."""
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    try:
        version = doc["format_version"]
        if version != CHECKPOINT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        config = DrnConfig.from_dict(doc["config"])
        params = build(config, seed=0)
        params.iteration = int(doc["iteration"])
        params.adam.t = int(doc["adam"]["t"])
        params.adam.beta1 = float(doc["adam"]["beta1"])
        params.adam.beta2 = float(doc["adam"]["beta2"])
        params.adam.eps = float(doc["adam"]["eps"])
        arrays = doc["arrays"]
        for name, arr, _ in params.named_parameters():
            stored = np.array(arrays[name], dtype=np.float64)
            if stored.shape != arr.shape:
                raise CheckpointError(
                    f"checkpoint array {name} has shape {stored.shape}, expected {arr.shape}"
                )
            arr[:] = stored
        for name, values in doc["adam_m"].items():
            params.adam.m[name] = np.array(values, dtype=np.float64)
        for name, values in doc["adam_v"].items():
            params.adam.v[name] = np.array(values, dtype=np.float64)
    except CheckpointError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"malformed checkpoint {path}: {exc}") from exc
    return params
