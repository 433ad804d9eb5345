"""Problem instances and episode state for the slice embedding simulator.

A problem instance is a substrate network (``n`` nodes, each with an integer
resource-block capacity) plus a set of ``l`` slices of ``s`` VNFs each, every
VNF demanding an integer number of resource blocks. Short slices are
represented by zero-demand padding VNFs so the demand matrix is always
``l x s``. Episode state tracks remaining capacities, remaining demands, which
slices are fully accommodated, and the placement ledger.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "ConfigError",
    "CommitError",
    "ScenarioConfig",
    "Scenario",
    "EnvState",
    "StepRecord",
    "EpisodeTrace",
    "BASE_CONFIG",
    "MINI_CONFIG",
    "stream",
    "generate_scenario",
    "init_episode",
    "commit_slice",
    "encode_state",
    "pending_demands",
]


class ConfigError(ValueError):
    """Invalid scenario or run configuration."""


class CommitError(RuntimeError):
    """A slice commit would violate capacity or single-placement rules."""


# Purpose identifiers for the Philox streams below. Every source of
# randomness in the package draws from one of these.
STREAM_SCENARIO = 1
STREAM_PARAM_INIT = 2
STREAM_EXPLORE = 3
STREAM_REPLAY = 4
STREAM_EVAL = 5


def stream(seed: int, stream_id: int, index: int = 0) -> np.random.Generator:
    """Independent deterministic RNG stream for one purpose.

    Uses the counter-based Philox 4x64 generator keyed with
    ``(seed, stream_id * 2**48 + index)``, so streams for different purposes
    (and sub-indices within a purpose) never overlap and reproduce exactly
    across platforms.
    """
    if not 0 <= seed < 2**64:
        raise ConfigError(f"seed must be an unsigned 64-bit integer, got {seed}")
    key = np.array([seed, (stream_id << 48) + index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class ScenarioConfig:
    """Distribution parameters for random problem instances."""

    n: int
    cap_range: tuple[int, int]
    l: int
    s: int
    demand_range: tuple[int, int]
    seed: int = 0

    def validate(self) -> None:
        if self.n < 1 or self.l < 1 or self.s < 1:
            raise ConfigError("n, l and s must all be at least 1")
        cap_lo, cap_hi = self.cap_range
        d_lo, d_hi = self.demand_range
        if not 0 <= cap_lo <= cap_hi:
            raise ConfigError(f"invalid capacity range {self.cap_range}")
        if not 0 <= d_lo <= d_hi:
            raise ConfigError(f"invalid demand range {self.demand_range}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed}")

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "cap_range": list(self.cap_range),
            "l": self.l,
            "s": self.s,
            "demand_range": list(self.demand_range),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        try:
            cfg = cls(
                n=int(data["n"]),
                cap_range=(int(data["cap_range"][0]), int(data["cap_range"][1])),
                l=int(data["l"]),
                s=int(data["s"]),
                demand_range=(int(data["demand_range"][0]), int(data["demand_range"][1])),
                seed=int(data.get("seed", 0)),
            )
        except (KeyError, TypeError, IndexError) as exc:
            raise ConfigError(f"malformed scenario config: {exc}") from exc
        cfg.validate()
        return cfg


# Default experiment profile: 100 nodes with 10..30 blocks each, 20 slices of
# 10 VNFs demanding 1..19 blocks. Expected supply and demand both total 2000.
BASE_CONFIG = ScenarioConfig(n=100, cap_range=(10, 30), l=20, s=10, demand_range=(1, 19))

# Scaled-down profile for fast desk checks and CI.
MINI_CONFIG = ScenarioConfig(n=20, cap_range=(4, 12), l=6, s=4, demand_range=(1, 7))

PROFILES = {"base": BASE_CONFIG, "mini": MINI_CONFIG}


@dataclass(frozen=True)
class Scenario:
    """Immutable problem instance: node capacities and the slice demand matrix."""

    capacities: np.ndarray  # shape (n,), int64
    demands: np.ndarray  # shape (l, s), int64

    def __post_init__(self) -> None:
        caps = np.ascontiguousarray(self.capacities, dtype=np.int64)
        dem = np.ascontiguousarray(self.demands, dtype=np.int64)
        if caps.ndim != 1 or dem.ndim != 2:
            raise ConfigError("capacities must be 1-D and demands 2-D")
        if caps.size < 1 or dem.shape[0] < 1 or dem.shape[1] < 1:
            raise ConfigError("empty scenario")
        if (caps < 0).any() or (dem < 0).any():
            raise ConfigError("capacities and demands must be non-negative")
        caps.flags.writeable = False
        dem.flags.writeable = False
        object.__setattr__(self, "capacities", caps)
        object.__setattr__(self, "demands", dem)

    @property
    def n(self) -> int:
        return self.capacities.shape[0]

    @property
    def l(self) -> int:
        return self.demands.shape[0]

    @property
    def s(self) -> int:
        return self.demands.shape[1]

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "capacities": self.capacities.tolist(),
            "l": self.l,
            "s": self.s,
            "demands": self.demands.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        try:
            scenario = cls(
                capacities=np.array(data["capacities"], dtype=np.int64),
                demands=np.array(data["demands"], dtype=np.int64),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"malformed scenario file: {exc}") from exc
        if scenario.n != int(data.get("n", scenario.n)) or scenario.l != int(
            data.get("l", scenario.l)
        ) or scenario.s != int(data.get("s", scenario.s)):
            raise ConfigError("scenario dimensions disagree with declared n/l/s")
        return scenario

    def save(self, path: str | Path, header: dict | None = None) -> None:
        doc = self.to_dict()
        if header:
            doc["config"] = header
        Path(path).write_text(json.dumps(doc, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "Scenario":
        return cls.from_dict(json.loads(Path(path).read_text()))


def generate_scenario(config: ScenarioConfig) -> Scenario:
    """Draw a random instance, fully determined by ``config.seed``.

    Capacities are drawn first, then demands row by row, all i.i.d. uniform
    integers over the configured inclusive ranges.
    """
    config.validate()
    rng = stream(config.seed, STREAM_SCENARIO)
    cap_lo, cap_hi = config.cap_range
    d_lo, d_hi = config.demand_range
    capacities = rng.integers(cap_lo, cap_hi + 1, size=config.n, dtype=np.int64)
    demands = rng.integers(d_lo, d_hi + 1, size=(config.l, config.s), dtype=np.int64)
    return Scenario(capacities=capacities, demands=demands)


@dataclass
class EnvState:
    """Mutable episode state.

    ``avail`` holds remaining capacities, ``pending`` the remaining demand
    matrix (rows of accommodated slices are zero), ``accommodated`` the
    per-slice completion flags and ``assignments`` the placement ledger as
    ``(slice, vnf, node, amount)`` records.
    """

    scenario: Scenario
    t: int
    avail: np.ndarray  # (n,) int64
    pending: np.ndarray  # (l, s) int64
    accommodated: np.ndarray  # (l,) uint8
    assignments: list[tuple[int, int, int, int]] = field(default_factory=list)

    def clone(self) -> "EnvState":
        return EnvState(
            scenario=self.scenario,
            t=self.t,
            avail=self.avail.copy(),
            pending=self.pending.copy(),
            accommodated=self.accommodated.copy(),
            assignments=list(self.assignments),
        )

    def equals(self, other: "EnvState") -> bool:
        return (
            self.t == other.t
            and np.array_equal(self.avail, other.avail)
            and np.array_equal(self.pending, other.pending)
            and np.array_equal(self.accommodated, other.accommodated)
            and self.assignments == other.assignments
        )

    @property
    def accommodated_count(self) -> int:
        return int(self.accommodated.sum())


def init_episode(scenario: Scenario) -> EnvState:
    """Fresh episode state: full capacities, full demands, empty ledger."""
    return EnvState(
        scenario=scenario,
        t=0,
        avail=scenario.capacities.copy(),
        pending=scenario.demands.copy(),
        accommodated=np.zeros(scenario.l, dtype=np.uint8),
    )


def commit_slice(
    state: EnvState, slice_i: int, placements: Sequence[tuple[int, int]]
) -> EnvState:
    """Apply a full set of VNF placements for one slice.

    ``placements`` must cover every VNF of the slice exactly once and each
    placement must fit the remaining capacity at the point it is applied. On
    any violation the state is left untouched and ``CommitError`` is raised.
    """
    l, s = state.pending.shape
    if not 0 <= slice_i < l:
        raise CommitError(f"slice index {slice_i} out of range")
    if state.accommodated[slice_i]:
        raise CommitError(f"slice {slice_i} is already accommodated")
    if sorted(j for j, _ in placements) != list(range(s)):
        raise CommitError("placements must cover each VNF of the slice exactly once")

    avail = state.avail.copy()
    ledger = []
    for j, k in placements:
        if not 0 <= k < avail.shape[0]:
            raise CommitError(f"node index {k} out of range")
        amount = int(state.pending[slice_i, j])
        if amount > avail[k]:
            raise CommitError(
                f"vnf {j} of slice {slice_i} (demand {amount}) does not fit node {k}"
            )
        avail[k] -= amount
        ledger.append((slice_i, int(j), int(k), amount))

    state.avail = avail
    state.assignments.extend(ledger)
    state.pending[slice_i, :] = 0
    state.accommodated[slice_i] = 1
    state.t += 1
    return state


def encode_state(state: EnvState, scale: float) -> tuple[np.ndarray, np.ndarray]:
    """Scaled float encodings of remaining capacities and demands."""
    if scale <= 0:
        raise ConfigError(f"scale must be positive, got {scale}")
    substrate = state.avail.astype(np.float64) / scale
    demand = state.pending.astype(np.float64) / scale
    return substrate, demand


def pending_demands(state: EnvState, exclude_slice: int | None = None) -> np.ndarray:
    """Flat multiset of pending VNF demands, optionally skipping one slice."""
    keep = state.accommodated == 0
    if exclude_slice is not None:
        keep = keep.copy()
        keep[exclude_slice] = False
    return state.pending[keep].ravel()


@dataclass
class StepRecord:
    """One scheduler step: the inputs seen, the action taken, and the tally after."""

    feasible_mask: np.ndarray  # (l,) uint8
    action: int
    accommodated_after: int
    substrate_enc: np.ndarray | None = None  # (n,) float64, present when recorded
    demand_enc: np.ndarray | None = None  # (l, s) float64


@dataclass
class EpisodeTrace:
    """Ordered step records of one episode plus trainer-filled returns."""

    steps: list[StepRecord] = field(default_factory=list)
    terminal_reached: bool = True
    returns: list[float] = field(default_factory=list)

    @property
    def n_accommodated(self) -> int:
        return self.steps[-1].accommodated_after if self.steps else 0

    def __len__(self) -> int:
        return len(self.steps)
