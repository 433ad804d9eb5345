"""Slice schedulers: four naive baselines and the shared episode runner.

Max, Min and Total order slices once, by descending per-slice max, min or
total demand. All ignores slices entirely and places every VNF in one global
descending-demand pass. The learned scheduler picks slices step by step from
network outputs; it shares the same runner via a picker callback.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import mapper
from .core import EnvState, EpisodeTrace, Scenario, StepRecord, commit_slice, encode_state, init_episode

__all__ = [
    "SchedulerKind",
    "AllMappingResult",
    "baseline_order",
    "run_baseline_all",
    "run_episode",
]


class SchedulerKind(enum.Enum):
    ALL = "all"
    MAX = "max"
    MIN = "min"
    TOTAL = "total"
    DRN = "drn"

    @classmethod
    def parse(cls, name: str) -> "SchedulerKind":
        try:
            return cls(name.strip().lower())
        except ValueError:
            raise ValueError(f"unknown scheduler {name!r}") from None


_ORDER_KEYS = {
    SchedulerKind.MAX: lambda demands: demands.max(axis=1),
    SchedulerKind.MIN: lambda demands: demands.min(axis=1),
    SchedulerKind.TOTAL: lambda demands: demands.sum(axis=1),
}


def baseline_order(kind: SchedulerKind, scenario: Scenario) -> list[int]:
    """Static slice order for Max/Min/Total: descending key, ties by index."""
    if kind not in _ORDER_KEYS:
        raise ValueError(f"{kind} has no static slice order")
    keys = _ORDER_KEYS[kind](scenario.demands)
    return list(np.lexsort((np.arange(scenario.l), -keys)))


@dataclass
class AllMappingResult:
    """Outcome of the slice-agnostic global VNF pass."""

    accommodated: np.ndarray  # (l,) uint8
    count: int
    state: EnvState


def run_baseline_all(scenario: Scenario) -> AllMappingResult:
    """Place every VNF across all slices in one descending-demand pass.

    There is no rollback: failed VNFs simply stay unmapped and a slice counts
    only when all of its VNFs landed.
    """
    state = init_episode(scenario)
    l, s = scenario.l, scenario.s
    flat = scenario.demands.ravel()
    order = np.lexsort((np.arange(flat.size), -flat))  # demand desc, then slice, then vnf

    unplaced = np.ones(flat.size, dtype=bool)
    placed_per_slice = np.zeros(l, dtype=np.int64)
    for fi in order:
        demand = int(flat[fi])
        unplaced[fi] = False
        remaining = flat[unplaced]
        k = mapper.select_node(state, demand, remaining)
        if k is None:
            unplaced[fi] = True
            continue
        i, j = divmod(int(fi), s)
        state.avail[k] -= demand
        state.pending[i, j] = 0
        state.assignments.append((i, j, int(k), demand))
        state.t += 1
        placed_per_slice[i] += 1
        if placed_per_slice[i] == s:
            state.accommodated[i] = 1

    flags = (placed_per_slice == s).astype(np.uint8)
    return AllMappingResult(accommodated=flags, count=int(flags.sum()), state=state)


PickerFn = Callable[[EnvState, np.ndarray], int]


def _static_picker(order: Sequence[int]) -> PickerFn:
    def pick(state: EnvState, mask: np.ndarray) -> int:
        for i in order:
            if mask[i]:
                return int(i)
        raise AssertionError("picker called with an all-zero mask")

    return pick


def run_episode(
    scenario: Scenario,
    scheduler: SchedulerKind | Sequence[int] | PickerFn,
    *,
    drn_params=None,
    epsilon: float = 0.0,
    exploration_rng: np.random.Generator | None = None,
    record_encodings: bool = False,
    scale: float | None = None,
) -> EpisodeTrace:
    """Accommodate slices until none of the pending ones can be mapped.

    ``scheduler`` is a static kind (Max/Min/Total), an explicit slice order,
    a picker callable, or DRN (requires ``drn_params``). With probability
    ``epsilon`` the picked action is overridden by a uniformly random
    feasible slice drawn from ``exploration_rng``.
    """
    if scheduler is SchedulerKind.ALL:
        raise ValueError("the All baseline does not schedule slices; use run_baseline_all")

    if scheduler is SchedulerKind.DRN:
        from . import drn  # local import to avoid a cycle

        if drn_params is None:
            raise ValueError("DRN scheduling requires drn_params")
        if scale is None:
            scale = drn_params.config.scale
        drn_params.check_scenario(scenario)

        def pick(state: EnvState, mask: np.ndarray) -> int:
            substrate, demand = encode_state(state, scale)
            rho = drn.forward(drn_params, substrate, demand)
            return drn.select_action(rho, mask)

    elif isinstance(scheduler, SchedulerKind):
        pick = _static_picker(baseline_order(scheduler, scenario))
    elif callable(scheduler):
        pick = scheduler
    else:
        pick = _static_picker(list(scheduler))

    if epsilon > 0.0 and exploration_rng is None:
        raise ValueError("epsilon > 0 requires an exploration_rng")
    if scale is None:
        scale = float(max(scenario.capacities.max(), 1))

    state = init_episode(scenario)
    trace = EpisodeTrace()
    while True:
        mask = mapper.feasible_mask(state)
        if not mask.any():
            break
        if epsilon > 0.0 and exploration_rng.random() < epsilon:
            feasible = np.flatnonzero(mask)
            action = int(feasible[exploration_rng.integers(0, feasible.size)])
        else:
            action = pick(state, mask)
        if not mask[action]:
            raise AssertionError(f"picker chose infeasible slice {action}")

        substrate_enc = demand_enc = None
        if record_encodings:
            substrate_enc, demand_enc = encode_state(state, scale)

        placements = mapper.map_slice(state, action)
        assert placements is not None, "masked-feasible slice failed to map"
        commit_slice(state, action, placements)
        trace.steps.append(
            StepRecord(
                feasible_mask=mask,
                action=action,
                accommodated_after=state.accommodated_count,
                substrate_enc=substrate_enc,
                demand_enc=demand_enc,
            )
        )
    trace.terminal_reached = True
    return trace
