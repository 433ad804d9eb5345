"""Flexibility and allocability metrics plus the greedy VNF mapper.

Placement picks, for each VNF, the substrate node that maximizes
(min-allocability, network flexibility) lexicographically after a
hypothetical allocation, so the network keeps the most options open for the
VNFs still waiting. A slice is mapped atomically: its VNFs are placed in
descending demand order and on any failure nothing is committed.

The inner loops run in a compiled Cython backend when available, falling
back to a pure NumPy implementation otherwise. Set SLICEFORGE_BACKEND to
``python`` or ``compiled`` to force one; see benchmarks/bench_mapper.py for
a throughput comparison.
"""

from __future__ import annotations

import math
import os
from typing import Iterable, Sequence

import numpy as np

from . import _mapper_py
from .core import EnvState, pending_demands

__all__ = [
    "BACKEND",
    "fits",
    "node_flexibility",
    "network_flexibility",
    "vnf_allocability",
    "min_allocability",
    "select_node",
    "map_slice",
    "trial_feasible",
    "feasible_mask",
]


def _pick_backend():
    forced = os.environ.get("SLICEFORGE_BACKEND", "").strip().lower()
    if forced == "python":
        return _mapper_py
    try:
        from . import _mapper_kernel
    except ImportError:
        if forced == "compiled":
            raise ImportError(
                "SLICEFORGE_BACKEND=compiled but the compiled kernel is not built"
            )
        return _mapper_py
    return _mapper_kernel


_backend = _pick_backend()
BACKEND: str = _backend.BACKEND_NAME


def fits(demand: int, capacity: int) -> int:
    """1 iff the demand fits the capacity."""
    return 1 if demand <= capacity else 0


def node_flexibility(capacity: int, pending: Iterable[int]) -> int:
    """Number of pending demands a single node could host."""
    arr = np.asarray(list(pending) if not isinstance(pending, np.ndarray) else pending)
    if arr.size == 0:
        return 0
    return int((arr <= capacity).sum())


def network_flexibility(avail: Sequence[int], pending: Iterable[int]) -> int:
    """Total (node, pending VNF) pairs where the VNF fits the node."""
    arr = np.asarray(list(pending) if not isinstance(pending, np.ndarray) else pending)
    caps = np.asarray(avail)
    if arr.size == 0 or caps.size == 0:
        return 0
    return int((arr[None, :] <= caps[:, None]).sum())


def vnf_allocability(demand: int, avail: Sequence[int]) -> int:
    """Number of nodes that could host a VNF of this demand."""
    caps = np.asarray(avail)
    return int((caps >= demand).sum())


def min_allocability(pending: Iterable[int], avail: Sequence[int]) -> int | float:
    """Worst-case allocability over the pending demands; +inf when none pend.

    Zero means at least one pending VNF (and therefore its slice) is blocked.
    """
    arr = np.asarray(list(pending) if not isinstance(pending, np.ndarray) else pending)
    if arr.size == 0:
        return math.inf
    # counts are non-increasing in the demand, so the minimum sits at the max
    return vnf_allocability(int(arr.max()), avail)


def select_node(
    state: EnvState, demand: int, remaining_pending: Iterable[int]
) -> int | None:
    """Node for one VNF under the current state, or None when blocked.

    ``remaining_pending`` is the demand multiset of every still-unplaced VNF
    except the one being placed.
    """
    pending = np.asarray(
        list(remaining_pending)
        if not isinstance(remaining_pending, np.ndarray)
        else remaining_pending,
        dtype=np.int64,
    )
    k = _backend.select_node_arrays(state.avail, int(demand), pending)
    return None if k < 0 else int(k)


def map_slice(state: EnvState, slice_i: int) -> list[tuple[int, int]] | None:
    """Placements for a whole slice in descending demand order, or None.

    The state is never mutated; the caller commits the returned placements.
    """
    if state.accommodated[slice_i]:
        raise ValueError(f"slice {slice_i} is already accommodated")
    chosen = _backend.map_slice_arrays(
        state.avail, state.pending, state.accommodated, int(slice_i)
    )
    if chosen is None:
        return None
    row = state.pending[slice_i]
    s = row.shape[0]
    order = np.lexsort((np.arange(s), -row))
    return [(int(j), int(chosen[j])) for j in order]


def trial_feasible(state: EnvState, slice_i: int) -> int:
    """1 iff map_slice would currently succeed for this slice."""
    if state.accommodated[slice_i]:
        return 0
    chosen = _backend.map_slice_arrays(
        state.avail, state.pending, state.accommodated, int(slice_i)
    )
    return 0 if chosen is None else 1


def feasible_mask(state: EnvState) -> np.ndarray:
    """trial_feasible for every slice at once, as a uint8 vector."""
    return _backend.feasible_mask_arrays(state.avail, state.pending, state.accommodated)
