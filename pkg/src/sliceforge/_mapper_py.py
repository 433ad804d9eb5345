"""Pure NumPy backend for the greedy node-selection kernels.

Semantics are identical to the compiled backend in ``_mapper_kernel``; the
test suite checks the two against each other and against a brute-force
enumeration oracle.

Node choice is the lexicographic maximum of (min-allocability, flexibility)
evaluated after a hypothetical placement, ties broken by lowest node index.
Both scores are computed incrementally: min-allocability over a demand
multiset equals the number of nodes that can still host the largest pending
demand, and flexibility changes only at the node that received the placement.
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "python"


def select_node_arrays(avail: np.ndarray, demand: int, pending: np.ndarray) -> int:
    """Best node for one VNF, or -1 when no node fits.

    ``pending`` is the multiset of demands of all still-unplaced VNFs other
    than the one being placed.
    """
    feasible = avail >= demand
    if not feasible.any():
        return -1
    if pending.size == 0:
        # Nothing else is pending: every feasible node scores the same.
        return int(np.argmax(feasible))

    sorted_p = np.sort(pending)
    dmax = int(sorted_p[-1])
    count_ge = int((avail >= dmax).sum())
    alloc_after = (
        count_ge
        - (avail >= dmax).astype(np.int64)
        + (avail - demand >= dmax).astype(np.int64)
    )
    flex_now = np.searchsorted(sorted_p, avail, side="right")
    flex_hyp = np.searchsorted(sorted_p, avail - demand, side="right")
    flex_after = int(flex_now.sum()) + (flex_hyp - flex_now)

    # Lexicographic (alloc, flex) argmax via a single integer key; flex is
    # bounded by n * len(pending) so the key cannot collide across alloc
    # values. np.argmax returns the first maximum, i.e. the lowest index.
    span = avail.shape[0] * pending.size + 1
    key = alloc_after * span + flex_after
    key[~feasible] = -1
    return int(np.argmax(key))


def map_slice_arrays(
    avail: np.ndarray,
    pending: np.ndarray,
    accommodated: np.ndarray,
    slice_i: int,
) -> np.ndarray | None:
    """Greedy placement of one slice, VNFs in descending demand order.

    Returns the chosen node per VNF index, or None when some VNF cannot be
    placed. Inputs are never mutated.
    """
    s = pending.shape[1]
    row = pending[slice_i]
    order = np.lexsort((np.arange(s), -row))

    keep = accommodated == 0
    keep = keep.copy()
    keep[slice_i] = False
    others = pending[keep].ravel()

    work = avail.copy()
    chosen = np.full(s, -1, dtype=np.int64)
    ordered_row = row[order]
    for pos in range(s):
        j = int(order[pos])
        remaining = np.concatenate([others, ordered_row[pos + 1 :]])
        k = select_node_arrays(work, int(row[j]), remaining)
        if k < 0:
            return None
        work[k] -= row[j]
        chosen[j] = k
    return chosen


def feasible_mask_arrays(
    avail: np.ndarray, pending: np.ndarray, accommodated: np.ndarray
) -> np.ndarray:
    """Per-slice flag: 1 when the greedy mapper can place the whole slice now."""
    l = pending.shape[0]
    mask = np.zeros(l, dtype=np.uint8)
    for i in range(l):
        if accommodated[i]:
            continue
        if map_slice_arrays(avail, pending, accommodated, i) is not None:
            mask[i] = 1
    return mask
