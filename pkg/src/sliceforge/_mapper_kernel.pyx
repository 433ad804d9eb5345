# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops for greedy node selection.

Mirrors ``_mapper_py`` exactly; the test suite runs differential checks
between the two backends and against a brute-force oracle.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

ctypedef cnp.int64_t i64

BACKEND_NAME = "compiled"


cdef Py_ssize_t _bisect_right(const i64[::1] arr, i64 x) noexcept nogil:
    cdef Py_ssize_t lo = 0, hi = arr.shape[0], mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if arr[mid] <= x:
            lo = mid + 1
        else:
            hi = mid
    return lo


cdef i64 _count_le(const i64[::1] others_sorted, const i64[::1] rest,
                   Py_ssize_t rest_from, i64 x) noexcept nogil:
    # pending demands <= x, over sorted "others" plus the unsorted tail of
    # the slice currently being mapped
    cdef i64 c = <i64>_bisect_right(others_sorted, x)
    cdef Py_ssize_t idx
    for idx in range(rest_from, rest.shape[0]):
        if rest[idx] <= x:
            c += 1
    return c


cdef Py_ssize_t _select_node(const i64[::1] avail, i64 demand,
                             const i64[::1] others_sorted,
                             const i64[::1] rest, Py_ssize_t rest_from) noexcept nogil:
    cdef Py_ssize_t n = avail.shape[0]
    cdef Py_ssize_t n_others = others_sorted.shape[0]
    cdef Py_ssize_t pending_count = n_others + (rest.shape[0] - rest_from)
    cdef i64 dmax = 0
    cdef Py_ssize_t idx, k
    cdef i64 cnt_ge = 0
    cdef i64 a, f, best_a = -1, best_f = -1
    cdef Py_ssize_t best_k = -1

    if pending_count > 0:
        if n_others > 0:
            dmax = others_sorted[n_others - 1]
        for idx in range(rest_from, rest.shape[0]):
            if rest[idx] > dmax:
                dmax = rest[idx]
        for k in range(n):
            if avail[k] >= dmax:
                cnt_ge += 1

    for k in range(n):
        if avail[k] < demand:
            continue
        if pending_count == 0:
            # all feasible nodes tie; lowest index wins
            return k
        a = cnt_ge
        if avail[k] >= dmax:
            a -= 1
        if avail[k] - demand >= dmax:
            a += 1
        # flexibility delta at node k; the network-wide base is constant
        # across candidates so it cannot change the argmax
        f = _count_le(others_sorted, rest, rest_from, avail[k] - demand) \
            - _count_le(others_sorted, rest, rest_from, avail[k])
        if best_k < 0 or a > best_a or (a == best_a and f > best_f):
            best_k = k
            best_a = a
            best_f = f
    return best_k


cdef object _map_slice(i64[::1] work, const i64[:, ::1] pending,
                       const cnp.uint8_t[::1] accommodated, Py_ssize_t slice_i,
                       i64[::1] others_buf):
    """Greedy placement into ``work`` (mutated); returns node-per-VNF or None."""
    cdef Py_ssize_t l = pending.shape[0]
    cdef Py_ssize_t s = pending.shape[1]
    cdef Py_ssize_t i, j, pos, m = 0
    cdef Py_ssize_t k

    for i in range(l):
        if i == slice_i or accommodated[i]:
            continue
        for j in range(s):
            others_buf[m] = pending[i, j]
            m += 1
    others_np = np.asarray(others_buf[:m])
    others_np.sort()
    cdef const i64[::1] others_sorted = others_np

    row_np = np.asarray(pending[slice_i]).copy()
    order_np = np.lexsort((np.arange(s), -row_np))
    ordered_np = row_np[order_np]
    cdef const i64[::1] ordered = ordered_np
    cdef const cnp.intp_t[::1] order = order_np

    chosen_np = np.full(s, -1, dtype=np.int64)
    cdef i64[::1] chosen = chosen_np
    with nogil:
        for pos in range(s):
            k = _select_node(work, ordered[pos], others_sorted, ordered, pos + 1)
            if k < 0:
                with gil:
                    return None
            work[k] -= ordered[pos]
            chosen[order[pos]] = k
    return chosen_np


def select_node_arrays(avail, demand, pending):
    """Best node for one VNF, or -1 when no node fits."""
    avail_c = np.ascontiguousarray(avail, dtype=np.int64)
    pending_c = np.ascontiguousarray(pending, dtype=np.int64)
    pending_sorted = np.sort(pending_c)
    cdef const i64[::1] avail_v = avail_c
    cdef const i64[::1] pending_v = pending_sorted
    cdef i64 d = demand
    cdef Py_ssize_t k
    with nogil:
        k = _select_node(avail_v, d, pending_v, pending_v, pending_v.shape[0])
    return int(k)


def map_slice_arrays(avail, pending, accommodated, slice_i):
    """Greedy placement of one slice; returns node-per-VNF or None."""
    work = np.array(avail, dtype=np.int64)
    pending_c = np.ascontiguousarray(pending, dtype=np.int64)
    acc_c = np.ascontiguousarray(accommodated, dtype=np.uint8)
    others_buf = np.empty(pending_c.size, dtype=np.int64)
    return _map_slice(work, pending_c, acc_c, slice_i, others_buf)


def feasible_mask_arrays(avail, pending, accommodated):
    """Per-slice flag: 1 when the greedy mapper can place the whole slice now."""
    avail_c = np.ascontiguousarray(avail, dtype=np.int64)
    pending_c = np.ascontiguousarray(pending, dtype=np.int64)
    acc_c = np.ascontiguousarray(accommodated, dtype=np.uint8)
    cdef Py_ssize_t l = pending_c.shape[0]
    mask = np.zeros(l, dtype=np.uint8)
    others_buf = np.empty(pending_c.size, dtype=np.int64)
    work = np.empty_like(avail_c)
    cdef Py_ssize_t i
    for i in range(l):
        if acc_c[i]:
            continue
        np.copyto(work, avail_c)
        if _map_slice(work, pending_c, acc_c, i, others_buf) is not None:
            mask[i] = 1
    return mask
