# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled walk kernel.

Statement-by-statement mirror of ``_walk_py.walk_deposits``; both backends
must produce bit-identical output (same RNG stream, same IEEE-double
operation order).  See the pure-Python module for the algorithm contract.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport isfinite
from libc.stdint cimport int64_t, uint64_t

cnp.import_array()

cdef uint64_t GAMMA = <uint64_t>0x9E3779B97F4A7C15
cdef uint64_t MIX1 = <uint64_t>0xBF58476D1CE4E5B9
cdef uint64_t MIX2 = <uint64_t>0x94D049BB133111EB
cdef double INV_2_53 = 1.0 / 9007199254740992.0


cdef inline uint64_t _mix(uint64_t z) noexcept:
    z = z + GAMMA
    z = (z ^ (z >> 30)) * MIX1
    z = (z ^ (z >> 27)) * MIX2
    return z ^ (z >> 31)


cdef inline uint64_t _stream_state(uint64_t seed, uint64_t node, uint64_t walker) noexcept:
    cdef uint64_t s = _mix(seed)
    s = _mix(s ^ (node * MIX1))
    s = _mix(s ^ (walker * MIX2))
    return s


cdef inline uint64_t _next_u64(uint64_t* state) noexcept:
    state[0] = state[0] + GAMMA
    cdef uint64_t z = state[0]
    z = (z ^ (z >> 30)) * MIX1
    z = (z ^ (z >> 27)) * MIX2
    return z ^ (z >> 31)


cdef inline uint64_t _bounded(uint64_t* state, uint64_t bound) noexcept:
    cdef uint64_t threshold = (0 - bound) % bound  # 2**64 mod bound
    cdef uint64_t r
    while True:
        r = _next_u64(state)
        if r >= threshold:
            return r % bound


def stream_state(seed, node, walker):
    """Initial RNG state for the (node, walker) stream (for tests)."""
    return _stream_state(<uint64_t>seed, <uint64_t>node, <uint64_t>walker)


def walk_deposits(indptr, indices, walk_data, num_walkers, p_halt, l_max, seed,
                  coeffs, reweight):
    """See ``_walk_py.walk_deposits``."""
    cdef int64_t[::1] ip = np.ascontiguousarray(indptr, dtype=np.int64)
    cdef int64_t[::1] idx = np.ascontiguousarray(indices, dtype=np.int64)
    cdef double[::1] wdat = np.ascontiguousarray(walk_data, dtype=np.float64)

    cdef Py_ssize_t num_nodes = ip.shape[0] - 1
    cdef bint fused = coeffs is not None
    cdef Py_ssize_t n_levels = 1 if fused else l_max + 1
    cdef double[::1] cf
    if fused:
        cf = np.ascontiguousarray(coeffs, dtype=np.float64)
    else:
        cf = np.empty(0, dtype=np.float64)

    cdef int n = num_walkers
    cdef int lmax = l_max
    cdef double p = p_halt
    cdef double inv_keep = 1.0 - p
    cdef uint64_t seed64 = <uint64_t>seed
    cdef bint rew = reweight

    stamp_arr = np.zeros(num_nodes, dtype=np.int64)
    acc_arr = np.zeros((n_levels, num_nodes), dtype=np.float64)
    touched_arr = np.empty(min(num_nodes, n * (lmax + 1)), dtype=np.int64)
    cdef int64_t[::1] stamp = stamp_arr
    cdef double[:, ::1] acc = acc_arr
    cdef int64_t[::1] touched = touched_arr

    cdef Py_ssize_t cap = max(16, 4 * num_nodes)
    cols_arr = np.empty(cap, dtype=np.int64)
    vals_arr = np.empty((n_levels, cap), dtype=np.float64)
    indptr_arr = np.zeros(num_nodes + 1, dtype=np.int64)
    cdef int64_t[::1] out_cols = cols_arr
    cdef double[:, ::1] out_vals = vals_arr
    cdef int64_t[::1] out_indptr = indptr_arr
    cdef Py_ssize_t pos = 0

    cdef Py_ssize_t i, t, ntouched
    cdef int w, l
    cdef int64_t mark, cur, col, deg, edge
    cdef Py_ssize_t r
    cdef uint64_t state, k, z
    cdef double load, val

    for i in range(num_nodes):
        mark = i + 1
        ntouched = 0
        for w in range(n):
            state = _stream_state(seed64, <uint64_t>i, <uint64_t>w)
            cur = i
            load = 1.0
            for l in range(lmax + 1):
                val = load * cf[l] if fused else load
                if val != 0.0:
                    if stamp[cur] != mark:
                        stamp[cur] = mark
                        touched[ntouched] = cur
                        ntouched += 1
                        for r in range(n_levels):
                            acc[r, cur] = 0.0
                    acc[0 if fused else l, cur] += val
                if l == lmax:
                    break
                deg = ip[cur + 1] - ip[cur]
                if deg == 0:
                    break
                k = _bounded(&state, <uint64_t>deg)
                edge = ip[cur] + <int64_t>k
                if rew:
                    load = load * (deg / inv_keep) * wdat[edge]
                else:
                    load = load * wdat[edge]
                if not isfinite(load):
                    raise FloatingPointError(
                        f"non-finite walk load at node {i}, walker {w}"
                    )
                cur = idx[edge]
                if load == 0.0:
                    break
                z = _next_u64(&state)
                if (z >> 11) * INV_2_53 < p:
                    break
        if pos + ntouched > cap:
            while cap < pos + ntouched:
                cap *= 2
            new_cols = np.empty(cap, dtype=np.int64)
            new_cols[:pos] = cols_arr[:pos]
            cols_arr = new_cols
            new_vals = np.empty((n_levels, cap), dtype=np.float64)
            new_vals[:, :pos] = vals_arr[:, :pos]
            vals_arr = new_vals
            out_cols = cols_arr
            out_vals = vals_arr
        for t in range(ntouched):
            col = touched[t]
            out_cols[pos] = col
            for r in range(n_levels):
                out_vals[r, pos] = acc[r, col] / n
            pos += 1
        out_indptr[i + 1] = pos

    return indptr_arr, cols_arr[:pos].copy(), vals_arr[:, :pos].copy()
