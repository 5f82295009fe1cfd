"""Pure-Python walk kernel: reference implementation of the feature sampler.

This module is the executable definition of the sampling algorithm.  The
compiled kernel in ``_walk_cy.pyx`` mirrors it statement by statement and
must produce bit-identical output; ``tests/test_backends.py`` enforces that.

The sampler simulates, for every node ``i``, ``n`` independent random walks
on the graph.  A walk starts at ``i`` with ``load = 1`` and, at each length
``l = 0, 1, ..., l_max``, deposits ``load * f_l`` (fused mode) or ``load``
(per-length mode) into the running feature row at the walk's current node.
After depositing, the walk steps to a uniformly-chosen neighbour, rescales
the load by ``d[cur] / (1 - p_halt) * walk[cur, next]`` (the importance
weight; the ad-hoc variant keeps only ``walk[cur, next]``), and halts with
probability ``p_halt``.  Rows are normalised by ``n``.

Randomness comes from a splitmix64 counter stream derived from
``(seed, node, walker)``, so the output is independent of iteration order
and identical across backends.  All floating-point operations are IEEE
doubles evaluated in a fixed order.
"""

from __future__ import annotations

import math

import numpy as np

_MASK = 0xFFFFFFFFFFFFFFFF
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_INV_2_53 = 1.0 / 9007199254740992.0  # 2 ** -53


def _mix(z: int) -> int:
    """splitmix64 finalizer (one stream step applied to ``z``)."""
    z = (z + _GAMMA) & _MASK
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK
    return z ^ (z >> 31)


def stream_state(seed: int, node: int, walker: int) -> int:
    """Initial RNG state for the (node, walker) stream."""
    s = _mix(seed & _MASK)
    s = _mix(s ^ ((node * _MIX1) & _MASK))
    s = _mix(s ^ ((walker * _MIX2) & _MASK))
    return s


def _next_u64(state: int) -> tuple[int, int]:
    state = (state + _GAMMA) & _MASK
    z = state
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK
    return state, z ^ (z >> 31)


def _bounded(state: int, bound: int) -> tuple[int, int]:
    """Exactly uniform draw in [0, bound) via rejection of the biased tail."""
    threshold = ((1 << 64) - bound) % bound  # == 2**64 mod bound
    while True:
        state, r = _next_u64(state)
        if r >= threshold:
            return state, r % bound


def walk_deposits(
    indptr,
    indices,
    walk_data,
    num_walkers: int,
    p_halt: float,
    l_max: int,
    seed: int,
    coeffs,
    reweight: bool,
):
    """Run the sampler over all nodes and return CSR-style deposit arrays.

    Parameters
    ----------
    indptr, indices : int64 arrays
        Adjacency structure of the graph (both edge directions stored).
    walk_data : float64 array
        Walk-matrix entries aligned with ``indices``.
    coeffs : float64 array of length l_max + 1, or None
        Fused mode when given (deposits are ``load * coeffs[l]`` and the
        output value block has a single row); per-length mode when None
        (deposits are raw loads, one output row per walk length).
    reweight : bool
        True for the importance-weighted estimator, False for the ad-hoc
        variant that skips the ``d / (1 - p_halt)`` factor.

    Returns
    -------
    (out_indptr, out_cols, out_vals)
        ``out_vals`` has shape ``(1, nnz)`` fused or ``(l_max + 1, nnz)``
        per-length.  Columns within a row are in first-touch order; the
        caller sorts them.  Values are already divided by ``num_walkers``.
    """
    num_nodes = len(indptr) - 1
    n_levels = 1 if coeffs is not None else l_max + 1
    fused = coeffs is not None
    cf = [float(c) for c in coeffs] if fused else None

    stamp = np.zeros(num_nodes, dtype=np.int64)
    acc = np.zeros((n_levels, num_nodes), dtype=np.float64)
    touched = np.empty(min(num_nodes, num_walkers * (l_max + 1)), dtype=np.int64)

    cap = max(16, 4 * num_nodes)
    out_cols = np.empty(cap, dtype=np.int64)
    out_vals = np.empty((n_levels, cap), dtype=np.float64)
    out_indptr = np.zeros(num_nodes + 1, dtype=np.int64)
    pos = 0

    inv_keep = 1.0 - p_halt

    for i in range(num_nodes):
        mark = i + 1
        ntouched = 0
        for w in range(num_walkers):
            state = stream_state(seed, i, w)
            cur = i
            load = 1.0
            for l in range(l_max + 1):
                val = load * cf[l] if fused else load
                if val != 0.0:
                    if stamp[cur] != mark:
                        stamp[cur] = mark
                        touched[ntouched] = cur
                        ntouched += 1
                        for r in range(n_levels):
                            acc[r, cur] = 0.0
                    row = 0 if fused else l
                    acc[row, cur] += val
                if l == l_max:
                    break
                deg = int(indptr[cur + 1] - indptr[cur])
                if deg == 0:
                    break
                state, k = _bounded(state, deg)
                edge = indptr[cur] + k
                if reweight:
                    load = load * (deg / inv_keep) * float(walk_data[edge])
                else:
                    load = load * float(walk_data[edge])
                if not math.isfinite(load):
                    raise FloatingPointError(
                        f"non-finite walk load at node {i}, walker {w}"
                    )
                cur = int(indices[edge])
                if load == 0.0:
                    break
                state, z = _next_u64(state)
                if (z >> 11) * _INV_2_53 < p_halt:
                    break
        if pos + ntouched > cap:
            while cap < pos + ntouched:
                cap *= 2
            out_cols = np.concatenate([out_cols, np.empty(cap - len(out_cols), np.int64)])
            grown = np.empty((n_levels, cap), dtype=np.float64)
            grown[:, :pos] = out_vals[:, :pos]
            out_vals = grown
        for t in range(ntouched):
            col = touched[t]
            out_cols[pos] = col
            for r in range(n_levels):
                out_vals[r, pos] = acc[r, col] / num_walkers
            pos += 1
        out_indptr[i + 1] = pos

    return out_indptr, out_cols[:pos].copy(), out_vals[:, :pos].copy()
