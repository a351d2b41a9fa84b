"""Numba kernels for the sequential sparse sweeps.

All kernels operate on CSR arrays with sorted, duplicate-free column
indices and are deterministic (no threading).
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def ilu0_factor(n, indptr, indices, data, diag_pos):  # pragma: no cover - jitted
    """In-place ILU(0) on the CSR pattern; returns the zero-pivot row or -1."""
    colpos = np.full(n, -1, np.int64)
    for i in range(n):
        for idx in range(indptr[i], indptr[i + 1]):
            colpos[indices[idx]] = idx
        for idx in range(indptr[i], indptr[i + 1]):
            k = indices[idx]
            if k >= i:
                break
            piv = data[diag_pos[k]]
            if piv == 0.0:
                return k
            lik = data[idx] / piv
            data[idx] = lik
            for idx2 in range(diag_pos[k] + 1, indptr[k + 1]):
                pos = colpos[indices[idx2]]
                if pos >= 0:
                    data[pos] -= lik * data[idx2]
        if data[diag_pos[i]] == 0.0:
            return i
        for idx in range(indptr[i], indptr[i + 1]):
            colpos[indices[idx]] = -1
    return -1


@njit(cache=True)
def ilu0_solve(n, indptr, indices, data, diag_pos, b, x):  # pragma: no cover
    """Solve L U x = b for unit-lower L / upper U stored in one CSR."""
    for i in range(n):
        s = b[i]
        for idx in range(indptr[i], diag_pos[i]):
            s -= data[idx] * x[indices[idx]]
        x[i] = s
    for i in range(n - 1, -1, -1):
        s = x[i]
        for idx in range(diag_pos[i] + 1, indptr[i + 1]):
            s -= data[idx] * x[indices[idx]]
        x[i] = s / data[diag_pos[i]]


@njit(cache=True)
def gauss_seidel_forward(n, indptr, indices, data, diag_pos, x, b):  # pragma: no cover
    """One forward Gauss-Seidel sweep on A x = b, updating x in place."""
    for i in range(n):
        s = b[i]
        for idx in range(indptr[i], indptr[i + 1]):
            j = indices[idx]
            if j != i:
                s -= data[idx] * x[j]
        x[i] = s / data[diag_pos[i]]


@njit(cache=True)
def gauss_seidel_backward(n, indptr, indices, data, diag_pos, x, b):  # pragma: no cover
    """One backward Gauss-Seidel sweep on A x = b, updating x in place."""
    for i in range(n - 1, -1, -1):
        s = b[i]
        for idx in range(indptr[i], indptr[i + 1]):
            j = indices[idx]
            if j != i:
                s -= data[idx] * x[j]
        x[i] = s / data[diag_pos[i]]


@njit(cache=True)
def greedy_match(n_nodes, edge_i, edge_j, partner):  # pragma: no cover
    """Greedy matching over weight-sorted edges; partner[i] = -1 if unmatched."""
    for e in range(edge_i.shape[0]):
        i = edge_i[e]
        j = edge_j[e]
        if partner[i] == -1 and partner[j] == -1 and i != j:
            partner[i] = j
            partner[j] = i


@njit(cache=True)
def vmb_pass1(n, sptr, sind, order, agg):  # pragma: no cover
    """Seed disjoint root-plus-strong-neighbor aggregates; returns the count."""
    count = 0
    for oi in range(n):
        i = order[oi]
        if agg[i] != -1:
            continue
        free = True
        for idx in range(sptr[i], sptr[i + 1]):
            if agg[sind[idx]] != -1:
                free = False
                break
        if free:
            agg[i] = count
            for idx in range(sptr[i], sptr[i + 1]):
                agg[sind[idx]] = count
            count += 1
    return count


@njit(cache=True)
def vmb_pass2(n, sptr, sind, sval, agg, agg_out):  # pragma: no cover
    """Attach leftovers to the strongest pass-1 aggregate in reach."""
    for i in range(n):
        if agg[i] != -1:
            continue
        best = -1
        best_w = -1.0
        for idx in range(sptr[i], sptr[i + 1]):
            j = sind[idx]
            if agg[j] != -1 and sval[idx] > best_w:
                best_w = sval[idx]
                best = agg[j]
        if best != -1:
            agg_out[i] = best
