"""Compiled inner loops for block-pair similarities.

Every similarity in the package goes through :func:`pair_sims` or
:func:`neighbor_sims`, so the same pair always yields the same float no
matter which code path asked for it.
"""

import numba
import numpy as np


@numba.njit(cache=True, inline="always")
def _sim(features, a, b):
    acc = 0.0
    for k in range(features.shape[1]):
        d = features[a, k] - features[b, k]
        acc += d * d
    return 1.0 / (1.0 + np.sqrt(acc))


@numba.njit(cache=True)
def pair_sims(features, a, b):
    out = np.empty(a.shape[0])
    for n in range(a.shape[0]):
        out[n] = _sim(features, a[n], b[n])
    return out


@numba.njit(cache=True)
def neighbor_sims(features, rows, cols, oi, oj, offsets):
    """(n_pairs, n_offsets) similarities of offset-shifted pairs, NaN off-grid."""
    n = oi.shape[0]
    m = offsets.shape[0]
    out = np.full((n, m), np.nan)
    for p in range(n):
        for q in range(m):
            ra = oi[p, 0] + offsets[q, 0]
            ca = oi[p, 1] + offsets[q, 1]
            rb = oj[p, 0] + offsets[q, 0]
            cb = oj[p, 1] + offsets[q, 1]
            if 0 <= ra < rows and 0 <= ca < cols and 0 <= rb < rows and 0 <= cb < cols:
                out[p, q] = _sim(features, ra * cols + ca, rb * cols + cb)
    return out


@numba.njit(cache=True)
def neighbor_scores(features, rows, cols, oi, oj, offsets, quorum):
    """k-th largest in-grid neighbor similarity per pair, k = ceil(quorum * valid / n_offsets).

    Pairs that need zero passes score +inf.
    """
    n = oi.shape[0]
    m = offsets.shape[0]
    out = np.empty(n)
    vals = np.empty(m)
    for p in range(n):
        v = 0
        for q in range(m):
            ra = oi[p, 0] + offsets[q, 0]
            ca = oi[p, 1] + offsets[q, 1]
            rb = oj[p, 0] + offsets[q, 0]
            cb = oj[p, 1] + offsets[q, 1]
            if 0 <= ra < rows and 0 <= ca < cols and 0 <= rb < rows and 0 <= cb < cols:
                s = _sim(features, ra * cols + ca, rb * cols + cb)
                # insertion keeps vals[:v] in descending order
                k = v
                while k > 0 and vals[k - 1] < s:
                    vals[k] = vals[k - 1]
                    k -= 1
                vals[k] = s
                v += 1
        need = (quorum * v + m - 1) // m
        out[p] = np.inf if need == 0 else vals[need - 1]
    return out
