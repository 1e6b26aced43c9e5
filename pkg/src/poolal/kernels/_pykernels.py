"""NumPy implementations of the selection kernels (fallback backend)."""

import numpy as np


def _sqdist_to(x, c):
    diff = x - c
    return np.einsum("ij,ij->i", diff, diff)


def min_sqdist(x, centers):
    out = np.full(x.shape[0], np.inf)
    for c in centers:
        np.minimum(out, _sqdist_to(x, c), out=out)
    return out


def kcenter_greedy(x, min_sq, k):
    picks = np.empty(k, dtype=np.int64)
    for step in range(k):
        best = int(np.argmax(min_sq))
        picks[step] = best
        min_sq[best] = -1.0
        live = min_sq > 0.0
        d = _sqdist_to(x[live], x[best])
        min_sq[live] = np.minimum(min_sq[live], d)
    return picks


def kmeanspp_seed(x, k, uniforms):
    n = x.shape[0]
    min_sq = np.full(n, np.inf)
    picked = np.zeros(n, dtype=bool)
    picks = np.empty(k, dtype=np.int64)
    for step in range(k):
        total = 0.0
        if step > 0:
            cum = np.cumsum(min_sq)
            total = cum[-1]
        if total > 0.0:
            target = uniforms[step] * total
            positive = np.flatnonzero(min_sq > 0.0)
            hit = positive[cum[positive] > target]
            chosen = int(hit[0]) if hit.size else int(positive[-1])
        else:
            remaining = n - step
            m = min(int(uniforms[step] * remaining), remaining - 1)
            chosen = int(np.flatnonzero(~picked)[m])
        picks[step] = chosen
        picked[chosen] = True
        min_sq[chosen] = 0.0
        live = ~picked
        np.minimum(min_sq, np.where(live, _sqdist_to(x, x[chosen]), 0.0), out=min_sq)
    return picks
