# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled selection kernels. Semantics mirror ``_pykernels`` exactly."""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY

cnp.import_array()


cdef inline double _sqdist(const double[:, ::1] x, Py_ssize_t i, const double[::1] c) noexcept nogil:
    cdef Py_ssize_t j
    cdef double acc = 0.0, t
    for j in range(x.shape[1]):
        t = x[i, j] - c[j]
        acc += t * t
    return acc


def min_sqdist(const double[:, ::1] x, const double[:, ::1] centers):
    cdef Py_ssize_t n = x.shape[0], m = centers.shape[0], i, r
    cdef cnp.ndarray[double, ndim=1] out_arr = np.full(n, np.inf)
    cdef double[::1] out = out_arr
    cdef double d
    with nogil:
        for r in range(m):
            for i in range(n):
                d = _sqdist(x, i, centers[r])
                if d < out[i]:
                    out[i] = d
    return out_arr


def kcenter_greedy(const double[:, ::1] x, double[::1] min_sq, Py_ssize_t k):
    cdef Py_ssize_t n = x.shape[0], i, step, best
    cdef double bestv, d
    cdef cnp.ndarray[cnp.int64_t, ndim=1] picks_arr = np.empty(k, dtype=np.int64)
    cdef cnp.int64_t[::1] picks = picks_arr
    with nogil:
        for step in range(k):
            best = -1
            bestv = -INFINITY
            for i in range(n):
                if min_sq[i] > bestv:
                    bestv = min_sq[i]
                    best = i
            picks[step] = best
            min_sq[best] = -1.0
            for i in range(n):
                if min_sq[i] > 0.0:
                    d = _sqdist(x, i, x[best])
                    if d < min_sq[i]:
                        min_sq[i] = d
    return picks_arr


def kmeanspp_seed(const double[:, ::1] x, Py_ssize_t k, const double[::1] uniforms):
    cdef Py_ssize_t n = x.shape[0], i, step, chosen, m, remaining
    cdef double total, target, cum, d
    cdef cnp.ndarray[double, ndim=1] min_arr = np.full(n, np.inf)
    cdef double[::1] min_sq = min_arr
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] picked_arr = np.zeros(n, dtype=np.uint8)
    cdef cnp.uint8_t[::1] picked = picked_arr
    cdef cnp.ndarray[cnp.int64_t, ndim=1] picks_arr = np.empty(k, dtype=np.int64)
    cdef cnp.int64_t[::1] picks = picks_arr
    with nogil:
        for step in range(k):
            chosen = -1
            remaining = n - step
            if step == 0:
                total = 0.0
            else:
                total = 0.0
                for i in range(n):
                    total += min_sq[i]
            if total > 0.0:
                target = uniforms[step] * total
                cum = 0.0
                for i in range(n):
                    cum += min_sq[i]
                    if min_sq[i] > 0.0:
                        chosen = i
                        if cum > target:
                            break
            else:
                m = <Py_ssize_t>(uniforms[step] * remaining)
                if m >= remaining:
                    m = remaining - 1
                for i in range(n):
                    if not picked[i]:
                        if m == 0:
                            chosen = i
                            break
                        m -= 1
            picks[step] = chosen
            picked[chosen] = 1
            min_sq[chosen] = 0.0
            for i in range(n):
                if not picked[i]:
                    d = _sqdist(x, i, x[chosen])
                    if d < min_sq[i]:
                        min_sq[i] = d
    return picks_arr
