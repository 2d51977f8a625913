# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled edit-lattice kernels; mirrors _pykernels operation for operation."""

from libc.math cimport exp, log, INFINITY

import numpy as np
cimport numpy as cnp

cnp.import_array()

cdef double NEG_INF = -INFINITY


cdef inline double _lse3(double s, double d, double i) noexcept nogil:
    cdef double m = s
    if d > m:
        m = d
    if i > m:
        m = i
    if m == NEG_INF:
        return NEG_INF
    return m + log(exp(s - m) + exp(d - m) + exp(i - m))


def levenshtein(a, b):
    """Unit-cost edit distance between two id sequences."""
    cdef cnp.int32_t[::1] av = np.ascontiguousarray(a, dtype=np.int32)
    cdef cnp.int32_t[::1] bv = np.ascontiguousarray(b, dtype=np.int32)
    cdef Py_ssize_t n = av.shape[0], m = bv.shape[0]
    if n == 0:
        return m
    if m == 0:
        return n
    cdef cnp.ndarray[cnp.int64_t, ndim=1] prev_arr = np.arange(m + 1, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] cur_arr = np.zeros(m + 1, dtype=np.int64)
    cdef cnp.int64_t[::1] prev = prev_arr
    cdef cnp.int64_t[::1] cur = cur_arr
    cdef cnp.int64_t[::1] tmp
    cdef Py_ssize_t i, j
    cdef cnp.int64_t sub, dele, ins, best
    cdef cnp.int32_t ai
    with nogil:
        for i in range(1, n + 1):
            cur[0] = i
            ai = av[i - 1]
            for j in range(1, m + 1):
                sub = prev[j - 1] + (0 if ai == bv[j - 1] else 1)
                dele = prev[j] + 1
                ins = cur[j - 1] + 1
                best = sub
                if dele < best:
                    best = dele
                if ins < best:
                    best = ins
                cur[j] = best
            tmp = prev
            prev = cur
            cur = tmp
    return int(prev[m])


def lattice_logsum(logw, a, b):
    """log of the total weight of all monotone alignment paths."""
    cdef cnp.float64_t[:, ::1] w = np.ascontiguousarray(logw, dtype=np.float64)
    cdef cnp.int32_t[::1] av = np.ascontiguousarray(a, dtype=np.int32)
    cdef cnp.int32_t[::1] bv = np.ascontiguousarray(b, dtype=np.int32)
    cdef Py_ssize_t I = av.shape[0], J = bv.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] prev_arr = np.zeros(J + 1)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] cur_arr = np.zeros(J + 1)
    cdef cnp.float64_t[::1] prev = prev_arr
    cdef cnp.float64_t[::1] cur = cur_arr
    cdef cnp.float64_t[::1] tmp
    cdef Py_ssize_t i, j
    cdef cnp.int32_t ai, bj
    with nogil:
        for j in range(1, J + 1):
            prev[j] = prev[j - 1] + w[0, bv[j - 1]]
        for i in range(1, I + 1):
            ai = av[i - 1]
            cur[0] = prev[0] + w[ai, 0]
            for j in range(1, J + 1):
                bj = bv[j - 1]
                cur[j] = _lse3(prev[j - 1] + w[ai, bj],
                               prev[j] + w[ai, 0],
                               cur[j - 1] + w[0, bj])
            tmp = prev
            prev = cur
            cur = tmp
    return float(prev[J])


def lattice_best(logw, a, b):
    """log weight of the single best monotone alignment path."""
    cdef cnp.float64_t[:, ::1] w = np.ascontiguousarray(logw, dtype=np.float64)
    cdef cnp.int32_t[::1] av = np.ascontiguousarray(a, dtype=np.int32)
    cdef cnp.int32_t[::1] bv = np.ascontiguousarray(b, dtype=np.int32)
    cdef Py_ssize_t I = av.shape[0], J = bv.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] prev_arr = np.zeros(J + 1)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] cur_arr = np.zeros(J + 1)
    cdef cnp.float64_t[::1] prev = prev_arr
    cdef cnp.float64_t[::1] cur = cur_arr
    cdef cnp.float64_t[::1] tmp
    cdef Py_ssize_t i, j
    cdef cnp.int32_t ai, bj
    cdef double s, d, ins, best
    with nogil:
        for j in range(1, J + 1):
            prev[j] = prev[j - 1] + w[0, bv[j - 1]]
        for i in range(1, I + 1):
            ai = av[i - 1]
            cur[0] = prev[0] + w[ai, 0]
            for j in range(1, J + 1):
                bj = bv[j - 1]
                s = prev[j - 1] + w[ai, bj]
                d = prev[j] + w[ai, 0]
                ins = cur[j - 1] + w[0, bj]
                best = s
                if d > best:
                    best = d
                if ins > best:
                    best = ins
                cur[j] = best
            tmp = prev
            prev = cur
            cur = tmp
    return float(prev[J])


def em_accumulate(logjoint, a, b, counts):
    """Forward-backward over one pair's edit lattice; see _pykernels."""
    cdef cnp.float64_t[:, ::1] w = np.ascontiguousarray(logjoint, dtype=np.float64)
    cdef cnp.int32_t[::1] av = np.ascontiguousarray(a, dtype=np.int32)
    cdef cnp.int32_t[::1] bv = np.ascontiguousarray(b, dtype=np.int32)
    cdef cnp.float64_t[:, ::1] cv = counts
    cdef Py_ssize_t I = av.shape[0], J = bv.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] fwd_arr = np.full((I + 1, J + 1), NEG_INF)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] bwd_arr = np.full((I + 1, J + 1), NEG_INF)
    cdef cnp.float64_t[:, ::1] fwd = fwd_arr
    cdef cnp.float64_t[:, ::1] bwd = bwd_arr
    cdef Py_ssize_t i, j
    cdef cnp.int32_t ai, bj, x, y
    cdef double logz, f, lp

    with nogil:
        fwd[0, 0] = 0.0
        for j in range(1, J + 1):
            fwd[0, j] = fwd[0, j - 1] + w[0, bv[j - 1]]
        for i in range(1, I + 1):
            ai = av[i - 1]
            fwd[i, 0] = fwd[i - 1, 0] + w[ai, 0]
            for j in range(1, J + 1):
                bj = bv[j - 1]
                fwd[i, j] = _lse3(fwd[i - 1, j - 1] + w[ai, bj],
                                  fwd[i - 1, j] + w[ai, 0],
                                  fwd[i, j - 1] + w[0, bj])
        logz = fwd[I, J]

    if logz == NEG_INF:
        return NEG_INF

    with nogil:
        bwd[I, J] = 0.0
        for j in range(J - 1, -1, -1):
            bwd[I, j] = bwd[I, j + 1] + w[0, bv[j]]
        for i in range(I - 1, -1, -1):
            ai = av[i]
            bwd[i, J] = bwd[i + 1, J] + w[ai, 0]
            for j in range(J - 1, -1, -1):
                bj = bv[j]
                bwd[i, j] = _lse3(bwd[i + 1, j + 1] + w[ai, bj],
                                  bwd[i + 1, j] + w[ai, 0],
                                  bwd[i, j + 1] + w[0, bj])

        for i in range(I + 1):
            for j in range(J + 1):
                f = fwd[i, j]
                if f == NEG_INF:
                    continue
                if i < I and j < J:
                    x = av[i]
                    y = bv[j]
                    lp = f + w[x, y] + bwd[i + 1, j + 1] - logz
                    if lp > NEG_INF:
                        cv[x, y] += exp(lp)
                if i < I:
                    x = av[i]
                    lp = f + w[x, 0] + bwd[i + 1, j] - logz
                    if lp > NEG_INF:
                        cv[x, 0] += exp(lp)
                if j < J:
                    y = bv[j]
                    lp = f + w[0, y] + bwd[i, j + 1] - logz
                    if lp > NEG_INF:
                        cv[0, y] += exp(lp)
    return float(logz)
