# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: exact kNN, nearest-neighbour search, FPS, z-buffer splat.

Arithmetic order matches ``_kernels_py`` so both backends agree bit for bit.
Build with ``-ffp-contract=off``; fused multiply-adds would break that.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY

cnp.import_array()


cdef inline double _sq(const double[:, ::1] a, Py_ssize_t i,
                       const double[:, ::1] b, Py_ssize_t j, Py_ssize_t dim) noexcept nogil:
    cdef double s = 0.0, d
    cdef Py_ssize_t c
    for c in range(dim):
        d = a[i, c] - b[j, c]
        s += d * d
    return s


def sqdist(const double[:, ::1] q, const double[:, ::1] ref):
    cdef Py_ssize_t m = q.shape[0], n = ref.shape[0], dim = q.shape[1], i, j
    out = np.empty((m, n))
    cdef double[:, ::1] o = out
    with nogil:
        for i in range(m):
            for j in range(n):
                o[i, j] = _sq(q, i, ref, j, dim)
    return out


def knn(const double[:, ::1] query, const double[:, ::1] ref, Py_ssize_t k):
    cdef Py_ssize_t m = query.shape[0], n = ref.shape[0], dim = query.shape[1]
    cdef Py_ssize_t i, j, p
    cdef double d
    out = np.empty((m, k), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] o = out
    bd_arr = np.empty(k)
    cdef double[::1] bd = bd_arr
    with nogil:
        for i in range(m):
            for p in range(k):
                bd[p] = INFINITY
                o[i, p] = -1
            for j in range(n):
                d = _sq(query, i, ref, j, dim)
                # strict comparison keeps the earlier (lower) index on ties
                if d >= bd[k - 1] and o[i, k - 1] >= 0:
                    continue
                p = k - 1
                while p > 0 and (o[i, p - 1] < 0 or d < bd[p - 1]):
                    bd[p] = bd[p - 1]
                    o[i, p] = o[i, p - 1]
                    p -= 1
                bd[p] = d
                o[i, p] = j
    return out


def nn_search(const double[:, ::1] query, const double[:, ::1] ref):
    cdef Py_ssize_t m = query.shape[0], n = ref.shape[0], dim = query.shape[1]
    cdef Py_ssize_t i, j, bj
    cdef double d, bd
    best = np.empty(m)
    idx = np.empty(m, dtype=np.int64)
    cdef double[::1] b = best
    cdef cnp.int64_t[::1] ix = idx
    with nogil:
        for i in range(m):
            bd = INFINITY
            bj = 0
            for j in range(n):
                d = _sq(query, i, ref, j, dim)
                if d < bd:
                    bd = d
                    bj = j
            b[i] = bd
            ix[i] = bj
    return best, idx


def fps(const double[:, ::1] points, Py_ssize_t m):
    cdef Py_ssize_t n = points.shape[0], dim = points.shape[1]
    cdef Py_ssize_t i, j, cur = 0, best
    cdef double d, bd
    out = np.empty(m, dtype=np.int64)
    cdef cnp.int64_t[::1] o = out
    mind_arr = np.full(n, np.inf)
    cdef double[::1] mind = mind_arr
    with nogil:
        for i in range(m):
            o[i] = cur
            best = 0
            bd = -INFINITY
            for j in range(n):
                d = _sq(points, j, points, cur, dim)
                if d < mind[j]:
                    mind[j] = d
                if j == cur:
                    mind[j] = -1.0
                if mind[j] > bd:
                    bd = mind[j]
                    best = j
            cur = best
    return out


def splat_min(const cnp.int64_t[::1] rows, const cnp.int64_t[::1] cols,
              const double[::1] depth, Py_ssize_t height, Py_ssize_t width,
              Py_ssize_t radius):
    cdef Py_ssize_t n = rows.shape[0], i, r, c, dr, dc
    out = np.full((height, width), np.inf)
    cdef double[:, ::1] o = out
    with nogil:
        for i in range(n):
            for dr in range(-radius, radius + 1):
                r = rows[i] + dr
                if r < 0 or r >= height:
                    continue
                for dc in range(-radius, radius + 1):
                    c = cols[i] + dc
                    if c < 0 or c >= width:
                        continue
                    if depth[i] < o[r, c]:
                        o[r, c] = depth[i]
        for r in range(height):
            for c in range(width):
                if o[r, c] == INFINITY:
                    o[r, c] = 0.0
    return out
