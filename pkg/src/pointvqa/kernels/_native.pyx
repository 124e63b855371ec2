# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled sampling/grouping kernels.

Semantics match kernels/_fallback.py index-for-index; the test suite
cross-checks both implementations on random inputs.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def farthest_point_sample(points, long m):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] pts = np.ascontiguousarray(points, dtype=np.float64)
    cdef long n = pts.shape[0]
    if m < 1 or m > n:
        raise ValueError(f"need 1 <= m <= {n}, got m={m}")
    cdef cnp.ndarray[cnp.int64_t, ndim=1] selected = np.empty(m, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] dist = np.empty(n, dtype=np.float64)
    cdef long i, j, best, cur
    cdef double d, dx, dy, dz, bestd
    selected[0] = 0
    cur = 0
    for j in range(n):
        dx = pts[j, 0] - pts[0, 0]
        dy = pts[j, 1] - pts[0, 1]
        dz = pts[j, 2] - pts[0, 2]
        dist[j] = dx * dx + dy * dy + dz * dz
    for i in range(1, m):
        best = 0
        bestd = dist[0]
        for j in range(1, n):
            if dist[j] > bestd:
                bestd = dist[j]
                best = j
        selected[i] = best
        for j in range(n):
            dx = pts[j, 0] - pts[best, 0]
            dy = pts[j, 1] - pts[best, 1]
            dz = pts[j, 2] - pts[best, 2]
            d = dx * dx + dy * dy + dz * dz
            if d < dist[j]:
                dist[j] = d
    return selected


def ball_query(points, centers, double radius, long nsample):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] pts = np.ascontiguousarray(points, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] ctrs = np.ascontiguousarray(
        np.atleast_2d(centers), dtype=np.float64)
    if radius <= 0:
        raise ValueError("radius must be positive")
    cdef long n = pts.shape[0]
    cdef long c = ctrs.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=2] out = np.empty((c, nsample), dtype=np.int64)
    # bounded selection buffer of the nsample nearest in-radius points,
    # kept sorted by (distance, index); candidates arrive in index order,
    # so using strict < when shifting preserves the stable tie order
    cdef cnp.ndarray[cnp.float64_t, ndim=1] best_d = np.empty(nsample, dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] best_i = np.empty(nsample, dtype=np.int64)
    cdef double r2 = radius * radius
    cdef long ci, j, k, pos, cnt, fill, nearest
    cdef double dx, dy, dz, d, nearest_d
    for ci in range(c):
        cnt = 0
        nearest = 0
        nearest_d = -1.0
        for j in range(n):
            dx = pts[j, 0] - ctrs[ci, 0]
            dy = pts[j, 1] - ctrs[ci, 1]
            dz = pts[j, 2] - ctrs[ci, 2]
            d = dx * dx + dy * dy + dz * dz
            if nearest_d < 0 or d < nearest_d:
                nearest_d = d
                nearest = j
            if d >= r2:
                continue
            if cnt < nsample:
                pos = cnt
                cnt += 1
            elif d < best_d[nsample - 1]:
                pos = nsample - 1
            else:
                continue
            while pos > 0 and best_d[pos - 1] > d:
                best_d[pos] = best_d[pos - 1]
                best_i[pos] = best_i[pos - 1]
                pos -= 1
            best_d[pos] = d
            best_i[pos] = j
        if cnt == 0:
            best_i[0] = nearest
            cnt = 1
        for k in range(cnt):
            out[ci, k] = best_i[k]
        fill = best_i[0]
        for k in range(cnt, nsample):
            out[ci, k] = fill
    return out
