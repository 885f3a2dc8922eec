# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops. Every function here has a numpy twin in
:mod:`asl._kernels_py` with an identical signature and identical results."""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, floor, INFINITY

cnp.import_array()

cdef double BIG = 1e20


cdef void _envelope_1d(double* f, double* d, Py_ssize_t n, Py_ssize_t stride,
                       int* v, double* z, double* tmp) noexcept nogil:
    # Felzenszwalb-Huttenlocher lower envelope of parabolas (i - q)^2 + f[q]
    cdef Py_ssize_t q, k = 0, i
    cdef double s
    for i in range(n):
        tmp[i] = f[i * stride]
    v[0] = 0
    z[0] = -INFINITY
    z[1] = INFINITY
    for q in range(1, n):
        s = ((tmp[q] + q * q) - (tmp[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k])
        while s <= z[k]:
            k -= 1
            s = ((tmp[q] + q * q) - (tmp[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k])
        k += 1
        v[k] = q
        z[k] = s
        z[k + 1] = INFINITY
    k = 0
    for i in range(n):
        while z[k + 1] < i:
            k += 1
        d[i * stride] = (i - v[k]) * (i - v[k]) + tmp[v[k]]


def edt_sq(const cnp.uint8_t[:, ::1] feature):
    """Squared Euclidean distance from every pixel to the nearest feature pixel."""
    cdef Py_ssize_t nx = feature.shape[0], ny = feature.shape[1]
    cdef Py_ssize_t i, j, m = max(nx, ny)
    out = np.empty((nx, ny), dtype=np.float64)
    cdef double[:, ::1] g = out
    cdef int[::1] v = np.empty(m, dtype=np.intc)
    cdef double[::1] z = np.empty(m + 1, dtype=np.float64)
    cdef double[::1] tmp = np.empty(m, dtype=np.float64)
    for i in range(nx):
        for j in range(ny):
            g[i, j] = 0.0 if feature[i, j] else BIG
    with nogil:
        for j in range(ny):
            _envelope_1d(&g[0, j], &g[0, j], nx, ny, &v[0], &z[0], &tmp[0])
        for i in range(nx):
            _envelope_1d(&g[i, 0], &g[i, 0], ny, 1, &v[0], &z[0], &tmp[0])
    return out


def block_oscillation(const double[:, ::1] values, Py_ssize_t side):
    """Per-block mean and mean absolute deviation over ``side``-cell blocks."""
    cdef Py_ssize_t nx = values.shape[0], ny = values.shape[1]
    cdef Py_ssize_t bx = nx // side, by = ny // side
    cdef Py_ssize_t a, b, i, j
    cdef double s, area = <double>(side * side)
    means_arr = np.empty((bx, by), dtype=np.float64)
    osc_arr = np.empty((bx, by), dtype=np.float64)
    cdef double[:, ::1] means = means_arr
    cdef double[:, ::1] osc = osc_arr
    with nogil:
        for a in range(bx):
            for b in range(by):
                s = 0.0
                for i in range(a * side, (a + 1) * side):
                    for j in range(b * side, (b + 1) * side):
                        s += values[i, j]
                s /= area
                means[a, b] = s
        for a in range(bx):
            for b in range(by):
                s = 0.0
                for i in range(a * side, (a + 1) * side):
                    for j in range(b * side, (b + 1) * side):
                        s += fabs(values[i, j] - means[a, b])
                osc[a, b] = s / area
    return means_arr, osc_arr


def bilinear_sample(const double[:, ::1] values, double length,
                    const double[::1] xs, const double[::1] ys):
    """Periodic bilinear interpolation of grid samples at (xs, ys)."""
    cdef Py_ssize_t n = values.shape[0], m = xs.shape[0], k
    cdef Py_ssize_t i0, j0, i1, j1
    cdef double h = length / n, u, w, fx, fy, a, b
    out = np.empty(m, dtype=np.float64)
    cdef double[::1] res = out
    with nogil:
        for k in range(m):
            u = xs[k] / h
            w = ys[k] / h
            fx = floor(u)
            fy = floor(w)
            u -= fx
            w -= fy
            i0 = (<Py_ssize_t>fx) % n
            j0 = (<Py_ssize_t>fy) % n
            if i0 < 0:
                i0 += n
            if j0 < 0:
                j0 += n
            i1 = (i0 + 1) % n
            j1 = (j0 + 1) % n
            # difference form: exact on constants
            a = values[i0, j0] + u * (values[i1, j0] - values[i0, j0])
            b = values[i0, j1] + u * (values[i1, j1] - values[i0, j1])
            res[k] = a + w * (b - a)
    return out


cdef inline long long _gap(long long a0, long long a1, long long b0, long long b1) noexcept nogil:
    if a1 < b0:
        return b0 - a1
    if b1 < a0:
        return a0 - b1
    return 0


def nearest_cubes(const long long[:, ::1] targets, const long long[:, ::1] pool):
    """For each target cube (level, ax, ay) the index of the closest pool cube
    whose level is at least the target's. Ties in the gap distance go to the
    nearer center, then to the lexicographically smallest (level, ax, ay).
    -1 when no pool cube is large enough."""
    cdef Py_ssize_t m = targets.shape[0], k = pool.shape[0], a, b, best
    cdef long long lt, sx0, sx1, sy0, sy1, lp, px0, px1, py0, py1, gx, gy, d2, bd2
    cdef long long cx, cy, c2, bc2
    out = np.full(m, -1, dtype=np.int64)
    cdef long long[::1] res = out
    with nogil:
        for a in range(m):
            lt = targets[a, 0]
            sx0 = targets[a, 1]
            sy0 = targets[a, 2]
            sx1 = sx0 + (1LL << lt)
            sy1 = sy0 + (1LL << lt)
            best = -1
            bd2 = 0
            bc2 = 0
            for b in range(k):
                lp = pool[b, 0]
                if lp < lt:
                    continue
                px0 = pool[b, 1]
                py0 = pool[b, 2]
                px1 = px0 + (1LL << lp)
                py1 = py0 + (1LL << lp)
                gx = _gap(sx0, sx1, px0, px1)
                gy = _gap(sy0, sy1, py0, py1)
                d2 = gx * gx + gy * gy
                # doubled center offsets keep everything integral
                cx = (px0 + px1) - (sx0 + sx1)
                cy = (py0 + py1) - (sy0 + sy1)
                c2 = cx * cx + cy * cy
                if best < 0 or d2 < bd2 or (d2 == bd2 and (c2 < bc2 or (c2 == bc2 and (
                        lp < pool[best, 0]
                        or (lp == pool[best, 0] and (px0 < pool[best, 1]
                            or (px0 == pool[best, 1] and py0 < pool[best, 2]))))))):
                    best = b
                    bd2 = d2
                    bc2 = c2
            res[a] = best
    return out
