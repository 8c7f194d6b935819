# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled core: fused Gram assembly and farthest-point sampling.

Same contract as ``numpy_impl``; selected at import by ``_backend``.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, sqrt, INFINITY

cnp.import_array()

NAME = "compiled"

DEF K_RBF = 0
DEF K_MATERN32 = 1
DEF K_MATERN12 = 2

RBF = K_RBF
MATERN32 = K_MATERN32
MATERN12 = K_MATERN12

cdef double SQRT3 = sqrt(3.0)


cdef inline double _sqdist(const double[:, ::1] A, Py_ssize_t i,
                           const double[:, ::1] B, Py_ssize_t j,
                           Py_ssize_t d) nogil:
    cdef double s = 0.0, t
    cdef Py_ssize_t m
    for m in range(d):
        t = A[i, m] - B[j, m]
        s += t * t
    return s


cdef inline double _base(int code, double d2, double l) nogil:
    cdef double a
    if code == K_RBF:
        return exp(-d2 / (l * l))
    elif code == K_MATERN32:
        a = SQRT3 * sqrt(d2) / l
        return (1.0 + a) * exp(-a)
    else:
        return exp(-sqrt(d2) / l)


def base_matrix(int code, double lengthscale, X, Y=None):
    """Base correlation matrix c(x_i, y_j) for one kernel family."""
    cdef double[:, ::1] A = np.ascontiguousarray(X, dtype=np.float64)
    cdef double[:, ::1] B
    cdef Py_ssize_t n = A.shape[0], d = A.shape[1]
    cdef Py_ssize_t i, j, m2
    cdef double v
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out
    if Y is None:
        out = np.empty((n, n), dtype=np.float64)
        with nogil:
            for i in range(n):
                out[i, i] = 1.0
                for j in range(i + 1, n):
                    v = _base(code, _sqdist(A, i, A, j, d), lengthscale)
                    out[i, j] = v
                    out[j, i] = v
        return out
    B = np.ascontiguousarray(Y, dtype=np.float64)
    m2 = B.shape[0]
    out = np.empty((n, m2), dtype=np.float64)
    with nogil:
        for i in range(n):
            for j in range(m2):
                out[i, j] = _base(code, _sqdist(A, i, B, j, d), lengthscale)
    return out


def base_and_dl(int code, double lengthscale, X):
    """Base matrix plus its entrywise derivative w.r.t. the lengthscale."""
    cdef double[:, ::1] A = np.ascontiguousarray(X, dtype=np.float64)
    cdef Py_ssize_t n = A.shape[0], d = A.shape[1]
    cdef Py_ssize_t i, j
    cdef double l = lengthscale, d2, dd, e, c, g
    cdef cnp.ndarray[cnp.float64_t, ndim=2] C = np.empty((n, n), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] dC = np.empty((n, n), dtype=np.float64)
    with nogil:
        for i in range(n):
            C[i, i] = 1.0
            dC[i, i] = 0.0
            for j in range(i + 1, n):
                d2 = _sqdist(A, i, A, j, d)
                if code == K_RBF:
                    c = exp(-d2 / (l * l))
                    g = c * (2.0 * d2 / (l * l * l))
                elif code == K_MATERN32:
                    dd = sqrt(d2)
                    e = exp(-SQRT3 * dd / l)
                    c = (1.0 + SQRT3 * dd / l) * e
                    g = (3.0 * d2 / (l * l * l)) * e
                else:
                    dd = sqrt(d2)
                    c = exp(-dd / l)
                    g = c * (dd / (l * l))
                C[i, j] = c
                C[j, i] = c
                dC[i, j] = g
                dC[j, i] = g
    return C, dC


def fps(X, Py_ssize_t k):
    """Greedy max-min design: start nearest the centroid, ties to the
    lowest index. Returns (indices, max-of-min distance per step)."""
    cdef double[:, ::1] A = np.ascontiguousarray(X, dtype=np.float64)
    cdef Py_ssize_t n = A.shape[0], d = A.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] cen = np.asarray(X, dtype=np.float64).mean(axis=0)
    cdef double[::1] c = cen
    cdef cnp.ndarray[cnp.int64_t, ndim=1] indices = np.empty(k, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] trace = np.empty(k, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] dist = np.full(n, np.inf)
    cdef double[::1] dv = dist
    cdef Py_ssize_t i, m, last, step
    cdef double best, s, t
    with nogil:
        last = 0
        best = INFINITY
        for i in range(n):
            s = 0.0
            for m in range(d):
                t = A[i, m] - c[m]
                s += t * t
            if s < best:
                best = s
                last = i
        indices[0] = last
        trace[0] = INFINITY
        for step in range(1, k):
            for i in range(n):
                s = sqrt(_sqdist(A, i, A, last, d))
                if s < dv[i]:
                    dv[i] = s
            best = -1.0
            last = 0
            for i in range(n):
                if dv[i] > best:
                    best = dv[i]
                    last = i
            indices[step] = last
            trace[step] = best
    return indices, trace
