# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the lattice kernels in ``_kernels_py``.

Node weights along the support are generated with a two-term recurrence
(two ``exp`` calls per input instead of one per node).
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, floor
from libc.stdlib cimport free, malloc

cnp.import_array()


cdef inline Py_ssize_t _clip(Py_ssize_t i, Py_ssize_t hi) nogil:
    if i < 0:
        return 0
    if i > hi:
        return hi
    return i


cdef inline Py_ssize_t _weights(double g, double dy, double sigma, double radius, double floor_val,
                                double q, double* w, Py_ssize_t width, Py_ssize_t* jlo) nogil:
    """Fill ``w`` with normalized node weights; returns the count used."""
    cdef Py_ssize_t j0 = <Py_ssize_t>floor((g - radius) / dy) + 1
    cdef double d = j0 * dy - g
    cdef double inv = 0.5 / (sigma * sigma)
    cdef double e = exp(-d * d * inv)
    cdef double r = exp(-(2.0 * d * dy + dy * dy) * inv)
    cdef double total = 0.0, v
    cdef Py_ssize_t m = 0, j
    while m < width and d < radius:
        v = e - floor_val
        if v < 0.0:
            v = 0.0
        w[m] = v
        total += v
        e *= r
        r *= q
        d += dy
        m += 1
    for j in range(m):
        w[j] /= total
    jlo[0] = j0
    return m


def channel_matrix(gvals, assoc, double dy, double sigma, double radius, Py_ssize_t first_index, Py_ssize_t n_rows):
    cdef const double[:, ::1] g = np.ascontiguousarray(np.atleast_2d(gvals), dtype=np.float64)
    cdef const double[:, ::1] p = np.ascontiguousarray(np.atleast_2d(assoc), dtype=np.float64)
    cdef Py_ssize_t n_models = g.shape[0], n_pts = g.shape[1]
    cdef Py_ssize_t width = <Py_ssize_t>floor(2.0 * radius / dy) + 2
    cdef double floor_val = exp(-0.5 * (radius / sigma) ** 2)
    cdef double q = exp(-dy * dy / (sigma * sigma))
    out_arr = np.zeros((n_rows, n_pts), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t k, n, m, count, jlo, base, last = n_rows - 1
    cdef double pk
    cdef double* w = <double*>malloc(width * sizeof(double))
    if w == NULL:
        raise MemoryError()
    try:
        with nogil:
            for k in range(n_models):
                for n in range(n_pts):
                    pk = p[k, n]
                    if pk == 0.0:
                        continue
                    count = _weights(g[k, n], dy, sigma, radius, floor_val, q, w, width, &jlo)
                    base = jlo - first_index
                    if base >= 0 and base + count <= n_rows:
                        for m in range(count):
                            out[base + m, n] += pk * w[m]
                    else:
                        for m in range(count):
                            out[_clip(base + m, last), n] += pk * w[m]
    finally:
        free(w)
    return out_arr


def smoothed_interp(c, gvals, double dy, double sigma, double radius, Py_ssize_t first_index):
    cdef const double[:, ::1] tab = np.ascontiguousarray(c, dtype=np.float64)
    cdef const double[:, ::1] g = np.ascontiguousarray(np.atleast_2d(gvals), dtype=np.float64)
    cdef Py_ssize_t n_models = g.shape[0], n_pts = g.shape[1]
    cdef Py_ssize_t last = tab.shape[0] - 1
    cdef Py_ssize_t width = <Py_ssize_t>floor(2.0 * radius / dy) + 2
    cdef double floor_val = exp(-0.5 * (radius / sigma) ** 2)
    cdef double q = exp(-dy * dy / (sigma * sigma))
    out_arr = np.empty((n_models, n_pts), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t k, n, m, count, jlo, base
    cdef double acc
    cdef double* w = <double*>malloc(width * sizeof(double))
    if w == NULL:
        raise MemoryError()
    try:
        with nogil:
            for k in range(n_models):
                for n in range(n_pts):
                    count = _weights(g[k, n], dy, sigma, radius, floor_val, q, w, width, &jlo)
                    base = jlo - first_index
                    acc = 0.0
                    if base >= 0 and base + count <= last + 1:
                        for m in range(count):
                            acc += w[m] * tab[base + m, n]
                    else:
                        for m in range(count):
                            acc += w[m] * tab[_clip(base + m, last), n]
                    out[k, n] = acc
    finally:
        free(w)
    return out_arr
