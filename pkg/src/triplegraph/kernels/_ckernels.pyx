# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled twins of ``_pykernels``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, sqrt, NAN

cnp.import_array()


def softmax_rows(const double[:, ::1] x):
    cdef Py_ssize_t n = x.shape[0], k = x.shape[1], i, j
    out_arr = np.empty((n, k))
    cdef double[:, ::1] out = out_arr
    cdef double m, s
    for i in range(n):
        m = x[i, 0]
        for j in range(1, k):
            if x[i, j] > m:
                m = x[i, j]
        s = 0.0
        for j in range(k):
            out[i, j] = exp(x[i, j] - m)
            s += out[i, j]
        for j in range(k):
            out[i, j] = out[i, j] / s
    return out_arr


def layer_norm_rows(const double[:, ::1] x, const double[::1] gain,
                    const double[::1] bias, double eps):
    cdef Py_ssize_t n = x.shape[0], k = x.shape[1], i, j
    out_arr = np.empty((n, k))
    xhat_arr = np.empty((n, k))
    rstd_arr = np.empty(n)
    cdef double[:, ::1] out = out_arr
    cdef double[:, ::1] xhat = xhat_arr
    cdef double[::1] rstd = rstd_arr
    cdef double mu, var, d, r
    for i in range(n):
        mu = 0.0
        for j in range(k):
            mu += x[i, j]
        mu /= k
        var = 0.0
        for j in range(k):
            d = x[i, j] - mu
            var += d * d
        var /= k
        r = 1.0 / sqrt(var + eps)
        rstd[i] = r
        for j in range(k):
            d = (x[i, j] - mu) * r
            xhat[i, j] = d
            out[i, j] = d * gain[j] + bias[j]
    return out_arr, xhat_arr, rstd_arr


def iou_matrix(const double[:, ::1] a):
    cdef Py_ssize_t n = a.shape[0], L = a.shape[1], i, j, t
    out_arr = np.empty((n, n))
    cdef double[:, ::1] out = out_arr
    for i in range(n):
        out[i, i] = _iou_row(a, i, i, L)
        for j in range(i + 1, n):
            out[i, j] = _iou_row(a, i, j, L)
            out[j, i] = out[i, j]
    return out_arr


cdef inline double _iou_row(const double[:, ::1] a, Py_ssize_t i, Py_ssize_t j,
                            Py_ssize_t L) noexcept nogil:
    cdef double num = 0.0, den = 0.0, x, y
    cdef Py_ssize_t t
    for t in range(L):
        x = a[i, t]
        y = a[j, t]
        if x < y:
            num += x
            den += y
        else:
            num += y
            den += x
    if den == 0.0:
        return NAN
    return num / den


cdef inline Py_ssize_t _find(Py_ssize_t[::1] parent, Py_ssize_t i) noexcept nogil:
    while parent[i] != i:
        parent[i] = parent[parent[i]]
        i = parent[i]
    return i


def threshold_components(const double[:, ::1] a, double threshold):
    cdef Py_ssize_t n = a.shape[0], L = a.shape[1], i, j, ri, rj
    parent_arr = np.arange(n, dtype=np.intp)
    cdef Py_ssize_t[::1] parent = parent_arr
    for i in range(n):
        for j in range(i + 1, n):
            if _iou_row(a, i, j, L) > threshold:
                ri = _find(parent, i)
                rj = _find(parent, j)
                if ri < rj:
                    parent[rj] = ri
                elif rj < ri:
                    parent[ri] = rj
    labels = np.empty(n, dtype=np.int64)
    cdef long long[::1] lab = labels
    for i in range(n):
        lab[i] = _find(parent, i)
    return labels
