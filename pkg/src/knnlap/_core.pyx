# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for kNN selection and dense affinity construction.

Squared distances are always accumulated column by column as
``acc += diff * diff`` in float64 without fused multiply-add, so every
code path (brute force, tree candidates, numpy fallback) produces
bit-identical values.
"""

import numpy as np

cimport numpy as cnp
from cython.parallel cimport prange
from libc.math cimport exp, sqrt
from libc.stdlib cimport free, malloc
from libcpp.algorithm cimport nth_element

cnp.import_array()

cdef enum:
    PHI_MIN = 0
    PHI_MAX = 1
    PHI_GEO = 2
    PHI_MEAN = 3
    PHI_SQMEAN = 4

cdef enum:
    K_EXP = 0
    K_IND = 1

cdef double _MAX_EXPONENT = 690.0


cdef inline double _sqdist(const double[:, ::1] X, Py_ssize_t i,
                           const double[:, ::1] Q, Py_ssize_t q) noexcept nogil:
    cdef Py_ssize_t c
    cdef double acc = 0.0, diff
    for c in range(X.shape[1]):
        diff = X[i, c] - Q[q, c]
        acc = acc + diff * diff
    return acc


cdef inline double _phi(int rule, double u, double v) noexcept nogil:
    if rule == PHI_MIN:
        return u if u < v else v
    if rule == PHI_MAX:
        return u if u > v else v
    if rule == PHI_GEO:
        return sqrt(u * v)
    if rule == PHI_MEAN:
        return (u + v) * 0.5
    return sqrt((u * u + v * v) * 0.5)


cdef inline double _k0(int kind, double eta, double support) noexcept nogil:
    cdef double x
    if kind == K_IND:
        return 1.0 if eta <= support else 0.0
    x = eta * 0.25
    if x >= _MAX_EXPONENT:
        return 0.0
    return exp(-x)


def kth_sqdist(const double[:, ::1] X, const double[:, ::1] Q, Py_ssize_t k,
               int threads=1):
    """k-th smallest squared distance from each row of ``Q`` to the rows of ``X``."""
    cdef Py_ssize_t n = X.shape[0], nq = Q.shape[0], q, i
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out_arr = np.empty(nq)
    cdef double[::1] out = out_arr
    cdef double *buf
    with nogil:
        for q in prange(nq, num_threads=threads, schedule="static"):
            buf = <double *> malloc(n * sizeof(double))
            for i in range(n):
                buf[i] = _sqdist(X, i, Q, q)
            nth_element(buf, buf + (k - 1), buf + n)
            out[q] = buf[k - 1]
            free(buf)
    return out_arr


def candidate_sqdist(const double[:, ::1] X, const double[:, ::1] Q,
                     const cnp.int64_t[:, ::1] idx, int threads=1):
    """Squared distances from ``Q[q]`` to ``X[idx[q, j]]``; negative indices give inf."""
    cdef Py_ssize_t nq = idx.shape[0], kq = idx.shape[1], q, j, i
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out_arr = np.empty((nq, kq))
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t n = X.shape[0]
    with nogil:
        for q in prange(nq, num_threads=threads, schedule="static"):
            for j in range(kq):
                i = idx[q, j]
                if i < 0 or i >= n:
                    out[q, j] = 1.0 / 0.0
                else:
                    out[q, j] = _sqdist(X, i, Q, q)
    return out_arr


def dense_affinity(const double[:, ::1] X, const double[::1] bw, int kernel,
                   double support, int rule, double scale, double prefactor,
                   double norm_scale, bint normalized, int threads=1):
    """Symmetric affinity ``prefactor * k0(d2 / h) [/ (norm_scale * phi^2)]``.

    ``h = scale * phi(bw_i, bw_j)^2``. Only the upper triangle is evaluated
    and mirrored, so the result is exactly symmetric.
    """
    cdef Py_ssize_t n = X.shape[0], i, j
    cdef cnp.ndarray[cnp.float64_t, ndim=2] W_arr = np.empty((n, n))
    cdef double[:, ::1] W = W_arr
    cdef double ph, ph2, val
    with nogil:
        for i in prange(n, num_threads=threads, schedule="dynamic"):
            for j in range(i, n):
                ph = _phi(rule, bw[i], bw[j])
                ph2 = ph * ph
                val = prefactor * _k0(kernel, _sqdist(X, j, X, i) / (scale * ph2), support)
                if normalized:
                    val = val / (norm_scale * ph2)
                W[i, j] = val
        for i in range(n):
            for j in range(i):
                W[i, j] = W[j, i]
    return W_arr


def query_weights(const double[:, ::1] X, const double[::1] q, const double[::1] bw,
                  double bw0, int kernel, double support, int rule, double scale,
                  double norm_scale, bint normalized):
    """Kernel weights between a single query ``q`` and every row of ``X``."""
    cdef Py_ssize_t n = X.shape[0], i, c
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out_arr = np.empty(n)
    cdef double[::1] out = out_arr
    cdef double acc, diff, ph, ph2, val
    with nogil:
        for i in range(n):
            acc = 0.0
            for c in range(X.shape[1]):
                diff = X[i, c] - q[c]
                acc = acc + diff * diff
            ph = _phi(rule, bw0, bw[i])
            ph2 = ph * ph
            val = _k0(kernel, acc / (scale * ph2), support)
            if normalized:
                val = val / (norm_scale * ph2)
            out[i] = val
    return out_arr


cdef double _weighted_select(double *d, double *w, Py_ssize_t n, double mass) noexcept nogil:
    """Smallest ``d[i]`` whose weight of points at distance ``<= d[i]`` reaches ``mass``.

    Three-way quickselect on ``(d, w)`` pairs; both buffers are permuted.
    """
    cdef Py_ssize_t lo = 0, hi = n, lt, gt, i
    cdef double pivot, w_less, w_equal, tmp
    while True:
        pivot = d[lo + (hi - lo) // 2]
        # Dutch-flag partition of [lo, hi) into < pivot, == pivot, > pivot
        lt = lo
        gt = hi
        i = lo
        w_less = 0.0
        w_equal = 0.0
        while i < gt:
            if d[i] < pivot:
                w_less = w_less + w[i]
                tmp = d[i]; d[i] = d[lt]; d[lt] = tmp
                tmp = w[i]; w[i] = w[lt]; w[lt] = tmp
                lt = lt + 1
                i = i + 1
            elif d[i] > pivot:
                gt = gt - 1
                tmp = d[i]; d[i] = d[gt]; d[gt] = tmp
                tmp = w[i]; w[i] = w[gt]; w[gt] = tmp
            else:
                w_equal = w_equal + w[i]
                i = i + 1
        if w_less >= mass:
            hi = lt
        elif w_less + w_equal >= mass or gt == hi:
            return pivot
        else:
            mass = mass - w_less - w_equal
            lo = gt


def weighted_kth_sqdist(const double[:, ::1] X, const double[:, ::1] Q, const double[::1] w,
                        double mass, int threads=1):
    """Squared weighted kNN radius: smallest ``d2`` with ``sum(w[d2_j <= d2]) >= mass``."""
    cdef Py_ssize_t n = X.shape[0], nq = Q.shape[0], q, i
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out_arr = np.empty(nq)
    cdef double[::1] out = out_arr
    cdef double *dbuf
    cdef double *wbuf
    with nogil:
        for q in prange(nq, num_threads=threads, schedule="static"):
            dbuf = <double *> malloc(n * sizeof(double))
            wbuf = <double *> malloc(n * sizeof(double))
            for i in range(n):
                dbuf[i] = _sqdist(X, i, Q, q)
                wbuf[i] = w[i]
            out[q] = _weighted_select(dbuf, wbuf, n, mass)
            free(dbuf)
            free(wbuf)
    return out_arr
