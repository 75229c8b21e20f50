# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops: truncated-MVN Gibbs sweeps and the Monte-Carlo q-EI reduction.

Both functions mirror ``_fallback`` operation for operation so the two paths
agree to rounding error.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, log1p, INFINITY
from scipy.special.cython_special cimport ndtr, ndtri

cnp.import_array()

cdef double _TAIL = 1e-300


cdef inline double _trunc_std_normal(double a, double b, double u) nogil:
    cdef double pa, pb, z
    if a >= 0.0:
        pa = ndtr(-a)
        pb = 0.0 if b == INFINITY else ndtr(-b)
        if pa - pb < _TAIL:
            z = a - log1p(-u) / a
        else:
            z = -ndtri(pb + u * (pa - pb))
    elif b <= 0.0:
        pa = ndtr(a)
        pb = ndtr(b)
        if pb - pa < _TAIL:
            z = b + log1p(-u) / b
        else:
            z = ndtri(pa + u * (pb - pa))
    else:
        pa = ndtr(a)
        pb = 1.0 if b == INFINITY else ndtr(b)
        z = ndtri(pa + u * (pb - pa))
    if z < a:
        z = a
    if z > b:
        z = b
    return z


def gibbs_tmvn(const double[::1] mean, const double[:, ::1] prec, const double[::1] lower,
               const double[::1] upper, const double[::1] x0, const double[:, ::1] uniforms,
               int burn_in, int thin):
    """Coordinate-wise Gibbs sampler for N(mean, inv(prec)) truncated to a box.

    ``uniforms`` holds one row per sweep; the number of returned samples is
    ``(uniforms.shape[0] - burn_in) // thin``.
    """
    cdef Py_ssize_t k = mean.shape[0]
    cdef Py_ssize_t n_sweeps = uniforms.shape[0]
    cdef Py_ssize_t n_out = (n_sweeps - burn_in) // thin
    cdef Py_ssize_t s, j, i, row = 0
    cdef double acc, mu, v
    out = np.empty((max(n_out, 0), k), dtype=np.float64)
    sd_arr = 1.0 / np.sqrt(np.asarray(prec).diagonal())
    cdef double[::1] sd = sd_arr
    cdef double[:, ::1] samples = out
    x_arr = np.array(x0, dtype=np.float64, copy=True)
    cdef double[::1] x = x_arr
    with nogil:
        for s in range(n_sweeps):
            for j in range(k):
                acc = 0.0
                for i in range(k):
                    if i != j:
                        acc = acc + prec[j, i] * (x[i] - mean[i])
                mu = mean[j] - acc / prec[j, j]
                v = mu + sd[j] * _trunc_std_normal((lower[j] - mu) / sd[j],
                                                   (upper[j] - mu) / sd[j],
                                                   uniforms[s, j])
                if v < lower[j]:
                    v = lower[j]
                if v > upper[j]:
                    v = upper[j]
                x[j] = v
            if s >= burn_in and (s - burn_in) % thin == thin - 1 and row < n_out:
                for j in range(k):
                    samples[row, j] = x[j]
                row += 1
    return out


def qei_reduce(const double[::1] mean, const double[:, ::1] chol, const double[:, ::1] base,
               double y_best):
    """Mean and standard error of max_i max(mean + chol @ z - y_best, 0)."""
    cdef Py_ssize_t n = base.shape[0]
    cdef Py_ssize_t q = mean.shape[0]
    cdef Py_ssize_t s, i, j
    cdef double best, y, total = 0.0, total_sq = 0.0, m, var
    with nogil:
        for s in range(n):
            best = 0.0
            for i in range(q):
                y = mean[i]
                for j in range(i + 1):
                    y = y + chol[i, j] * base[s, j]
                y = y - y_best
                if y > best:
                    best = y
            total = total + best
            total_sq = total_sq + best * best
    m = total / n
    if n > 1:
        var = (total_sq - n * m * m) / (n - 1)
        if var < 0.0:
            var = 0.0
        return m, sqrt(var / n)
    return m, 0.0
