# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: target log-densities and the RWM chain loop.

Mirrors ``_pykernels`` exactly in signature and semantics.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log

cnp.import_array()

NAME = "cython"


cdef inline double coord_logpdf(double x, const double[::1] a, const double[::1] mu,
                                const double[::1] s) noexcept nogil:
    cdef Py_ssize_t k, K = a.shape[0]
    cdef double z, c, m, acc
    if K == 1:
        z = (x - mu[0]) * s[0]
        return a[0] - 0.5 * z * z
    m = -1e308
    for k in range(K):
        z = (x - mu[k]) * s[k]
        c = a[k] - 0.5 * z * z
        if c > m:
            m = c
    acc = 0.0
    for k in range(K):
        z = (x - mu[k]) * s[k]
        acc += exp(a[k] - 0.5 * z * z - m)
    return m + log(acc)


def product_logpdf_rows(const double[:, ::1] X, const double[::1] a, const double[::1] mu,
                        const double[::1] s):
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1], i, j
    out = np.empty(n)
    cdef double[::1] o = out
    cdef double acc
    with nogil:
        for i in range(n):
            acc = 0.0
            for j in range(d):
                acc += coord_logpdf(X[i, j], a, mu, s)
            o[i] = acc
    return out


def product_chain(const double[::1] x0, const double[:, ::1] steps, const double[::1] log_u,
                  const double[::1] a, const double[::1] mu, const double[::1] s):
    cdef Py_ssize_t n_steps = steps.shape[0], d = steps.shape[1], t, j
    states_arr = np.empty((n_steps + 1, d))
    accepted_arr = np.empty(n_steps + 1, dtype=np.bool_)
    cdef double[:, ::1] states = states_arr
    cdef cnp.npy_bool[::1] accepted = accepted_arr
    cdef double[::1] x = np.array(x0, dtype=float)
    cdef double[::1] lp = np.empty(d)
    cdef double[::1] y = np.empty(d)
    cdef double[::1] lpy = np.empty(d)
    cdef double diff
    with nogil:
        for j in range(d):
            states[0, j] = x[j]
            lp[j] = coord_logpdf(x[j], a, mu, s)
        accepted[0] = 1
        for t in range(n_steps):
            diff = 0.0
            for j in range(d):
                y[j] = x[j] + steps[t, j]
                lpy[j] = coord_logpdf(y[j], a, mu, s)
                diff += lpy[j] - lp[j]
            if log_u[t] < diff:
                for j in range(d):
                    x[j] = y[j]
                    lp[j] = lpy[j]
                accepted[t + 1] = 1
            else:
                accepted[t + 1] = 0
            for j in range(d):
                states[t + 1, j] = x[j]
    return states_arr, accepted_arr


cdef double mv_point(const double[::1] y, const double[:, ::1] means, const double[::1] logw,
                     const double[:, ::1] prec, double[::1] work) noexcept nogil:
    cdef Py_ssize_t K = means.shape[0], d = means.shape[1], k, i, j
    cdef double q, row, m = -1e308, acc = 0.0
    for k in range(K):
        for i in range(d):
            work[i] = y[i] - means[k, i]
        q = 0.0
        for i in range(d):
            row = 0.0
            for j in range(d):
                row += prec[i, j] * work[j]
            q += work[i] * row
        work[d + k] = logw[k] - 0.5 * q
        if work[d + k] > m:
            m = work[d + k]
    for k in range(K):
        acc += exp(work[d + k] - m)
    return m + log(acc)


def mv_logpdf_rows(const double[:, ::1] X, const double[:, ::1] means, const double[::1] logw,
                   const double[:, ::1] prec):
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1], i
    out = np.empty(n)
    cdef double[::1] o = out
    cdef double[::1] work = np.empty(d + means.shape[0])
    with nogil:
        for i in range(n):
            o[i] = mv_point(X[i], means, logw, prec, work)
    return out


def mv_chain(const double[::1] x0, const double[:, ::1] steps, const double[::1] log_u,
             const double[:, ::1] means, const double[::1] logw, const double[:, ::1] prec):
    cdef Py_ssize_t n_steps = steps.shape[0], d = steps.shape[1], t, j
    states_arr = np.empty((n_steps + 1, d))
    accepted_arr = np.empty(n_steps + 1, dtype=np.bool_)
    cdef double[:, ::1] states = states_arr
    cdef cnp.npy_bool[::1] accepted = accepted_arr
    cdef double[::1] x = np.array(x0, dtype=float)
    cdef double[::1] y = np.empty(d)
    cdef double[::1] work = np.empty(d + means.shape[0])
    cdef double lp, lpy
    with nogil:
        lp = mv_point(x, means, logw, prec, work)
        for j in range(d):
            states[0, j] = x[j]
        accepted[0] = 1
        for t in range(n_steps):
            for j in range(d):
                y[j] = x[j] + steps[t, j]
            lpy = mv_point(y, means, logw, prec, work)
            if log_u[t] < lpy - lp:
                for j in range(d):
                    x[j] = y[j]
                lp = lpy
                accepted[t + 1] = 1
            else:
                accepted[t + 1] = 0
            for j in range(d):
                states[t + 1, j] = x[j]
    return states_arr, accepted_arr
