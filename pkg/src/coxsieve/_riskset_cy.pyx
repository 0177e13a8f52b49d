# cython: boundscheck=False, wraparound=False, initializedcheck=False
# cython: cdivision=True, language_level=3
"""Compiled risk-set accumulation kernels.

Drop-in twin of ``_riskset_np``: same four functions, same conventions
(subjects sorted by descending time, risk sets as prefixes, strictly
increasing ``risk_sizes``), same fixed reduction order.  See the numpy
module for the interface documentation.
"""

from libc.math cimport exp, log

import numpy as np

cimport numpy as cnp

cnp.import_array()


def const_value_grad(const double[:, ::1] W, const double[::1] eta,
                     const cnp.int64_t[::1] risk_sizes,
                     const double[::1] event_counts, bint want_grad):
    cdef Py_ssize_t n = eta.shape[0]
    cdef Py_ssize_t d = W.shape[1]
    cdef Py_ssize_t n_events = risk_sizes.shape[0]
    cdef Py_ssize_t k, c
    cdef Py_ssize_t e = 0
    cdef double shift, z, w, s0 = 0.0, logsum = 0.0

    out_arr = np.zeros(d) if want_grad else None
    run_arr = np.zeros(d) if want_grad else None
    cdef double[::1] out = out_arr if want_grad else None
    cdef double[::1] run = run_arr if want_grad else None

    if n_events == 0:
        return 0.0, out_arr

    shift = eta[0]
    for k in range(1, n):
        if eta[k] > shift:
            shift = eta[k]

    for k in range(n):
        z = exp(eta[k] - shift)
        s0 += z
        if want_grad:
            for c in range(d):
                run[c] += z * W[k, c]
        if e < n_events and risk_sizes[e] == k + 1:
            logsum += event_counts[e] * (log(s0) + shift)
            if want_grad:
                w = event_counts[e] / s0
                for c in range(d):
                    out[c] += w * run[c]
            e += 1

    return logsum, out_arr


def const_quad(const double[::1] eta, const double[::1] a,
               const cnp.int64_t[::1] risk_sizes,
               const double[::1] event_counts):
    cdef Py_ssize_t n = eta.shape[0]
    cdef Py_ssize_t n_events = risk_sizes.shape[0]
    cdef Py_ssize_t k
    cdef Py_ssize_t e = 0
    cdef double shift, z, m1, acc = 0.0
    cdef double s0 = 0.0, sa = 0.0, saa = 0.0

    if n_events == 0:
        return 0.0

    shift = eta[0]
    for k in range(1, n):
        if eta[k] > shift:
            shift = eta[k]

    for k in range(n):
        z = exp(eta[k] - shift)
        s0 += z
        sa += z * a[k]
        saa += z * a[k] * a[k]
        if e < n_events and risk_sizes[e] == k + 1:
            m1 = sa / s0
            acc += event_counts[e] * (saa / s0 - m1 * m1)
            e += 1

    return acc


def tv_value_grad(const double[:, ::1] M, const double[:, ::1] X,
                  const double[:, ::1] basis_at_events,
                  const cnp.int64_t[::1] risk_sizes,
                  const double[::1] event_counts, bint want_grad):
    cdef Py_ssize_t n = M.shape[0]
    cdef Py_ssize_t L = M.shape[1]
    cdef Py_ssize_t p = X.shape[1]
    cdef Py_ssize_t n_events = risk_sizes.shape[0]
    cdef Py_ssize_t e, i, c, m
    cdef double shift, v, z, s0, w, logsum = 0.0

    if n_events == 0:
        return 0.0, (np.zeros((p, L)) if want_grad else None)

    eta_arr = np.empty(n)
    cdef double[::1] eta = eta_arr
    xw_arr = np.zeros((n_events, p)) if want_grad else None
    cdef double[:, ::1] xw = xw_arr if want_grad else None
    cdef const double[::1] b

    for e in range(n_events):
        m = risk_sizes[e]
        b = basis_at_events[e]
        shift = 0.0
        for i in range(m):
            v = 0.0
            for c in range(L):
                v += M[i, c] * b[c]
            eta[i] = v
            if i == 0 or v > shift:
                shift = v
        s0 = 0.0
        for i in range(m):
            eta[i] = exp(eta[i] - shift)
            s0 += eta[i]
        logsum += event_counts[e] * (log(s0) + shift)
        if want_grad:
            w = event_counts[e] / s0
            for i in range(m):
                z = w * eta[i]
                for c in range(p):
                    xw[e, c] += z * X[i, c]

    if not want_grad:
        return logsum, None
    return logsum, xw_arr.T @ np.asarray(basis_at_events)


def tv_quad(const double[:, ::1] M, const double[:, ::1] N,
            const double[:, ::1] basis_at_events,
            const cnp.int64_t[::1] risk_sizes,
            const double[::1] event_counts):
    cdef Py_ssize_t n = M.shape[0]
    cdef Py_ssize_t L = M.shape[1]
    cdef Py_ssize_t n_events = risk_sizes.shape[0]
    cdef Py_ssize_t e, i, c, m
    cdef double shift, v, z, s0, sa, saa, m1, acc = 0.0

    if n_events == 0:
        return 0.0

    eta_arr = np.empty(n)
    a_arr = np.empty(n)
    cdef double[::1] eta = eta_arr
    cdef double[::1] a = a_arr
    cdef const double[::1] b

    for e in range(n_events):
        m = risk_sizes[e]
        b = basis_at_events[e]
        shift = 0.0
        for i in range(m):
            v = 0.0
            for c in range(L):
                v += M[i, c] * b[c]
            eta[i] = v
            if i == 0 or v > shift:
                shift = v
            v = 0.0
            for c in range(L):
                v += N[i, c] * b[c]
            a[i] = v
        s0 = 0.0
        sa = 0.0
        saa = 0.0
        for i in range(m):
            z = exp(eta[i] - shift)
            s0 += z
            sa += z * a[i]
            saa += z * a[i] * a[i]
        m1 = sa / s0
        acc += event_counts[e] * (saa / s0 - m1 * m1)

    return acc
