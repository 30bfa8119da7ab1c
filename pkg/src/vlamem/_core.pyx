# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled per-token forward loops for the stateful kernels.

These mirror the pure-Python heads step for step: same operation order, same
epsilon floors, same degenerate-geometry threshold.  Inputs arrive already
featured (and unit-normalised where required); the state arrays are mutated
in place and per-token outputs are written into out.
"""

import numpy as np

cimport cython
from libc.math cimport sqrt


cdef inline double _dot(double[::1] a, double[::1] b, int d) nogil:
    cdef double s = 0.0
    cdef int i
    for i in range(d):
        s += a[i] * b[i]
    return s


def vla_forward(
    double[:, ::1] k_hat,
    double[:, ::1] k_feat,
    double[:, ::1] u,
    double[:, ::1] v,
    double[:, ::1] q_feat,
    double[:, ::1] S,
    double[:, ::1] A,
    double[::1] z_key,
    double epsilon,
    int refresh_period,
    double refresh_eta,
    bint normalize_alpha,
    bint alpha_is_key,
    double[:, ::1] out,
):
    """Returns the step index of a degenerate write direction, or -1."""
    cdef int T = k_hat.shape[0]
    cdef int d = k_hat.shape[1]
    cdef double[::1] zsm = np.empty(d)
    cdef double[::1] alpha = np.empty(d)
    cdef double[::1] e = np.empty(d)
    cdef int t, i, j
    cdef double delta, acc, na, denom
    cdef int bad = -1
    with nogil:
        for t in range(T):
            # penalty update: z = A u, delta = max(1 + u.z, eps), A -= zz^T/delta
            for i in range(d):
                acc = 0.0
                for j in range(d):
                    acc += A[i, j] * u[t, j]
                zsm[i] = acc
            delta = 1.0 + _dot(zsm, u[t], d)
            if delta < epsilon:
                delta = epsilon
            for i in range(d):
                for j in range(d):
                    A[i, j] -= zsm[i] * zsm[j] / delta
            if refresh_period > 0 and (t + 1) % refresh_period == 0:
                for i in range(d):
                    A[i, i] += refresh_eta
            # write direction
            if alpha_is_key:
                for i in range(d):
                    alpha[i] = k_hat[t, i]
            else:
                for i in range(d):
                    acc = 0.0
                    for j in range(d):
                        acc += A[i, j] * k_hat[t, j]
                    alpha[i] = acc
                na = sqrt(_dot(alpha, alpha, d))
                if na < 1e-12:
                    bad = t
                    break
                if normalize_alpha:
                    for i in range(d):
                        alpha[i] /= na
            # residual write
            for i in range(d):
                acc = 0.0
                for j in range(d):
                    acc += S[i, j] * k_hat[t, j]
                e[i] = v[t, i] - acc
            for i in range(d):
                for j in range(d):
                    S[i, j] += e[i] * alpha[j]
            for i in range(d):
                z_key[i] += k_feat[t, i]
            # output
            denom = _dot(q_feat[t], z_key, d)
            if denom < epsilon:
                denom = epsilon
            for i in range(d):
                acc = 0.0
                for j in range(d):
                    acc += S[i, j] * q_feat[t, j]
                out[t, i] = acc / denom
    return bad


def linear_forward(
    double[:, ::1] k_feat,
    double[:, ::1] v,
    double[:, ::1] q_feat,
    double[:, ::1] S,
    double[::1] z_key,
    double epsilon,
    double[:, ::1] out,
):
    cdef int T = k_feat.shape[0]
    cdef int d = k_feat.shape[1]
    cdef int t, i, j
    cdef double acc, denom
    with nogil:
        for t in range(T):
            for i in range(d):
                for j in range(d):
                    S[i, j] += v[t, i] * k_feat[t, j]
            for i in range(d):
                z_key[i] += k_feat[t, i]
            denom = _dot(q_feat[t], z_key, d)
            if denom < epsilon:
                denom = epsilon
            for i in range(d):
                acc = 0.0
                for j in range(d):
                    acc += S[i, j] * q_feat[t, j]
                out[t, i] = acc / denom
    return -1


def delta_forward(
    double[:, ::1] k_hat,
    double[:, ::1] v,
    double[:, ::1] q_feat,
    double[:, ::1] S,
    double beta,
    double[:, ::1] out,
):
    cdef int T = k_hat.shape[0]
    cdef int d = k_hat.shape[1]
    cdef double[::1] e = np.empty(d)
    cdef int t, i, j
    cdef double acc
    with nogil:
        for t in range(T):
            for i in range(d):
                acc = 0.0
                for j in range(d):
                    acc += S[i, j] * k_hat[t, j]
                e[i] = v[t, i] - acc
            for i in range(d):
                for j in range(d):
                    S[i, j] = beta * S[i, j] + e[i] * k_hat[t, j]
            for i in range(d):
                acc = 0.0
                for j in range(d):
                    acc += S[i, j] * q_feat[t, j]
                out[t, i] = acc
    return -1
