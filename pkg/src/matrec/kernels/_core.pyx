# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled SGD inner loops.

Signatures and arithmetic mirror :mod:`matrec.kernels._fallback`. The
epoch functions update the factor arrays in place; all loops run without
the GIL.
"""

from libc.math cimport sqrt, exp, log1p, NAN
from libc.stdint cimport int64_t

import numpy as np


def matrec_epoch(
    double[:, ::1] A,
    double[:, ::1] B,
    double[:, ::1] U,
    double[:, ::1] C,
    double[:, ::1] D,
    double[:, ::1] V,
    const int64_t[::1] users,
    const int64_t[::1] items,
    const double[::1] xs,
    const double[::1] ys,
    const double[::1] ratings,
    const int64_t[::1] order,
    double eta,
    double eps,
):
    """One pass of rank-aware cosine SGD over ``order``.

    Returns ``(loss, degenerate)``: the summed pre-step squared residual of
    the samples that were applied, and the number skipped for a feature
    norm below ``eps``.
    """
    cdef Py_ssize_t k = A.shape[1]
    cdef Py_ssize_t n_steps = order.shape[0]
    cdef double[::1] t0 = np.empty(k, dtype=np.float64)
    cdef double[::1] t1 = np.empty(k, dtype=np.float64)
    cdef Py_ssize_t s, f, idx, i, j
    cdef double x, y, r, sq0, sq1, t2, t3, t4, t5, t6, cu, cu0, cv1, gu, gv
    cdef double loss = 0.0
    cdef long degenerate = 0

    with nogil:
        for s in range(n_steps):
            idx = order[s]
            i = users[idx]
            j = items[idx]
            x = xs[idx]
            y = ys[idx]
            r = ratings[idx]

            sq0 = 0.0
            sq1 = 0.0
            t5 = 0.0
            for f in range(k):
                t0[f] = U[i, f] + x * A[i, f] + y * B[i, f]
                t1[f] = V[j, f] + x * C[j, f] + y * D[j, f]
                sq0 = sq0 + t0[f] * t0[f]
                sq1 = sq1 + t1[f] * t1[f]
                t5 = t5 + t0[f] * t1[f]
            t2 = sqrt(sq0)
            t3 = sqrt(sq1)
            if t2 < eps or t3 < eps:
                degenerate += 1
                continue
            t4 = t2 * t3
            t6 = r - t5 / t4
            loss += t6 * t6

            cu = 2.0 * t6 / t4
            cu0 = 2.0 * t5 * t6 / (t2 * t2 * t2 * t3)
            cv1 = 2.0 * t5 * t6 / (t2 * t3 * t3 * t3)
            for f in range(k):
                gu = cu * t1[f] - cu0 * t0[f]
                gv = cu * t0[f] - cv1 * t1[f]
                A[i, f] += eta * (x * gu)
                B[i, f] += eta * (y * gu)
                U[i, f] += eta * gu
                C[j, f] += eta * (x * gv)
                D[j, f] += eta * (y * gv)
                V[j, f] += eta * gv

    return loss, degenerate


def matrec_scores(
    const double[:, ::1] A,
    const double[:, ::1] B,
    const double[:, ::1] U,
    const double[:, ::1] C,
    const double[:, ::1] D,
    const double[:, ::1] V,
    const int64_t[::1] users,
    const int64_t[::1] items,
    const double[::1] xs,
    const double[::1] ys,
    double eps,
):
    """Cosine scores for each pair, with the exact arithmetic of ``matrec_epoch``.

    Returns ``(scores, degenerate)``; degenerate pairs score NaN.
    """
    cdef Py_ssize_t k = A.shape[1]
    cdef Py_ssize_t n = users.shape[0]
    scores_arr = np.empty(n, dtype=np.float64)
    degenerate_arr = np.zeros(n, dtype=np.uint8)
    cdef double[::1] scores = scores_arr
    cdef unsigned char[::1] degenerate = degenerate_arr
    cdef Py_ssize_t s, f, i, j
    cdef double x, y, a0, a1, sq0, sq1, t2, t3, t5

    with nogil:
        for s in range(n):
            i = users[s]
            j = items[s]
            x = xs[s]
            y = ys[s]
            sq0 = 0.0
            sq1 = 0.0
            t5 = 0.0
            for f in range(k):
                a0 = U[i, f] + x * A[i, f] + y * B[i, f]
                a1 = V[j, f] + x * C[j, f] + y * D[j, f]
                sq0 = sq0 + a0 * a0
                sq1 = sq1 + a1 * a1
                t5 = t5 + a0 * a1
            t2 = sqrt(sq0)
            t3 = sqrt(sq1)
            if t2 < eps or t3 < eps:
                degenerate[s] = 1
                scores[s] = NAN
            else:
                scores[s] = t5 / (t2 * t3)

    return scores_arr, degenerate_arr.astype(bool)


def bpr_epoch(
    double[:, ::1] P,
    double[:, ::1] Q,
    double[::1] bias,
    const int64_t[::1] users,
    const int64_t[::1] pos,
    const int64_t[::1] neg,
    double eta,
    double reg,
):
    """SGD on sampled ``(user, positive, negative)`` triples, in the given order.

    Returns the summed regularized triple loss evaluated before each step.
    """
    cdef Py_ssize_t d = P.shape[1]
    cdef Py_ssize_t n_steps = users.shape[0]
    cdef double[::1] pu = np.empty(d, dtype=np.float64)
    cdef Py_ssize_t s, f, u, i, j
    cdef double xuij, g, sq, qi, qj, loss = 0.0

    with nogil:
        for s in range(n_steps):
            u = users[s]
            i = pos[s]
            j = neg[s]
            xuij = bias[i] - bias[j]
            sq = bias[i] * bias[i] + bias[j] * bias[j]
            for f in range(d):
                pu[f] = P[u, f]
                xuij = xuij + pu[f] * (Q[i, f] - Q[j, f])
                sq = sq + pu[f] * pu[f] + Q[i, f] * Q[i, f] + Q[j, f] * Q[j, f]
            # -log(sigmoid(x)), evaluated without overflow
            if xuij >= 0:
                loss += log1p(exp(-xuij)) + 0.5 * reg * sq
                g = exp(-xuij) / (1.0 + exp(-xuij))
            else:
                loss += -xuij + log1p(exp(xuij)) + 0.5 * reg * sq
                g = 1.0 / (1.0 + exp(xuij))
            for f in range(d):
                qi = Q[i, f]
                qj = Q[j, f]
                P[u, f] += eta * (g * (qi - qj) - reg * pu[f])
                Q[i, f] += eta * (g * pu[f] - reg * qi)
                Q[j, f] += eta * (-g * pu[f] - reg * qj)
            bias[i] += eta * (g - reg * bias[i])
            bias[j] += eta * (-g - reg * bias[j])

    return loss
