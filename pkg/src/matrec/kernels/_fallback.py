"""Pure NumPy versions of the compiled kernels in ``_core.pyx``.

Same signatures, same update order, same return values. Used when the
extension is not built or when ``MATREC_KERNELS=python`` is set.
"""

import math

import numpy as np


def matrec_epoch(A, B, U, C, D, V, users, items, xs, ys, ratings, order, eta, eps):
    loss = 0.0
    degenerate = 0
    for idx in order:
        i = users[idx]
        j = items[idx]
        x = float(xs[idx])
        y = float(ys[idx])
        t0 = U[i] + x * A[i] + y * B[i]
        t1 = V[j] + x * C[j] + y * D[j]
        t2 = math.sqrt(float(t0 @ t0))
        t3 = math.sqrt(float(t1 @ t1))
        if t2 < eps or t3 < eps:
            degenerate += 1
            continue
        t4 = t2 * t3
        t5 = float(t0 @ t1)
        t6 = float(ratings[idx]) - t5 / t4
        loss += t6 * t6

        cu = 2.0 * t6 / t4
        gu = cu * t1 - (2.0 * t5 * t6 / (t2 * t2 * t2 * t3)) * t0
        gv = cu * t0 - (2.0 * t5 * t6 / (t2 * t3 * t3 * t3)) * t1
        A[i] += eta * (x * gu)
        B[i] += eta * (y * gu)
        U[i] += eta * gu
        C[j] += eta * (x * gv)
        D[j] += eta * (y * gv)
        V[j] += eta * gv
    return loss, degenerate


def matrec_scores(A, B, U, C, D, V, users, items, xs, ys, eps):
    n = len(users)
    scores = np.empty(n)
    degenerate = np.zeros(n, dtype=bool)
    for s in range(n):
        i = users[s]
        j = items[s]
        x = float(xs[s])
        y = float(ys[s])
        t0 = U[i] + x * A[i] + y * B[i]
        t1 = V[j] + x * C[j] + y * D[j]
        t2 = math.sqrt(float(t0 @ t0))
        t3 = math.sqrt(float(t1 @ t1))
        if t2 < eps or t3 < eps:
            degenerate[s] = True
            scores[s] = math.nan
        else:
            scores[s] = float(t0 @ t1) / (t2 * t3)
    return scores, degenerate


def _neg_log_sigmoid(x: float) -> float:
    if x >= 0:
        return math.log1p(math.exp(-x))
    return -x + math.log1p(math.exp(x))


def bpr_epoch(P, Q, bias, users, pos, neg, eta, reg):
    loss = 0.0
    for u, i, j in zip(users, pos, neg):
        pu = P[u].copy()
        qi = Q[i].copy()
        qj = Q[j].copy()
        xuij = float(bias[i] - bias[j] + pu @ (qi - qj))
        sq = float(bias[i] ** 2 + bias[j] ** 2 + pu @ pu + qi @ qi + qj @ qj)
        loss += _neg_log_sigmoid(xuij) + 0.5 * reg * sq
        if xuij >= 0:
            g = math.exp(-xuij) / (1.0 + math.exp(-xuij))
        else:
            g = 1.0 / (1.0 + math.exp(xuij))
        P[u] += eta * (g * (qi - qj) - reg * pu)
        Q[i] += eta * (g * pu - reg * qi)
        Q[j] += eta * (-g * pu - reg * qj)
        bias[i] += eta * (g - reg * bias[i])
        bias[j] += eta * (-g - reg * bias[j])
    return loss

