"""Compiled inner loops.

Every loop runs in a fixed sequential order, so results do not depend on
batch sizes or on which caller invoked them.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

UNCONSTRAINED = 0
BOX = 1


@njit(cache=True)
def mix_rows(rows, slot_idx, slot_w, X, copies, use_copies, c0, c1):
    """``out[k] = sum_s w[i, s] * src[idx[i, s], c0:c1]`` with ``i = rows[k]``, slots in order."""
    K = rows.shape[0]
    width = slot_idx.shape[1]
    out = np.zeros((K, c1 - c0))
    for k in range(K):
        i = rows[k]
        for s in range(width):
            j = slot_idx[i, s]
            w = slot_w[i, s]
            if use_copies:
                for c in range(c0, c1):
                    out[k, c - c0] += w * copies[i, j, c]
            else:
                for c in range(c0, c1):
                    out[k, c - c0] += w * X[j, c]
    return out


@njit(cache=True)
def block_prox_rows(rows, X, Y, G, alphas, starts, stops, kind, lo, hi):
    """Elementwise quadratic prox on one block per row, written into ``X`` in place.

    Returns ``(||q||, ||g_block||, all_finite)`` where ``q`` is the block
    displacement from ``Y``.
    """
    K = rows.shape[0]
    qn = np.zeros(K)
    gn = np.zeros(K)
    finite = True
    for k in range(K):
        i = rows[k]
        a = alphas[k]
        q2 = 0.0
        g2 = 0.0
        for c in range(starts[k], stops[k]):
            g = G[k, c]
            y = Y[k, c]
            u = y - a * g
            if kind == BOX:
                u = min(max(u, lo[c]), hi[c])
            if not math.isfinite(u):
                finite = False
            X[i, c] = u
            d = u - y
            q2 += d * d
            g2 += g * g
        qn[k] = math.sqrt(q2)
        gn[k] = math.sqrt(g2)
    return qn, gn, finite


@njit(cache=True)
def _expit(z):
    if z >= 0.0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


@njit(cache=True)
def logistic_l1_subgradient(X, q, b, samples, l1):
    """Rows ``-b q expit(-b <x, q>) + l1 sign(x)`` for one sample per row."""
    K, n = X.shape
    out = np.empty((K, n))
    for k in range(K):
        r = samples[k]
        m = 0.0
        for c in range(n):
            m += X[k, c] * q[r, c]
        m *= b[r]
        coef = -b[r] * _expit(-m)
        for c in range(n):
            x = X[k, c]
            s = 1.0 if x > 0.0 else (-1.0 if x < 0.0 else 0.0)
            out[k, c] = coef * q[r, c] + l1 * s
    return out
