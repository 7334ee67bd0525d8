"""Fused log-sum-exp reductions over (outer, inner) likelihood pairs.

For whitened data ``yw`` and whitened model outputs ``gw`` the pair term is
``q_ij = -0.5 * |yw_i - gw_ij|^2``. Each reduction returns, per outer row, the
row maximum ``mx`` and the shifted sums ``s1 = sum_j exp(q_ij - mx)`` and
``s2 = sum_j exp(2 (q_ij - mx))``.

The shifted terms are floored at ``FLOOR`` before exponentiation. A floored
term contributes at most ``exp(FLOOR)`` relative to the leading term (which
is 1), far below double precision, and keeping every exponential in the
normal range avoids the slow underflow path of vectorized ``exp``.
"""
import numpy as np
from numba import njit

FLOOR = -350.0


@njit(fastmath=True, cache=True)
def _shifted_fresh(yw, gw, q):
    B, M, m = gw.shape
    mx = np.empty(B)
    for i in range(B):
        for j in range(M):
            q[i, j] = 0.0
        for k in range(m):
            y = yw[i, k]
            for j in range(M):
                t = y - gw[i, j, k]
                q[i, j] += t * t
        lo = np.inf
        for j in range(M):
            lo = min(lo, q[i, j])
        mx[i] = -0.5 * lo
        for j in range(M):
            q[i, j] = max(-0.5 * q[i, j] - mx[i], FLOOR)
    return mx


@njit(fastmath=True, cache=True)
def _shifted_shared(yw, gt, q):
    B, m = yw.shape
    M = gt.shape[1]
    mx = np.empty(B)
    for i in range(B):
        for j in range(M):
            q[i, j] = 0.0
        for k in range(m):
            y = yw[i, k]
            for j in range(M):
                t = y - gt[k, j]
                q[i, j] += t * t
        lo = np.inf
        for j in range(M):
            lo = min(lo, q[i, j])
        mx[i] = -0.5 * lo
        for j in range(M):
            q[i, j] = max(-0.5 * q[i, j] - mx[i], FLOOR)
    return mx


def _row_sums(q):
    np.exp(q, out=q)
    return q.sum(axis=1), np.einsum("ij,ij->i", q, q)


def fresh_rows(yw, gw):
    """``gw`` has shape ``(B, M, m)``: separate inner samples for every row."""
    q = np.empty(gw.shape[:2])
    mx = _shifted_fresh(yw, gw, q)
    s1, s2 = _row_sums(q)
    return mx, s1, s2


def shared_rows(yw, gw):
    """``gw`` has shape ``(M, m)``, reused by every row.

    Also returns ``ref`` (the block's largest row maximum) and per-column
    sums ``col = sum_i exp(q_ij - ref)``.
    """
    q = np.empty((yw.shape[0], gw.shape[0]))
    mx = _shifted_shared(yw, np.ascontiguousarray(gw.T), q)
    s1, s2 = _row_sums(q)
    ref = float(mx.max())
    col = np.exp(mx - ref) @ q
    return mx, s1, s2, ref, col
