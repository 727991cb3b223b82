"""Compiled inner loops for the particle filter.

The cluster term ``C(t) = sum_j w_j log(zeta + t - theta_j)`` is tracked per
particle through power sums ``P_k = sum_j w_j d_j^-k`` of the gaps
``d_j = zeta + r - theta_j`` at a reference time ``r``. For ``t = r + delta``

    C(t) = C(r) + sum_k (-1)^(k+1) delta^k P_k / k

and the series is cut at ``N_POWERS`` terms. The reference is moved forward
(one exact pass over the clusters) once ``delta`` exceeds ``zeta / 4``; every
gap is then at least ``3 zeta / 4``, so the ratio ``delta / d_j`` stays below
1/3 and the truncation error is below ``3^-33`` per unit of weight.
"""
import math

import numba
import numpy as np

N_POWERS = 32
REFERENCE_SHIFT = 0.25


@numba.njit(cache=True)
def _g_scalar(t, zeta, sigma, p):
    # integral over (0, t) of theta^p (t - theta + zeta)^(sigma - 1), p a nonnegative integer
    if t <= 0.0:
        return 0.0
    big = t + zeta
    z = t / big
    if z <= 0.6:
        a, b, c = 1.0 - sigma, p + 1.0, p + 2.0
        term, total, k = 1.0, 1.0, 0
        while k < 2000:
            term *= (a + k) * (b + k) / ((c + k) * (k + 1.0)) * z
            total += term
            k += 1
            if term < 1e-17 * total:
                break
        return t ** (p + 1.0) * big ** (sigma - 1.0) / (p + 1.0) * total
    # expand (big - v)^p over v in (zeta, big); the k-th term integrates v^(sigma+k-1)
    lr = math.log(zeta / big)
    # below 1e-280 the sigma = 0 limit is exact to double precision
    total = -lr if sigma < 1e-280 else -math.expm1(sigma * lr) / sigma
    qs = math.exp(sigma * lr)
    qk = 1.0
    binom = 1.0
    for k in range(1, p + 1):
        qk *= zeta / big
        binom = -binom * (p - k + 1.0) / k
        total += binom * (1.0 - qk * qs) / (sigma + k)
    return big ** (p + sigma) * total


@numba.njit(cache=True)
def incomplete_integral(t, zeta, sigma, p):
    out = np.empty(t.size)
    for i in range(t.size):
        out[i] = _g_scalar(t[i], zeta, sigma, p)
    return out


# alternating Taylor coefficients of log(1 + x)
_LOG_COEF = np.array([(-1.0) ** q / (q + 1.0) for q in range(N_POWERS)])
_SIGNS = np.array([(-1.0) ** q for q in range(N_POWERS)])


@numba.njit(cache=True, fastmath=True)
def _rebuild(i, ref, thetas, coef, k, zeta, powers, c_ref, work, with_log):
    # loop over clusters innermost so it vectorizes
    inv = work[0, :k]
    px = work[1, :k]
    for j in range(k):
        inv[j] = 1.0 / (zeta + ref - thetas[i, j])
        px[j] = coef[j]
    if with_log:
        c = 0.0
        for j in range(k):
            c += coef[j] * math.log(zeta + ref - thetas[i, j])
        c_ref[i] = c
    for q in range(N_POWERS):
        acc = 0.0
        for j in range(k):
            px[j] *= inv[j]
            acc += px[j]
        powers[i, q] = acc


@numba.njit(cache=True)
def _series(i, delta, powers):
    # C(r + delta) - C(r) and the hazard sum_j w_j / (d_j + delta), by Horner
    c = 0.0
    h = 0.0
    for q in range(N_POWERS - 1, -1, -1):
        c = c * delta + _LOG_COEF[q] * powers[i, q]
        h = h * delta + _SIGNS[q] * powers[i, q]
    return c * delta, h


@numba.njit(cache=True)
def cluster_step(tau_prev, c_prev, tau, ref, powers, c_ref, thetas, coef, k, target, added, zeta, c_new, hazard):
    """Advance the cluster term of every particle from ``tau_prev`` to ``tau`` and
    credit ``added`` weight to cluster ``target`` (0-based; its location must
    already be set).

    ``coef`` holds the weights before the update, ``k`` the number of clusters
    they cover, and ``c_prev`` the cluster term at ``tau_prev`` under them.
    Writes ``C(tau)`` after the update into ``c_new`` and the updated hazard at
    ``tau`` into ``hazard``.
    """
    limit = REFERENCE_SHIFT * zeta
    work = np.empty((2, max(k, 1)))
    for i in range(tau.size):
        if tau[i] - ref[i] > limit:
            if tau[i] - tau_prev[i] <= limit:
                # restart the expansion at the previous arrival, where C is known
                ref[i] = tau_prev[i]
                c_ref[i] = c_prev[i]
                _rebuild(i, ref[i], thetas, coef, k, zeta, powers, c_ref, work, False)
            else:
                ref[i] = tau[i]
                _rebuild(i, ref[i], thetas, coef, k, zeta, powers, c_ref, work, True)
        delta = tau[i] - ref[i]
        theta = thetas[i, target]
        d = zeta + ref[i] - theta
        c_ref[i] += added * math.log(d)
        x = 1.0 / d
        px = x
        for q in range(N_POWERS):
            powers[i, q] += added * px
            px *= x
        dc, h = _series(i, delta, powers)
        c_new[i] = c_ref[i] + dc
        hazard[i] = h


@numba.njit(cache=True)
def gather_rows(a, idx, k):
    """``a[:, :k] = a[idx, :k]`` in place for non-decreasing ``idx``."""
    n = idx.size
    # rows taking an earlier ancestor, last first, then rows taking a later one
    for i in range(n - 1, -1, -1):
        src = idx[i]
        if src < i:
            for j in range(k):
                a[i, j] = a[src, j]
    for i in range(n):
        src = idx[i]
        if src > i:
            for j in range(k):
                a[i, j] = a[src, j]
