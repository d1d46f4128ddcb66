"""Compiled inner loops for the coordinate solvers.

The sweep kernels mirror the pure reference logic in ``coordinate`` and
``huber`` operation for operation (same expressions, same breakpoint
handling), they just run under numba. Keep the two in sync: the fixed-point
tests compare kernel output against the reference single-coordinate
minimizers.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def _piecewise_min_nb(a, b, pos, jmp, m):
    """Minimize 0.5*a*(t-b)^2 + sum jmp|t - pos| over t; pos[:m]/jmp[:m] are scratch-owned."""
    if m == 0:
        return b
    # insertion sort by position (m is a node degree plus one: small)
    for i in range(1, m):
        cp, cj = pos[i], jmp[i]
        j = i - 1
        while j >= 0 and pos[j] > cp:
            pos[j + 1] = pos[j]
            jmp[j + 1] = jmp[j]
            j -= 1
        pos[j + 1] = cp
        jmp[j + 1] = cj
    # merge coincident positions, summing jumps
    out = 0
    for i in range(1, m):
        if pos[i] == pos[out]:
            jmp[out] += jmp[i]
        else:
            out += 1
            pos[out] = pos[i]
            jmp[out] = jmp[i]
    m = out + 1
    total = 0.0
    for i in range(m):
        total += jmp[i]
    cum = 0.0
    prev_cum = 0.0
    for j in range(m):
        prev_cum = cum
        cum += jmp[j]
        right = a * (pos[j] - b) + (2.0 * cum - total)
        if right >= 0.0:
            if right - 2.0 * jmp[j] <= 0.0:
                return pos[j]
            shift = (2.0 * prev_cum - total) if j > 0 else -total
            return b - shift / a
    return b - total / a


@njit(cache=True)
def cd_sweeps(X, r, beta, a, order, offsets, nbr, wts, node_w, lam1, lam2, tol, max_sweeps):
    """Cyclic exact sweeps over ``order`` until the largest move drops below ``tol``.

    Mutates ``beta`` and the residual ``r`` in place; returns
    ``(sweeps_used, converged)``.
    """
    n = X.shape[0]
    maxdeg = 1
    for idx in range(order.shape[0]):
        k = order[idx]
        deg = offsets[k + 1] - offsets[k]
        if deg + 1 > maxdeg:
            maxdeg = deg + 1
    pos = np.empty(maxdeg)
    jmp = np.empty(maxdeg)
    sweeps = 0
    if order.shape[0] == 0:
        return 0, True
    while sweeps < max_sweeps:
        sweeps += 1
        max_delta = 0.0
        for idx in range(order.shape[0]):
            k = order[idx]
            old = beta[k]
            acc = 0.0
            for i in range(n):
                acc += X[i, k] * r[i]
            rho = acc + a[k] * old
            b = rho / a[k]
            m = 0
            if lam2 > 0.0:
                for j in range(offsets[k], offsets[k + 1]):
                    pos[m] = beta[nbr[j]]
                    jmp[m] = lam2 * wts[j]
                    m += 1
            if lam1 > 0.0:
                pos[m] = 0.0
                jmp[m] = lam1 * node_w[k]
                m += 1
            new = _piecewise_min_nb(a[k], b, pos, jmp, m)
            if new != old:
                beta[k] = new
                diff = old - new
                for i in range(n):
                    r[i] += X[i, k] * diff
                delta = new - old if new > old else old - new
                if delta > max_delta:
                    max_delta = delta
        if max_delta < tol:
            return sweeps, True
    return sweeps, False


@njit(cache=True)
def cd_expand(X, r, beta, a, candidates, offsets, nbr, wts, node_w, lam1, lam2, grew):
    """Mark zero coordinates whose single-coordinate minimizer is nonzero."""
    n = X.shape[0]
    maxdeg = 1
    for idx in range(candidates.shape[0]):
        k = candidates[idx]
        deg = offsets[k + 1] - offsets[k]
        if deg + 1 > maxdeg:
            maxdeg = deg + 1
    pos = np.empty(maxdeg)
    jmp = np.empty(maxdeg)
    any_grew = False
    for idx in range(candidates.shape[0]):
        k = candidates[idx]
        acc = 0.0
        for i in range(n):
            acc += X[i, k] * r[i]
        b = acc / a[k]
        m = 0
        if lam2 > 0.0:
            for j in range(offsets[k], offsets[k + 1]):
                pos[m] = beta[nbr[j]]
                jmp[m] = lam2 * wts[j]
                m += 1
        if lam1 > 0.0:
            pos[m] = 0.0
            jmp[m] = lam1 * node_w[k]
            m += 1
        if _piecewise_min_nb(a[k], b, pos, jmp, m) != 0.0:
            grew[k] = True
            any_grew = True
    return any_grew


@njit(cache=True)
def _huber_phi(t, a, b, side_sign, l1w, vals, caps, m, M):
    out = a * (t - b) + side_sign * l1w
    for e in range(m):
        z = M * (t - vals[e])
        if z > 1.0:
            z = 1.0
        elif z < -1.0:
            z = -1.0
        out += caps[e] * z
    return out


@njit(cache=True)
def _huber_min_nb(a, b, l1w, vals, caps, m, M, knots):
    """Exact minimizer of the smoothed single-coordinate subproblem.

    ``knots`` is scratch of length >= 2*m. Mirrors the reference logic: handle
    the single kink at zero, then scan the smoothing knots on the root's side.
    """
    if l1w > 0.0:
        at0 = _huber_phi(0.0, a, b, 0.0, 0.0, vals, caps, m, M)
        if at0 - l1w <= 0.0 <= at0 + l1w:
            return 0.0
        side = 1.0 if at0 + l1w < 0.0 else -1.0
        start = 0.0
    else:
        at0 = _huber_phi(b, a, b, 0.0, 0.0, vals, caps, m, M)
        if at0 == 0.0:
            return b
        side = 1.0 if at0 < 0.0 else -1.0
        start = b
    nk = 0
    for e in range(m):
        lo = vals[e] - 1.0 / M
        hi = vals[e] + 1.0 / M
        if side > 0.0:
            if lo > start:
                knots[nk] = lo
                nk += 1
            if hi > start:
                knots[nk] = hi
                nk += 1
        else:
            if lo < start:
                knots[nk] = lo
                nk += 1
            if hi < start:
                knots[nk] = hi
                nk += 1
    # sort ascending, walk in root direction
    for i in range(1, nk):
        c = knots[i]
        j = i - 1
        while j >= 0 and knots[j] > c:
            knots[j + 1] = knots[j]
            j -= 1
        knots[j + 1] = c
    sgn = side if l1w > 0.0 else 0.0
    prev_t = start
    prev_phi = _huber_phi(start, a, b, sgn, l1w, vals, caps, m, M)
    if side > 0.0:
        for i in range(nk):
            t_k = knots[i]
            cur = _huber_phi(t_k, a, b, sgn, l1w, vals, caps, m, M)
            if cur >= 0.0:
                return prev_t + (t_k - prev_t) * (-prev_phi) / (cur - prev_phi)
            prev_t = t_k
            prev_phi = cur
    else:
        for i in range(nk - 1, -1, -1):
            t_k = knots[i]
            cur = _huber_phi(t_k, a, b, sgn, l1w, vals, caps, m, M)
            if cur <= 0.0:
                return prev_t + (t_k - prev_t) * (-prev_phi) / (cur - prev_phi)
            prev_t = t_k
            prev_phi = cur
    return prev_t - prev_phi / a


@njit(cache=True)
def huber_sweeps(X, r, beta, a, offsets, nbr, wts, node_w, lam1, lam2, M, max_sweeps, sweep_tol):
    """At most ``max_sweeps`` smoothed sweeps over all coordinates; mutates beta and r."""
    n, p = X.shape
    maxdeg = 1
    for k in range(p):
        deg = offsets[k + 1] - offsets[k]
        if deg > maxdeg:
            maxdeg = deg
    vals = np.empty(maxdeg)
    caps = np.empty(maxdeg)
    knots = np.empty(2 * maxdeg)
    sweeps = 0
    while sweeps < max_sweeps:
        sweeps += 1
        max_delta = 0.0
        for k in range(p):
            old = beta[k]
            acc = 0.0
            for i in range(n):
                acc += X[i, k] * r[i]
            b = (acc + a[k] * old) / a[k]
            m = 0
            if lam2 > 0.0:
                for j in range(offsets[k], offsets[k + 1]):
                    vals[m] = beta[nbr[j]]
                    caps[m] = lam2 * wts[j]
                    m += 1
            new = _huber_min_nb(a[k], b, lam1 * node_w[k], vals, caps, m, M, knots)
            if new != old:
                beta[k] = new
                diff = old - new
                for i in range(n):
                    r[i] += X[i, k] * diff
                delta = new - old if new > old else old - new
                if delta > max_delta:
                    max_delta = delta
        if max_delta < sweep_tol:
            break
    return sweeps
