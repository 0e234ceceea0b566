"""Compiled inner loops for bulk iteration of the EVM.

State vectors are ``[Q, P, s_qq, s_pp, s_qp]``; ``tm`` is ``[t_qq, t_qp, t_pq,
t_pp]`` and ``nm`` is ``[s_ss, s_cc, s_sc]``.  The classical map is the same
kernel with zero moments and zero noise (``dim == 2`` restricts the tangent
dynamics to ``(Q, P)``).  Arithmetic order mirrors ``core_map.quantum_step``.
"""

import math

import numpy as np
from numba import njit

ESCAPE_BOUND = 1.0e6
_BIG = 1.0e150


@njit(cache=True, nogil=True)
def escaped(x):
    for i in range(5):
        if not math.isfinite(x[i]):
            return True
    return abs(x[0]) > ESCAPE_BOUND or abs(x[1]) > ESCAPE_BOUND


@njit(cache=True, nogil=True)
def step(x, out, tm, v0, nm, gamma, omega0):
    t_qq, t_qp, t_pq, t_pp = tm[0], tm[1], tm[2], tm[3]
    q, p, s_qq, s_pp, s_qp = x[0], x[1], x[2], x[3], x[4]
    q1 = t_qq * q + t_qp * p
    g = v0 * math.exp(-q1 * q1)
    v1 = -g
    v2 = 2.0 * q1 * g
    v3 = g * (2.0 - 4.0 * q1 * q1)

    a = gamma + v2
    w2 = omega0 * omega0
    ff = nm[0] / w2
    hh = (a * a * nm[0] + w2 * nm[1] - omega0 * a * nm[2]) / w2
    fh = (-2.0 * a * nm[0] + omega0 * nm[2]) / w2

    s_qq1 = t_qq**2 * s_qq + t_qp**2 * s_pp + t_qq * t_qp * s_qp + ff
    p1 = t_pq * q + t_pp * p - v1 - 0.5 * v3 * s_qq1
    r_pq = t_pq - v2 * t_qq
    r_pp = t_pp - v2 * t_qp
    s_pp1 = r_pq**2 * s_qq + r_pp**2 * s_pp + r_pq * r_pp * s_qp + hh
    s_qp1 = (
        2.0 * r_pq * t_qq * s_qq
        + 2.0 * t_qp * r_pp * s_pp
        + (r_pq * t_qp + r_pp * t_qq) * s_qp
        + fh
    )
    out[0] = q1
    out[1] = p1
    out[2] = s_qq1
    out[3] = s_pp1
    out[4] = s_qp1


@njit(cache=True, nogil=True)
def jacobian(x, jac, tm, v0, nm, gamma, omega0):
    """Analytic 5x5 Jacobian of ``step`` at ``x`` (written into ``jac``)."""
    t_qq, t_qp, t_pq, t_pp = tm[0], tm[1], tm[2], tm[3]
    s_qq, s_pp, s_qp = x[2], x[3], x[4]
    q1 = t_qq * x[0] + t_qp * x[1]
    g = v0 * math.exp(-q1 * q1)
    v2 = 2.0 * q1 * g
    v3 = g * (2.0 - 4.0 * q1 * q1)
    v4 = g * (8.0 * q1**3 - 12.0 * q1)
    w2 = omega0 * omega0
    ff = nm[0] / w2
    s_qq1 = t_qq**2 * s_qq + t_qp**2 * s_pp + t_qq * t_qp * s_qp + ff
    r_pq = t_pq - v2 * t_qq
    r_pp = t_pp - v2 * t_qp
    dr_pq = -v3 * t_qq
    dr_pp = -v3 * t_qp

    for i in range(5):
        for j in range(5):
            jac[i, j] = 0.0

    jac[0, 0] = t_qq
    jac[0, 1] = t_qp

    # derivative of s_qq1 along the sigma directions
    ds = (t_qq * t_qq, t_qp * t_qp, t_qq * t_qp)

    # P' = t_pq Q + t_pp P - V'(Q') - V'''(Q') s_qq1 / 2
    dp_dq1 = -v2 - 0.5 * v4 * s_qq1
    jac[1, 0] = t_pq + dp_dq1 * t_qq
    jac[1, 1] = t_pp + dp_dq1 * t_qp
    for k in range(3):
        jac[1, 2 + k] = -0.5 * v3 * ds[k]

    for k in range(3):
        jac[2, 2 + k] = ds[k]

    dhh = (2.0 * (gamma + v2) * nm[0] - omega0 * nm[2]) / w2
    dspp_dq1 = (
        2.0 * r_pq * dr_pq * s_qq
        + 2.0 * r_pp * dr_pp * s_pp
        + (dr_pq * r_pp + r_pq * dr_pp) * s_qp
        + dhh * v3
    )
    jac[3, 0] = dspp_dq1 * t_qq
    jac[3, 1] = dspp_dq1 * t_qp
    jac[3, 2] = r_pq * r_pq
    jac[3, 3] = r_pp * r_pp
    jac[3, 4] = r_pq * r_pp

    # the noise and sigma contributions collapse to -2 V''' s_qq1
    dsqp_dq1 = -2.0 * v3 * s_qq1
    jac[4, 0] = dsqp_dq1 * t_qq
    jac[4, 1] = dsqp_dq1 * t_qp
    jac[4, 2] = 2.0 * r_pq * t_qq
    jac[4, 3] = 2.0 * t_qp * r_pp
    jac[4, 4] = r_pq * t_qp + r_pp * t_qq


@njit(cache=True, nogil=True)
def iterate(x0, n_transient, n_record, tm, v0, nm, gamma, omega0):
    """Run ``n_transient`` kicks, then record ``n_record`` states.

    Returns ``(records, escape_index)``; ``escape_index`` is -1 if the orbit
    stayed bounded, else the kick at which it escaped (records after it are NaN).
    """
    rec = np.full((n_record, 5), np.nan)
    x = x0.copy()
    y = np.empty(5)
    for n in range(n_transient + n_record):
        step(x, y, tm, v0, nm, gamma, omega0)
        x[:] = y
        if escaped(x):
            return rec, n
        if n >= n_transient:
            rec[n - n_transient, :] = x
    return rec, -1


@njit(cache=True, nogil=True)
def iterate_with_jacobian(x0, period, tm, v0, nm, gamma, omega0, dim):
    """``period``-fold map and its Jacobian (product of one-kick Jacobians)."""
    x = x0.copy()
    y = np.empty(5)
    jac = np.empty((5, 5))
    total = np.eye(dim)
    for _ in range(period):
        jacobian(x, jac, tm, v0, nm, gamma, omega0)
        total = np.ascontiguousarray(jac[:dim, :dim]) @ total
        step(x, y, tm, v0, nm, gamma, omega0)
        x[:] = y
    return x, total


@njit(cache=True, nogil=True)
def amplitude_norm(v, gamma, omega0):
    """Tangent norm in which free damped motion contracts by exactly ``exp(-gamma tau)``.

    ``(x, p)`` is measured by the oscillation amplitude ``w0^2 x^2 + (p + gamma x)^2``;
    the moment components keep the Euclidean norm.
    """
    a = omega0 * v[0]
    b = v[1] + gamma * v[0]
    acc = a * a + b * b
    for i in range(2, v.shape[0]):
        acc += v[i] * v[i]
    return math.sqrt(acc)


@njit(cache=True, nogil=True)
def lyapunov_blocks(x0, v_init, n_transient, n_iter, n_blocks, renorm_every,
                    tm, v0, nm, gamma, omega0, dim):
    """Benettin estimate of the largest exponent, split into blocks.

    A tangent vector of length ``dim`` is propagated alongside the orbit and
    renormalized every ``renorm_every`` kicks, at every block boundary, and
    whenever its norm leaves ``[1/_BIG, _BIG]``; lengths use ``amplitude_norm``,
    which removes the bounded rotation term for the linear map.  The transient aligns the
    tangent vector without accumulating.  Returns ``(block_sums, escaped, x)``
    where ``block_sums[b]`` is the summed log growth over block ``b``.
    """
    x = x0.copy()
    y = np.empty(5)
    jac = np.empty((5, 5))
    v = v_init[:dim].copy()
    v /= amplitude_norm(v, gamma, omega0)
    w = np.empty(dim)
    sums = np.zeros(n_blocks)
    block_len = n_iter // n_blocks
    total = n_transient + block_len * n_blocks
    since = 0
    for n in range(total):
        jacobian(x, jac, tm, v0, nm, gamma, omega0)
        for i in range(dim):
            acc = 0.0
            for j in range(dim):
                acc += jac[i, j] * v[j]
            w[i] = acc
        v[:] = w
        step(x, y, tm, v0, nm, gamma, omega0)
        x[:] = y
        if escaped(x):
            return sums, True, x
        since += 1
        k = n - n_transient
        norm = amplitude_norm(v, gamma, omega0)
        boundary = k == -1 or (k >= 0 and (k + 1) % block_len == 0)
        if since >= renorm_every or boundary or norm > _BIG or norm < 1.0 / _BIG:
            if norm == 0.0 or not math.isfinite(norm):
                return sums, True, x
            v /= norm
            since = 0
            if k >= 0:
                sums[k // block_len] += math.log(norm)
    return sums, False, x
