"""Compiled Dormand-Prince stepping for tridiagonal linear systems with quadrature accumulators.

Integrates ``y' = G y`` together with quadrature accumulators: either one
scalar ``acc_j' = t^p_j / p_j! * (c @ y)`` per requested power, or a vector
``acc' = t^p / p! * y`` (``vector_acc``, first power only).  Step-size control mirrors :class:`micromaser.propagator.DormandPrince`.
"""
import math

import numpy as np
from numba import njit

_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = np.zeros((7, 7))
_A[1, :1] = [1 / 5]
_A[2, :2] = [3 / 40, 9 / 40]
_A[3, :3] = [44 / 45, -56 / 15, 32 / 9]
_A[4, :4] = [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]
_A[5, :5] = [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]
_A[6, :6] = [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])

STATUS_OK = 0
STATUS_UNDERFLOW = 1
STATUS_BUDGET = 2


@njit(cache=True)
def _rhs(t, z, lower, diag, upper, c, vector_acc, powers, facts, out):
    n = diag.size
    for i in range(n):
        v = diag[i] * z[i]
        if i > 0:
            v += lower[i - 1] * z[i - 1]
        if i < n - 1:
            v += upper[i] * z[i + 1]
        out[i] = v
    if vector_acc:
        w = t ** powers[0] / facts[0]
        for i in range(n):
            out[n + i] = w * z[i]
    else:
        s = 0.0
        for i in range(n):
            s += c[i] * z[i]
        for j in range(powers.size):
            out[n + j] = t ** powers[j] / facts[j] * s


@njit(cache=True)
def dopri_tridiag(lower, diag, upper, c, vector_acc, powers, z, t, t_end, h, rtol, atol,
                  max_steps, stats):
    """Advance ``z`` (state followed by accumulators) from ``t`` to ``t_end`` in place.

    ``stats`` holds [steps, rejected, est_error, max_trace_increase] and is
    updated in place.  Returns (status, t, h).
    """
    n = diag.size
    size = z.size
    facts = np.ones(powers.size)
    for m in range(powers.size):
        for j in range(2, powers[m] + 1):
            facts[m] *= j
    k = np.empty((7, size))
    yi = np.empty(size)
    err = np.empty(size)
    _rhs(t, z, lower, diag, upper, c, vector_acc, powers, facts, k[0])
    u_prev = 0.0
    for i in range(n):
        u_prev += z[i]
    while t < t_end:
        if stats[0] + stats[1] > max_steps:
            return STATUS_BUDGET, t, h
        step = min(h, t_end - t)
        for s in range(1, 7):
            for i in range(size):
                acc = 0.0
                for j in range(s):
                    acc += _A[s, j] * k[j, i]
                yi[i] = z[i] + step * acc
            _rhs(t + _C[s] * step, yi, lower, diag, upper, c, vector_acc, powers, facts, k[s])
        ssq = 0.0
        err_l1 = 0.0
        for i in range(size):
            e = 0.0
            for j in range(7):
                e += _E[j] * k[j, i]
            e *= step
            err[i] = e
            sc = atol + rtol * max(abs(z[i]), abs(yi[i]))
            ssq += (e / sc) ** 2
            err_l1 += abs(e)
        err_norm = math.sqrt(ssq / size)
        if err_norm <= 1.0:
            truncated = step != h
            t = t_end if step == t_end - t else t + step
            u = 0.0
            for i in range(size):
                z[i] = yi[i]
            for i in range(n):
                u += z[i]
            if u - u_prev > stats[3]:
                stats[3] = u - u_prev
            u_prev = u
            for i in range(size):
                k[0, i] = k[6, i]
            stats[0] += 1
            stats[2] += err_l1
            if err_norm == 0.0:
                fac = 5.0
            else:
                fac = min(5.0, max(0.2, 0.9 * err_norm ** -0.2))
            if not truncated or fac < 1.0:
                h = step * fac
        else:
            stats[1] += 1
            if math.isfinite(err_norm):
                h = step * max(0.2, 0.9 * err_norm ** -0.2)
            else:
                h = step * 0.2
        if h < 1e-14 * max(1.0, abs(t)):
            return STATUS_UNDERFLOW, t, h
    return STATUS_OK, t, h


@njit(cache=True)
def rk4_tridiag(lower, diag, upper, c, vector_acc, powers, z, t, t_end, step, stats):
    """Classical RK4 from ``t`` to ``t_end`` in equal steps no longer than ``step``; returns t_end."""
    n = diag.size
    size = z.size
    nsteps = math.ceil((t_end - t) / step - 1e-12)
    if nsteps <= 0:
        return t
    h = (t_end - t) / nsteps
    facts = np.ones(powers.size)
    for m in range(powers.size):
        for j in range(2, powers[m] + 1):
            facts[m] *= j
    k1 = np.empty(size)
    k2 = np.empty(size)
    k3 = np.empty(size)
    k4 = np.empty(size)
    tmp = np.empty(size)
    t0 = t
    u_prev = 0.0
    for i in range(n):
        u_prev += z[i]
    for s in range(nsteps):
        ts = t0 + s * h
        _rhs(ts, z, lower, diag, upper, c, vector_acc, powers, facts, k1)
        for i in range(size):
            tmp[i] = z[i] + 0.5 * h * k1[i]
        _rhs(ts + 0.5 * h, tmp, lower, diag, upper, c, vector_acc, powers, facts, k2)
        for i in range(size):
            tmp[i] = z[i] + 0.5 * h * k2[i]
        _rhs(ts + 0.5 * h, tmp, lower, diag, upper, c, vector_acc, powers, facts, k3)
        for i in range(size):
            tmp[i] = z[i] + h * k3[i]
        _rhs(ts + h, tmp, lower, diag, upper, c, vector_acc, powers, facts, k4)
        u = 0.0
        for i in range(size):
            z[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
        for i in range(n):
            u += z[i]
        if u - u_prev > stats[3]:
            stats[3] = u - u_prev
        u_prev = u
        stats[0] += 1
    return t_end
