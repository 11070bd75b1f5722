"""Compiled integration kernels for the sine-coupled chain.

These duplicate the Dormand-Prince 5(4) scheme of numerics.integrate_ode
(same tableau, same PI controller) specialized to the sine coupling, so
that continuation and Monte Carlo work run at compiled speed on plain
float arrays.  flows.Flow dispatches between this path and the generic
one; the test suite pins both against each other.

Status codes: 0 = reached the end time, 1 = step underflow, 2 = stopped
early inside the trapping ball.
"""
from __future__ import annotations

import numpy as np
from numba import njit

OK = 0
UNDERFLOW = 1
TRAPPED = 2

_A = np.array([
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1 / 5, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3 / 40, 9 / 40, 0.0, 0.0, 0.0, 0.0],
    [44 / 45, -56 / 15, 32 / 9, 0.0, 0.0, 0.0],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729, 0.0, 0.0],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656, 0.0],
])
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920,
               -17253 / 339200, 22 / 525, -1 / 40])


@njit(cache=True)
def _rhs(y, n, k, omega, aug, out):
    """Velocity of the reduced flow; with aug also the variational flow
    dV = C diag(cos x) V on the trailing n*n slots (V stored row-major).

    The tridiagonal stencil: row j couples to j-1 with weight k and to
    j+1 with weight 1, matching the coupling matrix orientation.
    """
    for i in range(n):
        out[i] = omega[i] - (1.0 + k) * np.sin(y[i])
    for i in range(n - 1):
        out[i] += np.sin(y[i + 1])
        out[i + 1] += k * np.sin(y[i])
    if aug:
        for j in range(n):
            for l in range(n):
                acc = -(1.0 + k) * np.cos(y[j]) * y[n + j * n + l]
                if j > 0:
                    acc += k * np.cos(y[j - 1]) * y[n + (j - 1) * n + l]
                if j < n - 1:
                    acc += np.cos(y[j + 1]) * y[n + (j + 1) * n + l]
                out[n + j * n + l] = acc
    return out


@njit(cache=True)
def _initial_step(y, f0, n, k, omega, aug, rtol, atol):
    dim = y.shape[0]
    d0 = 0.0
    d1 = 0.0
    for i in range(dim):
        sc = atol + rtol * abs(y[i])
        d0 += (y[i] / sc) ** 2
        d1 += (f0[i] / sc) ** 2
    d0 = np.sqrt(d0 / dim)
    d1 = np.sqrt(d1 / dim)
    if d0 < 1e-5 or d1 < 1e-5:
        h0 = 1e-6
    else:
        h0 = 0.01 * d0 / d1
    y1 = y + h0 * f0
    f1 = np.empty(dim)
    _rhs(y1, n, k, omega, aug, f1)
    d2 = 0.0
    for i in range(dim):
        sc = atol + rtol * abs(y[i])
        d2 += ((f1[i] - f0[i]) / sc) ** 2
    d2 = np.sqrt(d2 / dim) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100.0 * h0, h1)


@njit(cache=True)
def advance(y, n, k, omega, t0, t1, rtol, atol, max_step, h_init, aug,
            target, radius):
    """Advance y in place from t0 to t1; same DP5(4)/PI scheme as the
    generic integrator.

    h_init <= 0 selects the step automatically.  radius > 0 enables the
    trapping check: stop at the first accepted step whose state lies
    within torus 2-norm radius of target (base components only).
    Returns (status, t_reached, h_last).
    """
    dim = y.shape[0]
    if t1 == t0:
        return OK, t0, h_init
    direction = 1.0 if t1 > t0 else -1.0
    span = abs(t1 - t0)

    K = np.empty((7, dim))
    f0 = np.empty(dim)
    _rhs(y, n, k, omega, aug, f0)
    for i in range(dim):
        K[0, i] = f0[i]
    if h_init > 0.0:
        h_abs = h_init
    else:
        h_abs = _initial_step(y, f0, n, k, omega, aug, rtol, atol)
    h_abs = min(h_abs, max_step, span)

    t = t0
    fac_old = 1e-4
    rejected_last = False
    y_new = np.empty(dim)
    y_stage = np.empty(dim)
    f_stage = np.empty(dim)

    while (t1 - t) * direction > 0.0:
        tiny = 16.0 * 2.220446049250313e-16 * max(abs(t), abs(t1), 1.0)
        if h_abs < tiny:
            return UNDERFLOW, t, h_abs
        h = direction * min(h_abs, abs(t1 - t))

        for s in range(1, 6):
            for i in range(dim):
                acc = 0.0
                for q in range(s):
                    acc += _A[s, q] * K[q, i]
                y_stage[i] = y[i] + h * acc
            _rhs(y_stage, n, k, omega, aug, f_stage)
            for i in range(dim):
                K[s, i] = f_stage[i]
        for i in range(dim):
            acc = 0.0
            for q in range(6):
                acc += _B[q] * K[q, i]
            y_new[i] = y[i] + h * acc
        _rhs(y_new, n, k, omega, aug, f_stage)
        for i in range(dim):
            K[6, i] = f_stage[i]

        err = 0.0
        bad = False
        for i in range(dim):
            e = 0.0
            for q in range(7):
                e += _E[q] * K[q, i]
            e *= h
            sc = atol + rtol * max(abs(y[i]), abs(y_new[i]))
            err += (e / sc) ** 2
            if not np.isfinite(y_new[i]):
                bad = True
        err = np.sqrt(err / dim)
        if bad or not np.isfinite(err):
            err = 10.0

        if err <= 1.0:
            t = t + h
            for i in range(dim):
                y[i] = y_new[i]
                K[0, i] = K[6, i]
            if err == 0.0:
                factor = 10.0
            else:
                factor = 0.9 * err ** -0.17 * fac_old ** 0.04
                factor = min(10.0, max(0.2, factor))
            if rejected_last:
                factor = min(1.0, factor)
            h_abs = min(abs(h) * factor, max_step)
            fac_old = max(err, 1e-4)
            rejected_last = False
            if radius > 0.0:
                dist2 = 0.0
                for i in range(n):
                    d = abs(y[i] - target[i]) % (2.0 * np.pi)
                    d = min(d, 2.0 * np.pi - d)
                    dist2 += d * d
                if dist2 <= radius * radius:
                    return TRAPPED, t, h_abs
        else:
            h_abs = abs(h) * max(0.2, 0.9 * err ** -0.2)
            rejected_last = True
    return OK, t, h_abs


@njit(cache=True)
def sample(y, n, k, omega, t_grid, rtol, atol, max_step, out):
    """Fill out[j] with the state at t_grid[j]; y enters as the state at
    t_grid[0] and leaves as the final state.  Returns a status code."""
    for i in range(n):
        out[0, i] = y[i]
    h = -1.0
    for j in range(1, t_grid.shape[0]):
        status, _, h = advance(y, n, k, omega, t_grid[j - 1], t_grid[j],
                               rtol, atol, max_step, h, False, y, -1.0)
        if status != OK:
            return status
        for i in range(n):
            out[j, i] = y[i]
    return OK


@njit(cache=True)
def basin_chunk(states, ks, omegas, deltas, active, t0, t1, radius,
                rtol, atol, trap_times, failed):
    """Advance every active realization from t0 to t1 with trapping checks
    against its own sink (delta, ..., delta).

    states is (n_real, N) and is updated in place; trap_times[i] records
    the first trapping time (-1 while untrapped); integrator failures mark
    failed[i] and deactivate the realization.
    """
    n_real, n = states.shape
    target = np.empty(n)
    for r in range(n_real):
        if not active[r]:
            continue
        for i in range(n):
            target[i] = deltas[r]
        status, t_reached, _ = advance(states[r], n, ks[r], omegas[r],
                                       t0, t1, rtol, atol, 1e18, -1.0,
                                       False, target, radius)
        if status == TRAPPED:
            trap_times[r] = t_reached
            active[r] = False
        elif status == UNDERFLOW:
            failed[r] = True
            active[r] = False
    return 0
