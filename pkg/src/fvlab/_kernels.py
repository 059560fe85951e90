"""Compiled Euler-Maruyama stepping shared by single paths and particle systems.

The kernel advances N particles on a common clock, one row of ``normals`` per
step, until a particle crosses the absorption level, the horizon is reached,
or the block of normals is used up.  On a crossing the whole system is moved
to the interpolated crossing time and the crossing particles are flagged in
``dying`` and left at eps_abs; relocation is left to the caller.  If every
particle of a multi-particle system proposes a value below the level in the
same step the status is ``ALL_CROSSED``.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

BESSEL = 0
POWER_REFLECTED = 1
SQUARED_BESSEL = 2
POWER_FREE = 3

UPPER_BARRIER = 2.0

BLOCK_DONE = 0
CROSSED = 1
HORIZON = 2
ALL_CROSSED = 3


@njit(cache=True)
def drift(law, p, x):
    if law == BESSEL:
        return (p - 1.0) / (2.0 * x)
    if law == SQUARED_BESSEL:
        return p
    return -1.0 / (p * x ** (p - 1.0))


@njit(cache=True)
def step_cap(law, p, x, dt_base, kappa):
    if law == BESSEL:
        return min(dt_base, kappa * x * x)
    if law == SQUARED_BESSEL:
        return dt_base
    # power drift: keep both the noise (kappa x^2) and the drift (kappa beta x^beta) relative
    return min(dt_base, kappa * x * x, kappa * p * x**p)


@njit(cache=True)
def reflect_upper(value, barrier):
    if value <= barrier:
        return value
    return 2.0 * barrier - value


@njit(cache=True)
def advance(law, p, x, clock, normals, horizon, dt_base, kappa, eps_abs,
            couple, couple_dim, yhat, record, rec_t, rec_x, rec_aux, dying, prop):
    """Step until crossing / horizon / end of block.

    ``clock`` holds (t, kahan compensation); ``yhat`` holds the coupled
    Bessel(couple_dim) value.  Returns (rows used, rows recorded, status).
    """
    n = x.shape[0]
    nb = normals.shape[0]
    t = clock[0]
    comp = clock[1]
    nrec = 0
    for s in range(nb):
        if t >= horizon:
            clock[0] = t
            clock[1] = comp
            return s, nrec, HORIZON

        dt = dt_base
        for i in range(n):
            c = step_cap(law, p, x[i], dt_base, kappa)
            if c < dt:
                dt = c
        if couple and yhat[0] > 0.0:
            c = kappa * yhat[0] * yhat[0]
            if c < dt:
                dt = c
        if t + dt > horizon:
            dt = horizon - t
        sq = math.sqrt(dt)

        fmin = 2.0
        n_below = 0
        for i in range(n):
            xi = x[i]
            if law == SQUARED_BESSEL:
                y = xi + p * dt + 2.0 * math.sqrt(abs(xi)) * sq * normals[s, i]
            else:
                y = xi + drift(law, p, xi) * dt + sq * normals[s, i]
            if law == POWER_REFLECTED:
                y = reflect_upper(y, UPPER_BARRIER)
            prop[i] = y
            if y <= eps_abs:
                n_below += 1
                f = (xi - eps_abs) / (xi - y)
                if f < fmin:
                    fmin = f

        crossed = fmin <= 1.0
        frac = fmin if crossed else 1.0
        h = frac * dt

        if couple:
            y_old = 0.0
            y_new = 0.0
            for i in range(n):
                y_old += x[i] * x[i]

        for i in range(n):
            dying[i] = False
            if crossed:
                xi = x[i]
                y = prop[i]
                if y <= eps_abs and (xi - eps_abs) / (xi - y) <= fmin:
                    dying[i] = True
                    prop[i] = eps_abs
                else:
                    prop[i] = xi + frac * (y - xi)
        if couple:
            for i in range(n):
                y_new += prop[i] * prop[i]
            y_old = math.sqrt(y_old)
            y_new = math.sqrt(y_new)
            yh = yhat[0]
            if yh == y_old:
                # coalesced paths stay together (pathwise uniqueness)
                yhat[0] = y_new
            elif yh > 0.0:
                db = (y_new - y_old) - (couple_dim - 1.0) / (2.0 * y_old) * h
                yh = yh + db + (couple_dim - 1.0) / (2.0 * yh) * h
                yhat[0] = yh if yh > eps_abs else 0.0

        for i in range(n):
            x[i] = prop[i]

        # compensated clock: steps near 0 can be far below ulp(t)
        yv = h - comp
        tt = t + yv
        comp = (tt - t) - yv
        t = tt

        if record:
            rec_t[nrec] = t
            for i in range(n):
                rec_x[nrec, i] = x[i]
            rec_aux[nrec] = yhat[0]
            nrec += 1

        if crossed:
            clock[0] = t
            clock[1] = comp
            if n > 1 and n_below == n:
                return s + 1, nrec, ALL_CROSSED
            return s + 1, nrec, CROSSED

    clock[0] = t
    clock[1] = comp
    return nb, nrec, BLOCK_DONE


def warm_up() -> None:
    """Trigger compilation (or cache load) of the kernel."""
    x = np.array([1.0])
    advance(BESSEL, 0.0, x, np.zeros(2), np.zeros((1, 1)), 1.0, 1e-3, 0.01, 1e-6,
            False, 0.0, np.zeros(1), False, np.zeros(1), np.zeros((1, 1)), np.zeros(1),
            np.zeros(1, dtype=np.bool_), np.zeros(1))
