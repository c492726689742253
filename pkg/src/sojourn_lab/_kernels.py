"""Compiled inner loops for the radial phase-shift solvers.

The radial potential is passed as four parallel arrays describing a sum of
terms ``coef * r**(-power) * cos(freq * log(r) + phase)``.  All routines
work in the scaled variable ``rho = r / h`` at unit energy.
"""

import numpy as np
from numba import njit
from scipy.integrate._ivp import dop853_coefficients as _dop

_A = np.ascontiguousarray(_dop.A[:12, :12])
_B = np.ascontiguousarray(_dop.B)
_C = np.ascontiguousarray(_dop.C[:12])
_E3 = np.ascontiguousarray(_dop.E3[:12])
_E5 = np.ascontiguousarray(_dop.E5[:12])


@njit(cache=True)
def radial_potential(r, coef, power, freq, phase):
    v = 0.0
    lr = np.log(r)
    for j in range(coef.size):
        t = coef[j] * np.exp(-power[j] * lr)
        if freq[j] != 0.0 or phase[j] != 0.0:
            t *= np.cos(freq[j] * lr + phase[j])
        v += t
    return v


@njit(cache=True)
def radial_potential_deriv(r, coef, power, freq, phase):
    dv = 0.0
    lr = np.log(r)
    for j in range(coef.size):
        base = coef[j] * np.exp(-(power[j] + 1.0) * lr)
        arg = freq[j] * lr + phase[j]
        dv += base * (-power[j] * np.cos(arg) - freq[j] * np.sin(arg))
    return dv


@njit(cache=True)
def _phase_rhs(rho, y, out, nu2, h, coef, power, freq, phase):
    q = 1.0 - (nu2 - 0.25) / (rho * rho)
    v = radial_potential(h * rho, coef, power, freq, phase)
    out[0] = y[1]
    out[1] = -q * y[0]
    out[2] = y[3]
    out[3] = -q * y[2]
    s = y[0] * np.cos(y[4]) + y[2] * np.sin(y[4])
    out[4] = -v * s * s


@njit(cache=True)
def variable_phase(y0, rho0, rho1, nu2, h, coef, power, freq, phase, rtol, atol, max_steps):
    """Integrate (j, j', n, n', delta) from rho0 to rho1 with DOP853.

    Returns the final state and the number of accepted steps (negative on
    step-size underflow or step budget exhaustion).
    """
    n = y0.size
    y = y0.copy()
    K = np.zeros((12, n))
    ytmp = np.zeros(n)
    f = np.zeros(n)
    rho = rho0
    step = min(0.05, rho1 - rho0)
    accepted = 0
    fac_old = 1e-4
    _phase_rhs(rho, y, f, nu2, h, coef, power, freq, phase)
    for _ in range(max_steps):
        if rho >= rho1:
            return y, accepted
        if rho + step > rho1:
            step = rho1 - rho
        for i in range(n):
            K[0, i] = f[i]
        for s in range(1, 12):
            for i in range(n):
                acc = 0.0
                for j in range(s):
                    acc += _A[s, j] * K[j, i]
                ytmp[i] = y[i] + step * acc
            _phase_rhs(rho + _C[s] * step, ytmp, K[s], nu2, h, coef, power, freq, phase)
        err5 = 0.0
        err3 = 0.0
        ynew = np.empty(n)
        for i in range(n):
            acc = 0.0
            for s in range(12):
                acc += _B[s] * K[s, i]
            ynew[i] = y[i] + step * acc
            sc = atol + rtol * max(abs(y[i]), abs(ynew[i]))
            e5 = 0.0
            e3 = 0.0
            for s in range(12):
                e5 += _E5[s] * K[s, i]
                e3 += _E3[s] * K[s, i]
            err5 += (e5 / sc) ** 2
            err3 += (e3 / sc) ** 2
        if err5 == 0.0 and err3 == 0.0:
            err = 0.0
        else:
            den = err5 + 0.01 * err3
            err = abs(step) * err5 / np.sqrt(den * n)
        if err <= 1.0:
            rho += step
            for i in range(n):
                y[i] = ynew[i]
            _phase_rhs(rho, y, f, nu2, h, coef, power, freq, phase)
            accepted += 1
            # PI controller (Gustafsson), exponents for an 8th-order pair
            if err == 0.0:
                fac = 10.0
            else:
                fac = 0.9 * err ** (-0.7 / 8.0) * fac_old ** (0.4 / 8.0)
                fac = min(10.0, max(0.2, fac))
            fac_old = max(err, 1e-4)
            step *= fac
        else:
            step *= max(0.2, 0.9 * err ** (-1.0 / 8.0))
        if step < 1e-14 * max(1.0, abs(rho)):
            return y, -accepted - 1
    return y, -accepted - 1


@njit(cache=True)
def numerov(rho0, rho1, nsteps, nu2, h, coef, power, freq, phase, log_growth):
    """Outward Numerov integration of u'' = (V + (nu2-1/4)/rho^2 - 1) u.

    Starts from the WKB-consistent pair ``u0 = 1``, ``u1 = exp(log_growth)``
    and renormalises on the fly.  Returns ``(u[-2], u[-1], step)``.
    """
    dr = (rho1 - rho0) / nsteps
    d12 = dr * dr / 12.0

    def w(rho):
        return radial_potential(h * rho, coef, power, freq, phase) + (nu2 - 0.25) / (rho * rho) - 1.0

    u_prev = 1.0
    u_cur = np.exp(log_growth)
    w_prev = w(rho0)
    w_cur = w(rho0 + dr)
    for i in range(1, nsteps):
        rho_next = rho0 + (i + 1) * dr
        w_next = w(rho_next)
        u_next = ((2.0 + 10.0 * d12 * w_cur) * u_cur - (1.0 - d12 * w_prev) * u_prev) / (1.0 - d12 * w_next)
        u_prev = u_cur
        u_cur = u_next
        w_prev = w_cur
        w_cur = w_next
        big = abs(u_cur)
        if big > 1e200:
            u_prev /= big
            u_cur /= big
    return u_prev, u_cur, dr
