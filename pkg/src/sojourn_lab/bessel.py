"""Riccati-Bessel functions ``j(x) = sqrt(pi x/2) J_nu(x)``, ``n(x) = -sqrt(pi x/2) Y_nu(x)``.

With this normalisation ``j ~ sin(x - nu pi/2 + pi/4)``,
``n ~ cos(x - nu pi/2 + pi/4)`` and the Wronskian ``j' n - j n' = 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special


@dataclass
class RiccatiBessel:
    """Values scaled as ``j = j_s * exp(-log_scale)``, ``n = n_s * exp(log_scale)``.

    ``log_scale`` is zero unless the plain values would overflow.
    """

    j: np.ndarray
    n: np.ndarray
    jp: np.ndarray
    np_: np.ndarray
    log_scale: np.ndarray

    def astuple(self):
        return self.j, self.n, self.jp, self.np_


def _plain(nu, x):
    s = np.sqrt(0.5 * np.pi * x)
    ds = np.sqrt(np.pi / (8.0 * x))
    J = special.jv(nu, x)
    Y = special.yv(nu, x)
    Jp = special.jvp(nu, x)
    Yp = special.yvp(nu, x)
    return s * J, -s * Y, s * Jp + ds * J, -(s * Yp + ds * Y)


def _scaled_mp(nu, x):
    import mpmath as mp

    with mp.workdps(30):
        nu_m, x_m = mp.mpf(nu), mp.mpf(x)
        s = mp.sqrt(mp.pi * x_m / 2)
        ds = mp.sqrt(mp.pi / (8 * x_m))
        J, Y = mp.besselj(nu_m, x_m), mp.bessely(nu_m, x_m)
        Jp, Yp = mp.besselj(nu_m, x_m, derivative=1), mp.bessely(nu_m, x_m, derivative=1)
        j, n = s * J, -s * Y
        jp, np_ = s * Jp + ds * J, -(s * Yp + ds * Y)
        L = -mp.log(abs(j)) if j != 0 else mp.mpf(0)
        e = mp.exp(L)
        return float(j * e), float(n / e), float(jp * e), float(np_ / e), float(L)


def riccati_bessel(nu, x) -> RiccatiBessel:
    """Riccati-Bessel pair and derivatives of real order ``nu >= 0`` at ``x > 0``."""
    nu_a = np.asarray(nu, dtype=float)
    x_a = np.asarray(x, dtype=float)
    if np.any(x_a <= 0):
        raise ValueError("x must be positive")
    if np.any(nu_a < 0):
        raise ValueError("order must be non-negative")
    nu_b, x_b = np.broadcast_arrays(nu_a, x_a)
    with np.errstate(over="ignore", invalid="ignore"):
        j, n, jp, np_ = (np.array(v, dtype=float) for v in _plain(nu_b, x_b))
    scale = np.zeros(nu_b.shape)
    bad = ~(np.isfinite(n) & np.isfinite(np_) & (j != 0))
    if np.any(bad):
        for idx in zip(*np.nonzero(np.atleast_1d(bad))):
            key = idx if nu_b.ndim else ()
            vals = _scaled_mp(float(nu_b[key]), float(x_b[key]))
            j[key], n[key], jp[key], np_[key], scale[key] = vals
    if nu_b.ndim == 0:
        return RiccatiBessel(float(j), float(n), float(jp), float(np_), float(scale))
    return RiccatiBessel(j, n, jp, np_, scale)


def riccati_bessel_plain(nu, x):
    """Unscaled ``(j, n, j', n')``; may overflow deep in the forbidden region."""
    return _plain(np.asarray(nu, dtype=float), np.asarray(x, dtype=float))


def free_phase(nu, x):
    """Continuous asymptotic phase ``x - nu pi/2 + pi/4`` of the free pair."""
    return x - 0.5 * math.pi * nu + 0.25 * math.pi
