"""Partial-wave phase shifts for central potentials at unit energy.

The radial equation in ``rho = r/h`` reads

    u'' + (1 - V(h rho) - (nu^2 - 1/4)/rho^2) u = 0,    nu = l + (d-2)/2,

and ``delta_l`` is defined by ``u ~ j cos(delta) + n sin(delta)`` at large
``rho`` (see :mod:`sojourn_lab.bessel` for the Riccati-Bessel pair).

Two exact solvers are provided.  Method A integrates the variable-phase
equation ``delta' = -V (j cos(delta) + n sin(delta))^2`` with an 8th-order
Runge-Kutta pair from a point deep inside the centrifugal/potential
barrier, where the initial phase comes from the decaying WKB solution.
Method B integrates the radial equation with Numerov's scheme at two step
sizes, matches to the free pair at the outer radius and Richardson-combines
the two results.  Both add the same analytic correction for the potential
beyond the outer radius.

For large angular momentum the eikonal value
``delta = -(1/(4h)) int V(sqrt(b^2 + t^2)) dt`` (``b = nu h``) is used; its
power-law tail is summed in closed form with Hurwitz zeta functions.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as P
from numpy.polynomial.legendre import leggauss
from scipy import optimize, special

from . import _kernels as K
from . import potentials as pot
from .bessel import riccati_bessel_plain


class MethodDisagreement(RuntimeError):
    pass


class CrossoverWarning(UserWarning):
    pass


@dataclass
class SolverOptions:
    """Numerical knobs of the exact solvers.

    Attributes
    ----------
    match_radius : float
        Outer radius ``r`` (not ``rho``) beyond which the analytic tail is used;
        the solver integrates to ``max(match_radius, 3 r_turn)``.
    barrier_a, barrier_b : float
        WKB barrier depth at the start point of methods A and B.
    rtol : float
        Relative tolerance of the variable-phase integration.
    numerov_step : float
        Coarse Numerov step in ``rho`` (a half step is also run).
    agree_tol : float
        Maximum allowed A/B difference.
    """

    match_radius: float = 40.0
    barrier_a: float = 8.0
    barrier_b: float = 15.0
    rtol: float = 1e-13
    numerov_step: float = 0.004
    agree_tol: float = 1e-6
    max_steps: int = 10_000_000
    check: bool = True


def multiplicity(l: int, d: int) -> int:
    """Dimension of the degree-``l`` spherical harmonics on ``S^(d-1)``."""
    if l < 0 or d < 2:
        raise ValueError("need l >= 0 and d >= 2")
    if d == 2:
        return 1 if l == 0 else 2
    return (2 * l + d - 2) * math.comb(l + d - 3, l) // (d - 2)


def multiplicity_array(l, d: int):
    l = np.asarray(l, dtype=np.int64)
    if d == 2:
        return np.where(l == 0, 1, 2).astype(np.int64)
    return np.array([multiplicity(int(x), d) for x in l.ravel()], dtype=np.int64).reshape(l.shape)


def multiplicity_poly(d: int):
    """Coefficients (ascending) of ``mult`` as a polynomial in ``nu``, valid for ``l >= 1``."""
    if d == 2:
        return np.array([2.0])
    shift = -(d - 2) / 2.0
    poly = np.array([0.0, 2.0])
    for j in range(1, d - 2):
        poly = P.polymul(poly, [shift + j, 1.0])
    return poly / math.factorial(d - 2)


def _order(l, d):
    return l + 0.5 * (d - 2)


# -- radial problem helpers -----------------------------------------------------------

class _Radial:
    def __init__(self, spec: pot.PotentialSpec, nu: float, h: float):
        if not spec.is_central:
            raise ValueError("phase shifts need a central potential")
        if spec.energy != 1.0:
            raise ValueError("normalize the energy to 1 first")
        if not h > 0:
            raise ValueError("h must be positive")
        self.spec = spec
        self.nu = nu
        self.h = h
        self.terms = spec.radial_terms()

    def V(self, rho):
        return pot.radial_value(self.spec, self.h * np.asarray(rho, dtype=float))

    def dV(self, rho):
        return self.h * pot.radial_derivative(self.spec, self.h * np.asarray(rho, dtype=float))

    def Q(self, rho):
        rho = np.asarray(rho, dtype=float)
        return self.V(rho) + (self.nu ** 2 - 0.25) / rho ** 2 - 1.0

    def dQ(self, rho):
        return self.dV(rho) - 2.0 * (self.nu ** 2 - 0.25) / rho ** 3

    def turning(self):
        """Outermost zero of ``Q``."""
        hi = self.nu + 10.0 / self.h + 1.0
        while self.Q(hi) >= 0:
            hi *= 2.0
            if hi > 1e15:
                raise RuntimeError("no outer turning point")
        lo = max(10.0 * self.spec.r_min / self.h, 1e-12 * hi)
        grid = np.geomspace(lo, hi, 4000)
        vals = self.Q(grid)
        pos = np.nonzero(vals > 0)[0]
        if pos.size == 0:
            raise ValueError("no classically forbidden core: only repulsive cores are supported")
        k = pos[-1]
        f = lambda r: float(self.Q(r))
        return optimize.brentq(f, grid[k], grid[k + 1], xtol=1e-14, rtol=1e-15)

    def barrier_start(self, rho_t, depth):
        """Point inside the barrier where ``int sqrt(Q)`` up to ``rho_t`` equals ``depth``."""
        lo = max(10.0 * self.spec.r_min / self.h, 1e-6 * rho_t)
        grid = np.geomspace(lo, rho_t, 20001)[::-1]
        s = np.sqrt(np.maximum(self.Q(grid), 0.0))
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (s[1:] + s[:-1]) * (grid[:-1] - grid[1:]))])
        i = int(np.searchsorted(cum, depth))
        return float(grid[min(i, grid.size - 1)])

    def wkb_logderiv(self, rho):
        q = float(self.Q(rho))
        return math.sqrt(q) - float(self.dQ(rho)) / (4.0 * q)


_GL_X, _GL_W = leggauss(80)


def _tail(rad: _Radial, P_rho, delta, fb):
    """Phase picked up beyond ``P_rho`` to first order in ``V``.

    Smooth part ``-(1/2) int V M^2`` by Gauss-Legendre in ``1/rho``; the
    oscillating part by two integrations by parts.
    """
    j, n, jp, np_ = fb
    t = 0.5 * (_GL_X + 1.0)
    wt = 0.5 * _GL_W
    rho = P_rho / t
    jj, nn, _, _ = riccati_bessel_plain(rad.nu, rho)
    smooth = -0.5 * np.sum(wt * (P_rho / t ** 2) * rad.V(rho) * (jj ** 2 + nn ** 2))
    M2 = j * j + n * n
    dM2 = 2.0 * (j * jp + n * np_)
    VP = float(rad.V(P_rho))
    dVP = float(rad.dV(P_rho))
    u = 2.0 * (math.atan2(j, n) + delta)
    f1 = VP * M2 ** 2 / 2.0
    df1 = (dVP * M2 ** 2 + 2.0 * VP * M2 * dM2) / 2.0
    up = 2.0 / M2
    osc = 0.5 * (-f1 * math.sin(u) - (df1 / up) * math.cos(u))
    return float(smooth + osc)


@dataclass
class ExactPhase:
    l: int
    nu: float
    delta: float
    delta_b: float
    steps: int
    turning: float
    outer: float


def _method_a(rad: _Radial, rho_t, opts: SolverOptions):
    rs = rad.barrier_start(rho_t, opts.barrier_a)
    j, n, jp, np_ = (float(v) for v in riccati_bessel_plain(rad.nu, rs))
    lam = rad.wkb_logderiv(rs)
    d0 = math.atan((jp - lam * j) / (lam * n - np_))
    P_rho = max(opts.match_radius, 3.0 * rho_t * rad.h) / rad.h
    coef, power, freq, phase = rad.terms
    y, steps = K.variable_phase(np.array([j, jp, n, np_, d0]), rs, P_rho, rad.nu ** 2, rad.h,
                                coef, power, freq, phase, opts.rtol, 1e-300, opts.max_steps)
    if steps < 0:
        raise RuntimeError(f"variable-phase integration failed at nu={rad.nu}")
    fb = tuple(float(v) for v in riccati_bessel_plain(rad.nu, P_rho))
    dP = float(y[4])
    return dP, dP + _tail(rad, P_rho, dP, fb), steps, P_rho


def _method_b(rad: _Radial, rho_t, branch, P_rho, opts: SolverOptions):
    rs = rad.barrier_start(rho_t, opts.barrier_b)
    coef, power, freq, phase = rad.terms
    res = []
    fb = None
    for dr in (opts.numerov_step, 0.5 * opts.numerov_step):
        nst = int(math.ceil((P_rho - rs) / dr))
        growth = math.sqrt(max(float(rad.Q(rs)), 0.0)) * (P_rho - rs) / nst
        u1, u2, step = K.numerov(rs, P_rho, nst, rad.nu ** 2, rad.h, coef, power, freq, phase, growth)
        j1, n1, _, _ = (float(v) for v in riccati_bessel_plain(rad.nu, P_rho - step))
        fb = tuple(float(v) for v in riccati_bessel_plain(rad.nu, P_rho))
        j2, n2 = fb[0], fb[1]
        ratio = u1 / u2
        dmod = math.atan((ratio * j2 - j1) / (n1 - ratio * n2))
        res.append(dmod + math.pi * round((branch - dmod) / math.pi))
    dB = (16.0 * res[1] - res[0]) / 15.0
    return dB + _tail(rad, P_rho, dB, fb)


def phase_shift_both(spec: pot.PotentialSpec, l: int, h: float, opts: SolverOptions | None = None) -> ExactPhase:
    """Exact phase shift by both methods (A is the reported value)."""
    opts = opts or SolverOptions()
    nu = _order(l, spec.dimension)
    if spec.is_zero:
        return ExactPhase(l, nu, 0.0, 0.0, 0, 0.0, 0.0)
    if spec.central_strength < 0:
        raise ValueError("attractive singular cores are not supported")
    rad = _Radial(spec, nu, h)
    rho_t = rad.turning()
    branch, dA, steps, P_rho = _method_a(rad, rho_t, opts)
    dB = _method_b(rad, rho_t, branch, P_rho, opts)
    if opts.check and abs(dA - dB) > opts.agree_tol:
        raise MethodDisagreement(f"l={l}, h={h}: methods differ by {abs(dA - dB):.3g}")
    return ExactPhase(l, nu, dA, dB, steps, rho_t * h, P_rho * h)


def phase_shift_exact(spec: pot.PotentialSpec, l: int, h: float, opts: SolverOptions | None = None) -> float:
    """Phase shift ``delta_{l,h}`` (continuous branch from the barrier interior)."""
    return phase_shift_both(spec, l, h, opts).delta


# -- eikonal ------------------------------------------------------------------------------

def _line_factor(p, f):
    """``int (1+t^2)^((-p + i f)/2) dt``."""
    s = complex(p, -f)
    return math.sqrt(math.pi) * np.exp(special.loggamma((s - 1.0) / 2.0) - special.loggamma(s / 2.0))


def _eikonal_terms(spec: pot.PotentialSpec, h: float):
    """Coefficients ``C_t`` and complex exponents with ``delta(nu) = sum Re(C_t nu^(1-s_t))``."""
    coef, power, freq, phase = spec.radial_terms()
    out = []
    for c, p, f, ph in zip(coef, power, freq, phase):
        if c == 0.0:
            continue
        if p <= 1.0:
            raise ValueError("eikonal phase needs decay faster than 1/r")
        s = complex(p, -f)
        C = -(c / (4.0 * h)) * np.exp(1j * ph) * h ** (1.0 - s) * _line_factor(p, f)
        out.append((complex(C), s))
    return out


def eikonal_line_integral(spec: pot.PotentialSpec, b):
    """``G_eik(b) = -(1/2) int V(sqrt(b^2 + t^2)) dt``."""
    b = np.asarray(b, dtype=float)
    total = np.zeros(b.shape, dtype=complex)
    coef, power, freq, phase = spec.radial_terms()
    for c, p, f, ph in zip(coef, power, freq, phase):
        if c == 0.0:
            continue
        s = complex(p, -f)
        total = total + c * np.exp(1j * ph) * b ** (1.0 - s) * _line_factor(p, f)
    return -0.5 * total.real


def eikonal_from_nu(spec, nu, h):
    nu = np.asarray(nu, dtype=float)
    out = np.zeros(nu.shape)
    for C, s in _eikonal_terms(spec, h):
        out = out + (C * nu ** (1.0 - s)).real
    return out


def phase_shift_eikonal(spec: pot.PotentialSpec, l: int, h: float, b_min: float = 2.0) -> float:
    """Linearised WKB phase ``G_eik(b)/(2h)`` at ``b = nu h``."""
    if spec.is_zero:
        return 0.0
    nu = _order(l, spec.dimension)
    b = nu * h
    if b < b_min:
        raise ValueError(f"b = {b:g} below eikonal validity threshold {b_min:g}")
    return float(eikonal_line_integral(spec, b) / (2.0 * h))


def _hurwitz(s, a):
    if abs(s.imag) == 0.0:
        return float(special.zeta(s.real, a))
    import mpmath as mp

    return complex(mp.zeta(mp.mpc(s.real, s.imag), mp.mpf(a)))


def eikonal_tail_sums(spec, h, nu_first):
    """Closed-form tail sums from order ``nu_first`` (step 1) to infinity.

    Returns ``(sum mult*delta, sum mult*|delta| upper bound, sum mult*delta^2 upper bound)``.
    """
    mpoly = multiplicity_poly(spec.dimension)
    terms = _eikonal_terms(spec, h)
    s1 = 0.0
    s_abs = 0.0
    s_sq = 0.0
    for C, s in terms:
        for m, cm in enumerate(mpoly):
            if cm == 0.0:
                continue
            z = s - 1.0 - m
            if z.real <= 1.0:
                return s1, math.inf, math.inf
            s1 += (C * cm * _hurwitz(z, nu_first)).real
            s_abs += abs(C) * cm * float(special.zeta(z.real, nu_first))
    for C1, s1_ in terms:
        for C2, s2_ in terms:
            for m, cm in enumerate(mpoly):
                if cm == 0.0:
                    continue
                z = s1_.real + s2_.real - 2.0 - m
                if z <= 1.0:
                    return s1, s_abs, math.inf
                s_sq += abs(C1) * abs(C2) * cm * float(special.zeta(z, nu_first))
    return float(s1), float(s_abs), float(s_sq)


# -- table ---------------------------------------------------------------------------------

EXACT, EIKONAL = 0, 1


@dataclass
class PhaseShiftTable:
    """Phase shifts of ``S_h`` with multiplicities.

    ``method`` holds 0 for exact and 1 for eikonal rows.  The tail summary
    covers all ``l > l_max``: ``tail_sum = sum mult*delta`` (closed form),
    ``tail_bound = sum mult*2|delta|`` and ``tail_sq = sum mult*delta^2``.
    """

    h: float
    d: int
    l: np.ndarray
    delta: np.ndarray
    method: np.ndarray
    mult: np.ndarray
    delta_b: np.ndarray = field(repr=False)
    l_star: int = -1
    l_max: int = -1
    tail_sum: float = 0.0
    tail_bound: float = 0.0
    tail_sq: float = 0.0
    crossover_rel_err: float = math.nan
    crossover_found: bool = True
    max_ab_diff: float = 0.0

    @property
    def nu(self):
        return self.l + 0.5 * (self.d - 2)

    @property
    def b(self):
        return self.nu * self.h

    @property
    def size(self) -> int:
        return int(self.l.size)

    def exact_mask(self):
        return self.method == EXACT

    @classmethod
    def empty(cls, h, d):
        z = np.zeros(0)
        return cls(h, d, np.zeros(0, dtype=np.int64), z, np.zeros(0, dtype=np.int8), np.zeros(0, dtype=np.int64), z)

    @classmethod
    def from_entries(cls, h, d, l, delta, mult=None):
        """Table of exact entries only (no tail)."""
        l = np.asarray(l, dtype=np.int64)
        delta = np.asarray(delta, dtype=float)
        mult = multiplicity_array(l, d) if mult is None else np.asarray(mult, dtype=np.int64)
        return cls(h, d, l, delta, np.zeros(l.size, dtype=np.int8), mult, delta.copy(),
                   l_star=int(l.max()) if l.size else -1, l_max=int(l.max()) if l.size else -1)


@dataclass
class TableOptions:
    crossover_tol: float = 1e-4
    confirm: int = 3
    b_min: float = 2.0
    delta_floor: float = 1e-9
    l_cap: int = 20000
    chunk: int = 64


def _solve_chunk(args):
    spec, ls, h, opts = args
    return [phase_shift_both(spec, int(l), h, opts) for l in ls]


def build_table(spec: pot.PotentialSpec, h: float, d: int | None = None, tolerances: TableOptions | None = None,
                solver: SolverOptions | None = None, workers: int = 1, progress=None) -> PhaseShiftTable:
    """Hybrid exact/eikonal phase-shift table with a closed-form tail.

    Exact shifts are computed for increasing ``l`` until the eikonal value
    agrees to ``crossover_tol`` (relative) for ``confirm`` consecutive
    ``l``; eikonal values follow down to ``delta_floor``.
    """
    topt = tolerances or TableOptions()
    sopt = solver or SolverOptions()
    d = spec.dimension if d is None else d
    if d != spec.dimension:
        raise ValueError("table dimension must match the potential")
    if spec.is_zero:
        return PhaseShiftTable.empty(h, d)

    exact: list[ExactPhase] = []
    streak = 0
    l_star = -1
    rel_at = math.nan
    l = 0
    pool = ProcessPoolExecutor(workers) if workers > 1 else None
    try:
        while l <= topt.l_cap and l_star < 0:
            ls = list(range(l, min(l + topt.chunk * max(workers, 1), topt.l_cap + 1)))
            if pool is None:
                batch = _solve_chunk((spec, ls, h, sopt))
            else:
                parts = [ls[i::workers] for i in range(workers)]
                results = list(pool.map(_solve_chunk, [(spec, p, h, sopt) for p in parts]))
                batch = sorted((r for part in results for r in part), key=lambda e: e.l)
            for ev in batch:
                exact.append(ev)
                if ev.nu * h >= topt.b_min:
                    eik = float(eikonal_from_nu(spec, ev.nu, h))
                    rel = abs(ev.delta - eik) / abs(ev.delta) if ev.delta != 0 else 0.0
                    streak = streak + 1 if rel < topt.crossover_tol else 0
                    if streak >= topt.confirm or abs(ev.delta) < topt.delta_floor:
                        l_star = ev.l
                        rel_at = rel
                        break
            if progress is not None:
                progress(exact[-1].l)
            l = ls[-1] + 1
    finally:
        if pool is not None:
            pool.shutdown()
    exact = [e for e in exact if l_star < 0 or e.l <= l_star]
    found = l_star >= 0
    if not found:
        warnings.warn(f"eikonal crossover not reached up to l={topt.l_cap}; using eikonal beyond the cap",
                      CrossoverWarning)
        l_star = exact[-1].l
    l_ex = np.array([e.l for e in exact], dtype=np.int64)
    d_ex = np.array([e.delta for e in exact])
    dB_ex = np.array([e.delta_b for e in exact])

    # eikonal rows down to the floor
    terms = _eikonal_terms(spec, h)
    lead = max(terms, key=lambda cs: abs(cs[0]) * 1e3 ** (1.0 - cs[1].real))
    nu_est = (abs(lead[0]) / topt.delta_floor) ** (1.0 / (lead[1].real - 1.0))
    l_hi = max(l_star, int(math.ceil(nu_est - 0.5 * (d - 2))) + 2)
    l_eik = np.arange(l_star + 1, l_hi + 1, dtype=np.int64)
    d_eik = eikonal_from_nu(spec, l_eik + 0.5 * (d - 2), h)
    keep = np.abs(d_eik) >= topt.delta_floor
    if np.any(keep):
        last = int(np.nonzero(keep)[0][-1])
        l_eik, d_eik = l_eik[:last + 1], d_eik[:last + 1]
    else:
        l_eik, d_eik = l_eik[:0], d_eik[:0]
    l_max = int(l_eik[-1]) if l_eik.size else l_star
    s1, s_abs, s_sq = eikonal_tail_sums(spec, h, _order(l_max + 1, d))

    ls = np.concatenate([l_ex, l_eik])
    deltas = np.concatenate([d_ex, d_eik])
    method = np.concatenate([np.zeros(l_ex.size, np.int8), np.ones(l_eik.size, np.int8)])
    dB = np.concatenate([dB_ex, np.full(l_eik.size, np.nan)])
    max_ab = float(np.max(np.abs(d_ex - dB_ex))) if l_ex.size else 0.0
    return PhaseShiftTable(h, d, ls, deltas, method, multiplicity_array(ls, d), dB, l_star=l_star, l_max=l_max,
                           tail_sum=s1, tail_bound=2.0 * s_abs, tail_sq=s_sq, crossover_rel_err=rel_at,
                           crossover_found=found, max_ab_diff=max_ab)
