"""Scaled eigenvalue measure of ``S_h``, its predicted limit, traces and counts.

The limit measure is the pushforward to the circle of
``c1 theta^beta dtheta`` on ``theta > 0`` plus ``c2 |theta|^beta dtheta`` on
``theta < 0`` with ``beta = -1 - gamma`` and ``gamma = (d-1)/(alpha-1)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, special

from .fitting import power_law_fit, richardson
from .partial_waves import EIKONAL, PhaseShiftTable

TWO_PI = 2.0 * math.pi


class OutOfScopeWarning(UserWarning):
    """``gamma >= 1``: the limit theorem does not apply."""


class WeightedNormError(ValueError):
    pass


def gamma_exponent(d: int, alpha: float, *, strict: bool = False) -> float:
    """``gamma = (d-1)/(alpha-1)``; warns (or raises when ``strict``) if ``gamma >= 1``."""
    if not alpha > 1.0:
        raise ValueError(f"alpha must exceed 1, got {alpha}")
    if d < 2:
        raise ValueError("d must be at least 2")
    g = (d - 1) / (alpha - 1.0)
    if g >= 1.0:
        msg = f"gamma = {g:g} >= 1 (alpha <= d): outside the scope of the limit theorem"
        if strict:
            raise ValueError(msg)
        warnings.warn(msg, OutOfScopeWarning, stacklevel=2)
    return g


def in_main_scope(d: int, alpha: float) -> bool:
    return alpha > d


def _check_gamma(gamma):
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")


def gamma_closed_form(gamma: float) -> complex:
    """``(i/gamma) Gamma(1-gamma) exp(i pi (1-gamma)/2)``."""
    _check_gamma(gamma)
    return complex(1j / gamma * special.gamma(1.0 - gamma) * np.exp(0.5j * math.pi * (1.0 - gamma)))


def gamma_quadrature(gamma: float, *, split: float = 4.0 * math.pi, sign: int = 1) -> complex:
    """``int_0^inf (e^{i sign theta} - 1) theta^(-gamma-1) dtheta`` by quadrature.

    On ``[0, split]`` the algebraic endpoint weight ``theta^-gamma`` is
    handled by QAWS; beyond it the oscillatory part uses QAWF and the
    non-oscillatory ``-theta^(-gamma-1)`` part is integrated analytically.
    """
    _check_gamma(gamma)

    def smooth_re(t):
        return np.cos(t) - 1.0 if t == 0 else (np.cos(t) - 1.0) / t

    def smooth_im(t):
        return 1.0 if t == 0 else np.sin(t) / t

    kw = dict(weight="alg", wvar=(-gamma, 0.0), epsabs=1e-15, epsrel=1e-14, limit=400)
    re0, _ = integrate.quad(smooth_re, 0.0, split, **kw)
    im0, _ = integrate.quad(smooth_im, 0.0, split, **kw)
    fw = dict(epsabs=1e-15, limlst=200, limit=400)
    re1, _ = integrate.quad(lambda t: t ** (-gamma - 1.0), split, np.inf, weight="cos", wvar=1.0, **fw)
    im1, _ = integrate.quad(lambda t: t ** (-gamma - 1.0), split, np.inf, weight="sin", wvar=1.0, **fw)
    re1 -= split ** (-gamma) / gamma
    return complex(re0 + re1, sign * (im0 + im1))


def gamma_constant(gamma: float, *, tol: float = 1e-8) -> complex:
    """Quadrature value of ``Gamma``, verified against the closed form."""
    q = gamma_quadrature(gamma)
    cf = gamma_closed_form(gamma)
    if abs(q - cf) > tol * abs(cf):
        raise ArithmeticError(f"Gamma quadrature {q} disagrees with closed form {cf}")
    return q


# -- predicted constants --------------------------------------------------------------------

@dataclass
class HomogeneousMeasureParams:
    d: int
    alpha: float
    gamma: float
    beta: float
    a1: float
    a2: float
    c: complex
    Gamma: complex
    prefactor: float
    c_direct: complex = complex("nan")

    @property
    def c1(self) -> float:
        return self.a1 * self.prefactor

    @property
    def c2(self) -> float:
        return self.a2 * self.prefactor

    def trace_limit(self, k: int) -> complex:
        """Predicted limit of ``h^(alpha gamma) Tr(S_h^k - I)``."""
        if k == 0:
            return 0j
        val = self.prefactor * self.c * abs(k) ** self.gamma
        return val if k > 0 else val.conjugate()

    @classmethod
    def from_densities(cls, c1, c2, gamma, d=2, alpha=None):
        alpha = 1.0 + (d - 1) / gamma if alpha is None else alpha
        G = gamma_closed_form(gamma)
        pref = (1.0 / TWO_PI) ** (d - 1)
        a1, a2 = c1 / pref, c2 / pref
        return cls(d, alpha, gamma, -1.0 - gamma, a1, a2, a1 * G + a2 * G.conjugate(), G, pref)


def radial_phase_integral(g: float, d: int, alpha: float, *, ibp_terms: int = 8) -> complex:
    """``int_0^inf (exp(i g r^(1-alpha)) - 1) r^(d-2) dr`` evaluated directly in ``r``.

    Near ``r = 0`` repeated integration by parts, a plain oscillatory
    quadrature in the middle and the convergent power series of the
    exponential at large ``r``.
    """
    if g == 0.0:
        return 0j
    scale = abs(g) ** (1.0 / (alpha - 1.0))
    r0, r1 = 0.1 * scale, 40.0 * scale
    m = d - 2.0
    # inner piece: int_0^r0 e^{i phi} r^m dr with phi = g r^(1-alpha)
    dphi_coef = 1j * g * (1.0 - alpha)  # i phi' = dphi_coef * r^-alpha
    e0 = np.exp(1j * g * r0 ** (1.0 - alpha))
    C, mk, inner = 1.0 + 0j, m, 0j
    for _ in range(ibp_terms):
        inner += e0 * C * r0 ** (mk + alpha) / dphi_coef
        C = -C * (mk + alpha) / dphi_coef
        mk = mk + alpha - 1.0
    inner -= r0 ** (d - 1.0) / (d - 1.0)

    def f(r, part):
        z = np.expm1(1j * g * r ** (1.0 - alpha)) * r ** m
        return z.real if part == 0 else z.imag

    mid = complex(*(integrate.quad(f, r0, r1, args=(p,), epsabs=0.0, epsrel=1e-13, limit=2000)[0] for p in (0, 1)))
    outer = 0j
    term = 1.0 + 0j
    for n in range(1, 80):
        term = term * 1j * g / n
        expo = n * (1.0 - alpha) + m + 1.0
        add = -term * r1 ** expo / expo
        outer += add
        if abs(add) < 1e-18 * max(abs(outer), 1e-300):
            break
    return complex(inner + mid + outer)


def _sphere_area(n: int) -> float:
    """Area of the unit sphere ``S^n``."""
    return 2.0 * math.pi ** ((n + 1) / 2.0) / special.gamma((n + 1) / 2.0)


def _direction_grid(d: int, n: int):
    """Quadrature nodes ``(y, eta_hat, weight)`` on the unit cotangent sphere bundle."""
    if d == 2:
        t = np.linspace(0.0, TWO_PI, n, endpoint=False)
        out = []
        for ti in t:
            y = np.array([math.cos(ti), math.sin(ti)])
            tang = np.array([-math.sin(ti), math.cos(ti)])
            for s in (1.0, -1.0):
                out.append((y, s * tang, TWO_PI / n))
        return out
    if d == 3:
        x, w = np.polynomial.legendre.leggauss(n)
        phis = np.linspace(0.0, TWO_PI, 2 * n, endpoint=False)
        psis = np.linspace(0.0, TWO_PI, 2 * n, endpoint=False)
        out = []
        for zi, wi in zip(x, w):
            st = math.sqrt(1.0 - zi * zi)
            for ph in phis:
                y = np.array([st * math.cos(ph), st * math.sin(ph), zi])
                e1 = np.array([-math.sin(ph), math.cos(ph), 0.0])
                e2 = np.cross(y, e1)
                for ps in psis:
                    eh = math.cos(ps) * e1 + math.sin(ps) * e2
                    out.append((y, eh, wi * (TWO_PI / (2 * n)) * (TWO_PI / (2 * n))))
        return out
    raise NotImplementedError("direction-dependent profiles are supported for d = 2, 3")


def predicted_constants(g_profile, d: int, alpha: float, *, nodes: int = 32, tol: float = 1e-6,
                        ) -> HomogeneousMeasureParams:
    """Constants of the limit measure from the phase coefficient ``g(y, eta_hat)``.

    ``g_profile`` is a number (direction independent) or a callable of
    ``(y, eta_hat)``.  ``c`` is integrated directly over the cotangent
    sphere bundle times the radial variable and checked against the
    ``Gamma``-reduced form ``a1 Gamma + a2 conj(Gamma)``.
    """
    gamma = gamma_exponent(d, alpha, strict=True)
    G = gamma_constant(gamma)
    pref = (1.0 / TWO_PI) ** (d - 1)
    k = 1.0 / (alpha - 1.0)
    if callable(g_profile):
        pts = _direction_grid(d, nodes)
        gs = np.array([float(g_profile(y, e)) for y, e, _ in pts])
        ws = np.array([w for *_, w in pts])
        plus = float(np.sum(ws * np.maximum(gs, 0.0) ** gamma))
        minus = float(np.sum(ws * np.maximum(-gs, 0.0) ** gamma))
        cache = {}
        direct = 0j
        for gi, wi in zip(gs, ws):
            if gi not in cache:
                cache[gi] = radial_phase_integral(gi, d, alpha)
            direct += wi * cache[gi]
    else:
        g0 = float(g_profile)
        area = _sphere_area(d - 1) * _sphere_area(d - 2) if d > 2 else TWO_PI * 2.0
        plus = area * max(g0, 0.0) ** gamma
        minus = area * max(-g0, 0.0) ** gamma
        direct = area * radial_phase_integral(g0, d, alpha)
    a1, a2 = k * plus, k * minus
    c = a1 * G + a2 * G.conjugate()
    if abs(direct - c) > tol * max(abs(c), 1e-300) and abs(c) > 0:
        raise ArithmeticError(f"direct c {direct} disagrees with Gamma-reduced c {c}")
    return HomogeneousMeasureParams(d, alpha, gamma, -1.0 - gamma, a1, a2, complex(c), G, pref, complex(direct))


# -- empirical measure ---------------------------------------------------------------------

def _signed(theta):
    return theta - TWO_PI * np.round(theta / TWO_PI)


def _em1(theta):
    """``exp(i theta) - 1`` without cancellation for small ``theta``."""
    s = np.sin(0.5 * theta)
    return -2.0 * s * s + 1j * np.sin(theta)


@dataclass
class AtomicCircleMeasure:
    """Atoms ``exp(i angle)`` with weights ``h^(alpha gamma) mult``.

    ``phase`` is the representative of ``2 delta`` in ``(-pi, pi]`` used for
    accurate evaluation near ``z = 1``; ``tail_*`` carry the unlisted atoms.
    """

    h: float
    exponent: float
    phase: np.ndarray
    weight: np.ndarray
    tail_sum: float = 0.0
    tail_bound: float = 0.0
    tail_sq: float = 0.0

    @property
    def angles(self):
        return np.mod(self.phase, TWO_PI)

    @property
    def scale(self) -> float:
        return self.h ** self.exponent

    def total_variation_bound(self) -> float:
        """``sum weight |z - 1|`` including the tail."""
        return math.fsum(self.weight * np.abs(_em1(self.phase))) + self.scale * self.tail_bound


def build_mu_h(table: PhaseShiftTable, alpha: float) -> AtomicCircleMeasure:
    gamma = (table.d - 1) / (alpha - 1.0)
    expo = alpha * gamma
    w = table.h ** expo * table.mult.astype(float)
    return AtomicCircleMeasure(table.h, expo, _signed(2.0 * table.delta), w,
                               table.tail_sum, table.tail_bound, table.tail_sq)


@dataclass
class TraceResult:
    value: complex
    tail: complex
    remainder_bound: float


def trace_power_detail(table: PhaseShiftTable, k: int, *, max_linear: float = 1e-3) -> TraceResult:
    if k == 0:
        raise ValueError("k must be nonzero")
    if table.size and (table.tail_bound > 0 or table.method[-1] == EIKONAL):
        tail_max = abs(k) * abs(table.delta[-1])
        if tail_max > max_linear:
            raise ValueError(f"|k| * tail phase {tail_max:.3g} too large for the linearised tail; lower delta_floor")
    z = table.mult * _em1(2.0 * k * table.delta)
    tail = 2j * k * table.tail_sum
    val = complex(math.fsum(z.real), math.fsum(z.imag)) + tail
    return TraceResult(val, tail, 2.0 * k * k * table.tail_sq)


def trace_power(table: PhaseShiftTable, k: int) -> complex:
    """``Tr(S_h^k - I) = sum mult (exp(2ik delta) - 1)`` plus the closed-form tail."""
    return trace_power_detail(table, k).value


@dataclass
class TestFunction:
    """Function on the circle given through the angle, ``f(exp(i theta))``.

    ``slope`` is ``d f(e^{i theta})/d theta`` at 0; when present the tail
    atoms contribute ``slope * sum weight * 2 delta``.
    """

    func: Callable
    weighted_norm: float
    slope: complex | None = None
    name: str = ""

    __test__ = False


@dataclass
class Pairing:
    value: complex
    tail_bound: float
    observed_norm: float


def mu_pair(measure: AtomicCircleMeasure, f: TestFunction, *, slack: float = 1e-9) -> Pairing:
    """``<mu_h, f>`` with a tail estimate and a sampled weighted-norm check."""
    vals = np.asarray(f.func(measure.phase), dtype=complex)
    if vals.shape != measure.phase.shape:
        vals = np.broadcast_to(vals, measure.phase.shape)
    denom = np.abs(_em1(measure.phase))
    nz = denom > 0
    if np.any(~nz & (np.abs(vals) > 0)):
        raise WeightedNormError(f"{f.name or 'f'} does not vanish at z = 1")
    ratio = np.max(np.abs(vals[nz]) / denom[nz]) if np.any(nz) else 0.0
    if ratio > f.weighted_norm * (1.0 + slack) + slack:
        raise WeightedNormError(f"{f.name or 'f'}: |f/(z-1)| reaches {ratio:.6g} > declared {f.weighted_norm:g}")
    z = measure.weight * vals
    val = complex(math.fsum(z.real), math.fsum(z.imag))
    if f.slope is not None:
        val += measure.scale * f.slope * 2.0 * measure.tail_sum
    return Pairing(val, f.weighted_norm * measure.scale * measure.tail_bound, float(ratio))


def power_test_function(k: int) -> TestFunction:
    """``z^k - 1`` with its weighted norm ``|k|``."""
    return TestFunction(lambda t: _em1(k * t), float(abs(k)), slope=1j * k, name=f"z^{k}-1")


def weighted_basket(n: int = 10):
    """``(z - 1) z^j / 2``-type family with unit weighted norm."""
    out = []
    for j in range(n):
        out.append(TestFunction(lambda t, j=j: _em1(t) * np.exp(1j * j * t), 1.0, slope=1j, name=f"(z-1)z^{j}"))
    return out


# -- sectors --------------------------------------------------------------------------------

def _check_sector(phi0, phi1):
    if not 0.0 < phi0 < phi1 < TWO_PI:
        raise ValueError(f"sector must satisfy 0 < phi0 < phi1 < 2 pi, got [{phi0}, {phi1}]")


def sector_count(table: PhaseShiftTable, phi0: float, phi1: float, h: float | None = None,
                 alpha: float | None = None):
    """Eigenvalues (with multiplicity) with angle in ``[phi0, phi1]``."""
    _check_sector(phi0, phi1)
    ang = np.mod(_signed(2.0 * table.delta), TWO_PI)
    inside = (ang >= phi0) & (ang <= phi1)
    if np.any(inside & (table.method == EIKONAL)):
        raise RuntimeError("eikonal atoms fall inside the sector; crossover too early")
    n = int(np.sum(table.mult[inside]))
    h = table.h if h is None else h
    if alpha is None:
        return n, math.nan
    gamma = (table.d - 1) / (alpha - 1.0)
    return n, n * h ** (alpha * gamma)


def _branch_sum(a, b, beta, n_explicit=2000):
    """``sum_{n>=0} int_{a+2 pi n}^{b+2 pi n} theta^beta dtheta`` for ``0 < a < b``."""
    p = beta + 1.0
    n = np.arange(n_explicit)
    lo, hi = a + TWO_PI * n, b + TWO_PI * n
    terms = (hi ** p - lo ** p) / p
    explicit = math.fsum(terms)
    # Euler-Maclaurin for n >= N
    A, B = a + TWO_PI * n_explicit, b + TWO_PI * n_explicit
    q = p + 1.0
    integral = -(B ** q - A ** q) / (p * q * TWO_PI)
    f0 = (B ** p - A ** p) / p
    f1 = TWO_PI * (B ** beta - A ** beta)
    f3 = TWO_PI ** 3 * beta * (beta - 1.0) * (B ** (beta - 2.0) - A ** (beta - 2.0))
    tail = integral + 0.5 * f0 - f1 / 12.0 + f3 / 720.0
    return explicit + tail


def predicted_sector_mass(params: HomogeneousMeasureParams, phi0: float, phi1: float) -> float:
    """Mass of the pushed-forward homogeneous measure in the sector ``[phi0, phi1]``."""
    _check_sector(phi0, phi1)
    if not params.beta < -1.0:
        raise ValueError("beta must be below -1")
    m = 0.0
    if params.c1:
        m += params.c1 * _branch_sum(phi0, phi1, params.beta)
    if params.c2:
        m += params.c2 * _branch_sum(TWO_PI - phi1, TWO_PI - phi0, params.beta)
    return float(m)


def homogeneous_fourier_pairing(params: HomogeneousMeasureParams, k: int) -> complex:
    """``int (e^{ik theta} - 1) d(pushforward)`` by branch-summed quadrature on the circle.

    The density on ``(0, 2 pi)`` is summed over branches with Hurwitz zeta
    functions; the endpoint singularities are split off and integrated with
    algebraic weights.
    """
    beta = params.beta
    s = -beta

    def density(phi):
        x = phi / TWO_PI
        val = 0.0
        if params.c1:
            val += params.c1 * TWO_PI ** beta * special.zeta(s, x)
        if params.c2:
            val += params.c2 * TWO_PI ** beta * special.zeta(s, 1.0 - x)
        return val

    def regular(phi):
        # density minus the two singular branch terms
        x = phi / TWO_PI
        val = 0.0
        if params.c1:
            val += params.c1 * TWO_PI ** beta * (special.zeta(s, x) - x ** (-s))
        if params.c2:
            val += params.c2 * TWO_PI ** beta * (special.zeta(s, 1.0 - x) - (1.0 - x) ** (-s))
        return val

    kw = dict(epsabs=1e-14, epsrel=1e-13, limit=400)
    out = 0j
    for part, fn in (("re", lambda t: math.cos(k * t) - 1.0), ("im", lambda t: math.sin(k * t))):
        val = integrate.quad(lambda t: regular(t) * fn(t), 0.0, TWO_PI, **kw)[0]
        # singular pieces c1 phi^beta near 0 and c2 (2 pi - phi)^beta near 2 pi
        if params.c1:
            g = lambda t: fn(t) / t if t > 0 else (0.0 if part == "re" else float(k))
            val += params.c1 * integrate.quad(g, 0.0, TWO_PI, weight="alg", wvar=(beta + 1.0, 0.0), **kw)[0]
        if params.c2:
            g = lambda t: fn(t) / (TWO_PI - t) if t < TWO_PI else (0.0 if part == "re" else -float(k))
            val += params.c2 * integrate.quad(g, 0.0, TWO_PI, weight="alg", wvar=(0.0, beta + 1.0), **kw)[0]
        out += val if part == "re" else 1j * val
    return complex(out)


def homogeneous_fourier_closed(params: HomogeneousMeasureParams, k: int) -> complex:
    """``(Gamma c1 + conj(Gamma) c2) k^gamma`` for ``k > 0``."""
    G = params.Gamma
    val = (G * params.c1 + G.conjugate() * params.c2) * abs(k) ** params.gamma
    return val if k > 0 else val.conjugate()


# -- dyadic annuli and convergence ----------------------------------------------------------

@dataclass
class AnnulusReport:
    h: float
    p: np.ndarray
    counts: np.ndarray
    C: np.ndarray


def dyadic_annulus_counts(table: PhaseShiftTable, h: float, alpha: float, d: int, p_max: int = 20) -> AnnulusReport:
    """Counts with ``|exp(2i delta) - 1|`` in ``(2^-p, 2^(1-p)]`` and ``C_p = count 2^(-p gamma) h^(alpha gamma)``."""
    gamma = (d - 1) / (alpha - 1.0)
    dist = np.abs(_em1(2.0 * table.delta))
    p = np.arange(p_max + 1)
    counts = np.zeros(p.size, dtype=np.int64)
    with np.errstate(divide="ignore"):
        idx = np.ceil(-np.log2(dist)).astype(np.int64) if dist.size else np.zeros(0, np.int64)
    # fix rounding at exact powers of two
    if dist.size:
        lo = 2.0 ** (-idx.astype(float))
        idx = np.where(dist <= lo, idx + 1, idx)
        idx = np.where(dist > 2.0 * lo, idx - 1, idx)
        sel = (idx >= 0) & (idx <= p_max) & (dist > 0)
        np.add.at(counts, idx[sel], table.mult[sel])
    C = counts * 2.0 ** (-p * gamma) * h ** (alpha * gamma)
    return AnnulusReport(h, p, counts, C)


def predicted_annulus_constant(params: HomogeneousMeasureParams, p: int) -> float:
    """Limit of ``C_p`` from the homogeneous measure (all branches)."""
    eps_hi = 2.0 ** (1 - p)
    eps_lo = 2.0 ** (-p)
    # |e^{i phi} - 1| = 2 sin(phi/2): annulus is a pair of symmetric arcs
    a = 2.0 * math.asin(min(1.0, eps_lo / 2.0))
    b = 2.0 * math.asin(min(1.0, eps_hi / 2.0))
    mass = 0.0
    if b > a:
        if b < math.pi:
            mass = predicted_sector_mass(params, a, b) + predicted_sector_mass(params, TWO_PI - b, TWO_PI - a)
        else:
            mass = predicted_sector_mass(params, a, TWO_PI - a)
    return mass * 2.0 ** (-p * params.gamma)


@dataclass
class TraceRow:
    k: int
    h: np.ndarray
    scaled: np.ndarray
    limit: complex
    predicted: complex
    rel_err: float
    passed: bool


@dataclass
class SectorRow:
    phi0: float
    phi1: float
    h: np.ndarray
    counts: np.ndarray
    scaled: np.ndarray
    predicted: float
    rel_err: float
    slope: float
    passed: bool


@dataclass
class ConvergenceReport:
    traces: list = field(default_factory=list)
    sectors: list = field(default_factory=list)
    conjugate_ok: bool = True
    monotone_ok: bool = True
    notes: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return (all(r.passed for r in self.traces) and all(r.passed for r in self.sectors)
                and self.conjugate_ok)


def _rel(a, b):
    if b == 0:
        return 0.0 if a == 0 else math.inf
    return abs(a - b) / abs(b)


def convergence_report(sweep, params: HomogeneousMeasureParams, *, k_max: int = 4, sectors=(),
                       order: float | None = None, terms: int = 1, trace_tol: float = 0.10,
                       sector_tol: float = 0.15, slope_tol: float = 0.1) -> ConvergenceReport:
    """Compare a sweep ``[(h, table), ...]`` (``h`` decreasing) with the predicted limit."""
    if len(sweep) < 3:
        raise ValueError("need at least three values of h")
    hs = np.array([h for h, _ in sweep], dtype=float)
    if np.any(np.diff(hs) >= 0):
        raise ValueError("h values must be strictly decreasing")
    alpha = params.alpha
    expo = alpha * params.gamma
    order = params.gamma if order is None else order
    rep = ConvergenceReport()
    for k in [j for i in range(1, k_max + 1) for j in (i, -i)]:
        scaled = np.array([h ** expo * trace_power(t, k) for h, t in sweep])
        pred = params.trace_limit(k)
        lim = complex(richardson(hs, scaled, order, terms)) if pred != 0 or np.any(scaled != 0) else 0j
        err = _rel(lim, pred)
        devs = np.abs(scaled - pred)
        if pred != 0 and np.any(np.diff(devs) > 1e-12 * abs(pred)):
            rep.monotone_ok = False
            rep.notes.append(f"k={k}: deviation from prediction not monotone in h")
        rep.traces.append(TraceRow(k, hs, scaled, lim, pred, err, bool(err <= trace_tol)))
    for i in range(0, len(rep.traces), 2):
        a, b = rep.traces[i], rep.traces[i + 1]
        if not np.array_equal(a.scaled, np.conj(b.scaled)):
            rep.conjugate_ok = False
    for phi0, phi1 in sectors:
        counts = np.array([sector_count(t, phi0, phi1)[0] for _, t in sweep])
        scaled = counts * hs ** expo
        pred = predicted_sector_mass(params, phi0, phi1)
        err = _rel(scaled[-1], pred)
        slope = power_law_fit(hs, counts).exponent if np.all(counts > 0) else math.nan
        ok = err <= sector_tol and (pred == 0 or abs(slope + expo) <= slope_tol)
        rep.sectors.append(SectorRow(phi0, phi1, hs, counts, scaled, pred, err, slope, bool(ok)))
    return rep
