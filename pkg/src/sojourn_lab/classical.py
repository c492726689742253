"""Classical scattering data for ``H = |xi|^2 + V(x)``.

Rays are integrated in deviation form: with the free incoming ray
``x0(t) = 2 sqrt(E) omega_in t + eta_in`` the state is
``(u, p, phi, vint)`` where ``x = x0 + u``, ``xi = sqrt(E) omega_in + p``,
``phi`` accumulates ``x . grad V`` and ``vint`` accumulates ``V``.  Working
with the deviation keeps tiny deflections at full relative precision.

Sign conventions follow the relative scattering matrix (zero potential
gives the identity map).  Deflections are positive when the ray bends
towards its own impact side, i.e. away from a repulsive centre.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize, stats

from . import potentials as pot
from .fitting import power_law_fit
from .ode import StepSizeUnderflow, dopri5


class TrappingError(RuntimeError):
    """Trajectory did not exit within the allowed arc length."""


class ForbiddenRegionError(RuntimeError):
    """Trajectory entered the neighbourhood of the origin."""


class OrbitingError(ValueError):
    """Radial energy equation has no unique outer turning point."""


class FitError(RuntimeError):
    pass


@dataclass
class IntegratorOptions:
    tol: float = 1e-10
    R0: float = 1e3
    launch_factor: float = 100.0
    max_length: float = 1e12
    max_steps: int = 400_000
    tail_decade: float = 10.0
    fit_tol: float = 1e-6
    first_order: bool = True


@dataclass
class Trajectory:
    spec: pot.PotentialSpec
    omega_in: np.ndarray
    eta_in: np.ndarray
    t: np.ndarray
    x: np.ndarray
    xi: np.ndarray
    energy: np.ndarray
    u: np.ndarray
    p: np.ndarray
    phi_body: float
    vint_body: float
    launch_radius: float
    steps: int
    rejected: int
    max_error: float

    @property
    def speed(self) -> float:
        return 2.0 * math.sqrt(self.spec.energy)

    def min_radius(self) -> float:
        """Perihelion distance from a quintic Hermite interpolant of the samples."""
        from scipy.interpolate import BPoly
        r2 = np.einsum("ij,ij->i", self.x, self.x)
        i = int(np.argmin(r2))
        lo, hi = max(i - 1, 0), min(i + 1, self.t.size - 1)
        acc = -2.0 * pot.gradient(self.spec, self.x[lo:hi + 1])
        best = math.sqrt(r2[i])
        ts = self.t[lo:hi + 1]
        ys = [np.stack([self.x[j], 2.0 * self.xi[j], acc[j - lo]]) for j in range(lo, hi + 1)]
        poly = BPoly.from_derivatives(ts, ys)
        res = optimize.minimize_scalar(lambda s: float(np.sum(poly(s) ** 2)), bounds=(ts[0], ts[-1]),
                                       method="bounded", options={"xatol": 1e-14 * max(1.0, abs(ts[-1]))})
        return float(min(best, math.sqrt(res.fun)))

    def energy_drift(self) -> float:
        E = self.spec.energy
        return float(np.max(np.abs(self.energy - E)) / E)

    def angular_momentum(self) -> np.ndarray:
        xx = np.einsum("ij,ij->i", self.x, self.x)
        pp = np.einsum("ij,ij->i", self.xi, self.xi)
        xp = np.einsum("ij,ij->i", self.x, self.xi)
        return np.sqrt(np.maximum(xx * pp - xp * xp, 0.0))

    def angular_momentum_drift(self) -> float:
        L = self.angular_momentum()
        return float(np.max(np.abs(L - L[0])) / max(abs(L[0]), 1e-300)) if L[0] != 0 else float(np.max(L))


@dataclass
class ScatterEvent:
    omega_in: np.ndarray
    eta_in: np.ndarray
    omega_out: np.ndarray
    eta_out: np.ndarray
    tau: float
    phi: float
    residual: float
    d_omega: np.ndarray = field(repr=False)
    d_eta: np.ndarray = field(repr=False)

    @property
    def impact(self) -> float:
        return float(np.linalg.norm(self.eta_in))

    @property
    def deflection(self) -> float:
        """Signed angle between incoming and outgoing directions."""
        theta = 2.0 * math.asin(min(1.0, float(np.linalg.norm(self.d_omega)) / 2.0))
        b = np.linalg.norm(self.eta_in)
        if b == 0:
            return theta
        return theta if float(self.d_omega @ self.eta_in) >= 0 else -theta

    def log_shift(self) -> np.ndarray:
        """Tangent vector at ``omega_in`` pointing to ``omega_out`` (length = angle)."""
        w = self.omega_in
        tang = self.d_omega - (w @ self.d_omega) * w
        nt = np.linalg.norm(tang)
        if nt == 0:
            return np.zeros_like(w)
        theta = 2.0 * math.asin(min(1.0, float(np.linalg.norm(self.d_omega)) / 2.0))
        return theta * tang / nt


def _unit(v):
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if n == 0:
        raise ValueError("zero direction vector")
    return v / n


def _check_ray(omega_in, eta_in):
    w = _unit(omega_in)
    eta = np.asarray(eta_in, dtype=float)
    if abs(w @ eta) > 1e-10 * max(1.0, np.linalg.norm(eta)):
        raise ValueError("eta_in must be orthogonal to omega_in")
    eta = eta - (w @ eta) * w
    return w, eta


def _free_flight_correction(spec, omega, eta, speed, t0, sign):
    """First-order deviation of the true ray from the free ray beyond ``t0``.

    ``sign=-1`` integrates over ``(-inf, t0]`` (incoming side) and returns
    ``(p, u)`` at ``t0``; ``sign=+1`` integrates over ``[t0, inf)`` and
    returns the momentum/position that remain to be picked up.
    """
    d = spec.dimension

    def ray(s):
        return speed * omega * s + eta

    def dp(s):
        return pot.gradient(spec, ray(s))

    def du(s):
        return (t0 - s) * pot.gradient(spec, ray(s))

    lims = (-np.inf, t0) if sign < 0 else (t0, np.inf)
    g1, _ = integrate.quad_vec(dp, *lims, epsabs=1e-300, epsrel=1e-12, limit=400)
    g2, _ = integrate.quad_vec(du, *lims, epsabs=1e-300, epsrel=1e-12, limit=400)
    g1 = np.asarray(g1).reshape(d)
    g2 = np.asarray(g2).reshape(d)
    if sign < 0:
        return -g1, -speed * g2
    return -g1, speed * g2


def _line_integrals(spec, omega, eta, speed, t0, sign):
    """``int x.gradV`` and ``int V`` along a free ray beyond ``t0``."""

    def ray(s):
        return speed * omega * s + eta

    def f_phi(s):
        x = ray(s)
        return float(x @ pot.gradient(spec, x))

    def f_v(s):
        return float(pot.evaluate(spec, ray(s)))

    lims = (-np.inf, t0) if sign < 0 else (t0, np.inf)
    a, _ = integrate.quad(f_phi, *lims, epsabs=1e-300, epsrel=1e-12, limit=400)
    b, _ = integrate.quad(f_v, *lims, epsabs=1e-300, epsrel=1e-12, limit=400)
    return a, b


def integrate_trajectory(spec: pot.PotentialSpec, omega_in, eta_in, opts: IntegratorOptions | None = None):
    """Integrate the ray with incoming asymptote ``x = 2 sqrt(E) omega_in t + eta_in``.

    The ray is launched at radius ``max(R0, launch_factor * |eta_in|)`` on
    the corrected incoming asymptote and followed until it leaves that
    radius again with outgoing radial momentum.
    """
    opts = opts or IntegratorOptions()
    w, eta = _check_ray(omega_in, eta_in)
    d = spec.dimension
    speed = 2.0 * math.sqrt(spec.energy)
    b = float(np.linalg.norm(eta))
    R = max(opts.R0, opts.launch_factor * b)
    if R <= b:
        raise ValueError("launch radius must exceed the impact parameter")
    t0 = -math.sqrt(R * R - b * b) / speed
    if spec.is_zero or not opts.first_order:
        p0 = np.zeros(d)
        u0 = np.zeros(d)
    else:
        p0, u0 = _free_flight_correction(spec, w, eta, speed, t0, -1)
    xi0 = math.sqrt(spec.energy) * w
    y0 = np.concatenate([u0, p0, [0.0, 0.0]])
    r_forbid = 10.0 * spec.r_min

    def rhs(t, y):
        x = speed * w * t + eta + y[:d]
        r = np.linalg.norm(x)
        if r < r_forbid:
            raise ForbiddenRegionError(f"trajectory entered |x| < {r_forbid:g}")
        g = pot.gradient(spec, x)
        out = np.empty_like(y)
        out[:d] = 2.0 * y[d:2 * d]
        out[d:2 * d] = -g
        out[2 * d] = x @ g
        out[2 * d + 1] = pot.evaluate(spec, x)
        return out

    def scale(y_old, y_new):
        sc = np.empty_like(y_old)
        for lo, hi in ((0, d), (d, 2 * d), (2 * d, 2 * d + 1), (2 * d + 1, 2 * d + 2)):
            m = max(np.max(np.abs(y_old[lo:hi])), np.max(np.abs(y_new[lo:hi])))
            sc[lo:hi] = opts.tol * m + 1e-300
        return sc

    def stop(t, y):
        x = speed * w * t + eta + y[:d]
        xi = xi0 + y[d:2 * d]
        return t > 0 and np.linalg.norm(x) >= R and x @ xi > 0

    def on_step(t, y):
        if speed * (t - t0) > opts.max_length:
            raise TrappingError(f"arc length exceeded {opts.max_length:g} without exit")

    # time to cross the interaction region freely, plus generous slack
    t_max = -t0 + opts.max_length / speed
    sol = dopri5(rhs, t0, y0, t_max, rtol=opts.tol, scale=scale, stop=stop, on_step=on_step,
                 first_step=min(1.0, R / speed * 1e-3), max_steps=opts.max_steps)
    if sol.status != "stopped":
        if sol.status == "max_steps":
            raise TrappingError("step budget exhausted before exit")
        raise TrappingError("trajectory did not exit")
    ts = sol.t
    u = sol.y[:, :d]
    p = sol.y[:, d:2 * d]
    x = speed * np.outer(ts, w) + eta + u
    xi = xi0 + p
    V = pot.evaluate(spec, x)
    H = np.einsum("ij,ij->i", xi, xi) + V
    return Trajectory(spec, w, eta, ts, x, xi, H, u, p, float(sol.y[-1, 2 * d]), float(sol.y[-1, 2 * d + 1]),
                      R, sol.steps, sol.rejected, sol.max_error)


def _outgoing_fit(traj: Trajectory, opts: IntegratorOptions, corrected: bool = True):
    spec = traj.spec
    d = spec.dimension
    speed = traj.speed
    w_in, eta_in = traj.omega_in, traj.eta_in
    r = np.linalg.norm(traj.x, axis=1)
    radial = np.einsum("ij,ij->i", traj.x, traj.xi) > 0
    R_end = r[-1]
    sel = np.where(radial & (r >= R_end / opts.tail_decade) & (traj.t > 0))[0]
    if sel.size < 4:
        sel = np.arange(max(0, traj.t.size - 6), traj.t.size)
    ts = traj.t[sel]
    ys = traj.u[sel].copy()
    corr = np.zeros_like(ys)
    for it in range(3 if corrected and not spec.is_zero else 1):
        Y = ys + corr
        Amat = np.stack([ts, np.ones_like(ts)], axis=1)
        coef, *_ = np.linalg.lstsq(Amat, Y, rcond=None)
        A, B = coef[0], coef[1]
        a = A / speed
        wa = w_in + a
        nw = np.linalg.norm(wa)
        d_omega = (a - ((2 * (w_in @ a) + a @ a) / (nw + 1.0)) * w_in) / nw
        w_out = w_in + d_omega
        w_out = w_out / np.linalg.norm(w_out)
        base = eta_in + B
        proj = eta_in @ d_omega + B @ w_out
        eta_out = base - proj * w_out
        d_eta = B - proj * w_out
        tau = -proj / speed
        resid = float(np.max(np.abs(Y - Amat @ coef))) if ts.size > 2 else 0.0
        if it == 2 or spec.is_zero or not corrected:
            break
        # pick up what the potential still does to the ray after each sample
        for i, ti in enumerate(ts):
            line_w, line_eta = w_out, eta_out - speed * w_out * tau
            g, _ = integrate.quad_vec(
                lambda s: (s - ti) * pot.gradient(spec, speed * line_w * s + line_eta),
                ti, np.inf, epsabs=1e-300, epsrel=1e-10, limit=200)
            corr[i] = 2.0 * np.asarray(g).reshape(d)
    return w_out, eta_out, tau, resid, d_omega, d_eta


def sojourn_phi(traj: Trajectory, opts: IntegratorOptions | None = None, *, with_vint: bool = False):
    """``phi = int x . grad V(x) dt`` along the whole ray, with free-ray tails."""
    opts = opts or IntegratorOptions()
    spec = traj.spec
    if spec.is_zero:
        return (0.0, 0.0) if with_vint else 0.0
    speed = traj.speed
    t0, t1 = traj.t[0], traj.t[-1]
    a_in, v_in = _line_integrals(spec, traj.omega_in, traj.eta_in, speed, t0, -1)
    w_out, eta_out, tau, *_ = _outgoing_fit(traj, opts, opts.first_order)
    a_out, v_out = _line_integrals(spec, w_out, eta_out - speed * w_out * tau, speed, t1, +1)
    phi = traj.phi_body + a_in + a_out
    vint = traj.vint_body + v_in + v_out
    if abs(a_in + a_out) > 0.1 * abs(phi) and abs(phi) > 0:
        raise FitError("sojourn tail not converged; increase R0")
    return (phi, vint) if with_vint else phi


def extract_asymptotics(traj: Trajectory, opts: IntegratorOptions | None = None, *, corrected: bool = True):
    """Outgoing asymptote ``x = 2 sqrt(E) omega (t - tau) + eta`` and sojourn value."""
    opts = opts or IntegratorOptions()
    w_out, eta_out, tau, resid, d_omega, d_eta = _outgoing_fit(traj, opts, corrected and opts.first_order)
    scale = 1.0 + float(np.linalg.norm(traj.eta_in))
    if resid > opts.fit_tol * scale:
        raise FitError(f"outgoing fit residual {resid:.3g} above tolerance; increase R0")
    phi = sojourn_phi(traj, opts)
    return ScatterEvent(traj.omega_in, traj.eta_in, w_out, eta_out, float(tau), float(phi), resid, d_omega, d_eta)


def scatter(spec, omega_in, eta_in, opts: IntegratorOptions | None = None):
    """Integrate a ray and return its :class:`ScatterEvent`."""
    traj = integrate_trajectory(spec, omega_in, eta_in, opts)
    return extract_asymptotics(traj, opts)


# -- central potentials ---------------------------------------------------------------

def _require_central(spec):
    if not spec.is_central:
        raise ValueError("central potential required")
    if spec.energy != 1.0:
        raise ValueError("normalize the energy to 1 first")


def _radial_gap(spec, eta, s):
    """``1 - eta^2/r^2 - V(r)`` at ``r = eta (1 + s)``, accurate for small ``s``."""
    r = eta * (1.0 + s)
    return s * (2.0 + s) / (1.0 + s) ** 2 - pot.radial_value(spec, r)


def turning_point(spec: pot.PotentialSpec, eta: float):
    """Outer turning radius ``r_m`` and ``r_m/eta - 1`` for impact parameter ``eta``."""
    _require_central(spec)
    if eta < 0:
        raise ValueError("impact parameter must be non-negative")
    if spec.is_zero:
        return float(eta), 0.0

    def F(r):
        return 1.0 - (eta / r) ** 2 - pot.radial_value(spec, r)

    hi = max(10.0 * eta, 10.0)
    while F(hi) <= 0:
        hi *= 10.0
        if hi > 1e12:
            raise OrbitingError("no turning point found")
    grid = np.geomspace(max(spec.r_min * 10, 1e-8 * hi), hi * 10, 4000)
    vals = 1.0 - (eta / grid) ** 2 - pot.radial_value(spec, grid)
    pos = vals > 0
    changes = np.nonzero(pos[1:] != pos[:-1])[0]
    if changes.size == 0:
        raise OrbitingError("radial energy equation has no turning point")
    k = changes[-1]
    if pos[k]:
        raise OrbitingError("classically forbidden at large radius")
    if changes.size > 1:
        raise OrbitingError("multiple turning points (orbiting regime)")
    if eta > 0:
        s_lo = grid[k] / eta - 1.0
        s_hi = grid[k + 1] / eta - 1.0
        s = optimize.brentq(lambda s: _radial_gap(spec, eta, s), s_lo, s_hi, xtol=1e-300, rtol=1e-15, maxiter=500)
        return eta * (1.0 + s), s
    r = optimize.brentq(F, grid[k], grid[k + 1], xtol=1e-300, rtol=1e-15, maxiter=500)
    return r, math.inf


def _q_over(spec, rm, eps):
    """``(V(rm) - V(rm/u)) / (1 - u^2)`` with ``u = cos(eps)``."""
    lnu = np.log1p(-2.0 * np.sin(eps / 2.0) ** 2)
    den = np.sin(eps) ** 2
    coef, power, freq, phase = spec.radial_terms()
    num = 0.0
    for c, p, f, ph in zip(coef, power, freq, phase):
        base = c * rm ** (-p)
        if f == 0.0 and ph == 0.0:
            num = num - base * np.expm1(p * lnu)
        else:
            lr = math.log(rm)
            num = num + base * (np.cos(f * lr + ph) - np.exp(p * lnu) * np.cos(f * (lr - lnu) + ph))
    with np.errstate(invalid="ignore", divide="ignore"):
        q = num / den
    small = den < 1e-10
    if np.any(small):
        q = np.where(small, -0.5 * rm * pot.radial_derivative(spec, rm), q)
    return q


def deflection_central(spec: pot.PotentialSpec, eta: float, *, epsabs: float = 1e-13):
    """Scattering angle of a central potential by quadrature.

    Uses ``Sigma = -2 int_0^{pi/2} [(1 + q/a^2)^{-1/2} - 1] d eps`` where
    ``a = eta/r_m``; the integrand is smooth, so no endpoint singularity
    remains and no ``pi - (pi + small)`` cancellation occurs.
    """
    _require_central(spec)
    if spec.is_zero:
        return 0.0
    if eta == 0:
        return math.pi
    rm, _ = turning_point(spec, eta)
    a2 = (eta / rm) ** 2

    def f(eps):
        x = _q_over(spec, rm, eps) / a2
        if x <= -1.0:
            raise OrbitingError("radicand vanishes inside the integration range")
        return float(np.expm1(-0.5 * np.log1p(x)))

    val, err = integrate.quad(f, 0.0, math.pi / 2, epsabs=epsabs, epsrel=1e-13, limit=200)
    return -2.0 * val


# -- large-|eta| asymptotics ---------------------------------------------------------

@dataclass
class SojournFit:
    quantity: str
    exponent: float
    expected: float
    prefactor: float
    leading: float
    rvalue: float


def _ray_family(spec, omega_in, eta_hat, impacts, opts):
    w = _unit(omega_in)
    e = _unit(eta_hat)
    if abs(w @ e) > 1e-12:
        raise ValueError("eta_hat must be orthogonal to omega_in")
    return [scatter(spec, w, b * e, opts) for b in impacts]


def fit_sojourn_asymptotics(events, alpha: float, *, floor: float = 1e-14, min_r: float = 0.999):
    """Log-log fits of the deviation of the scattering map from the identity.

    Returns fits for the angular position shift, the impact-vector shift
    and ``|phi|`` with expected exponents ``-alpha``, ``1-alpha``, ``1-alpha``.
    Zero data yield exponent ``-inf``.
    """
    if len(events) < 5:
        raise ValueError("need at least five events")
    b = np.array([ev.impact for ev in events])
    if np.log10(b.max() / b.min()) < 2.0 - 1e-12:
        raise ValueError("impacts must span two decades")
    series = {
        "position": (np.array([ev.deflection for ev in events]), -alpha),
        "momentum": (np.array([np.linalg.norm(ev.d_eta) for ev in events]), 1.0 - alpha),
        "phi": (np.array([ev.phi for ev in events]), 1.0 - alpha),
    }
    out = {}
    for name, (vals, expected) in series.items():
        mag = np.abs(vals)
        if np.all(mag < floor):
            out[name] = SojournFit(name, -math.inf, expected, 0.0, 0.0, 1.0)
            continue
        fit = power_law_fit(b, mag)
        if abs(fit.rvalue) < min_r:
            raise FitError(f"{name}: correlation {fit.rvalue:.5f} below {min_r}")
        sign = float(np.sign(vals[-1]))
        leading = float(vals[-1] * b[-1] ** (-expected))
        out[name] = SojournFit(name, fit.exponent, expected, sign * fit.prefactor, leading, fit.rvalue)
    return out


@dataclass
class ClassicalG:
    g: float
    g_backward: float
    impacts: np.ndarray
    scaled: np.ndarray
    scaled_backward: np.ndarray
    spread: float


def phase_coefficient_samples(events, alpha):
    """``G |eta|^(alpha-1)`` per event in both parametrisations."""
    fwd, bwd = [], []
    for ev in events:
        v = ev.log_shift()
        fwd.append((ev.phi + v @ ev.eta_out) * np.linalg.norm(ev.eta_out) ** (alpha - 1))
        bwd.append((ev.phi + v @ ev.eta_in) * np.linalg.norm(ev.eta_in) ** (alpha - 1))
    return np.array(fwd), np.array(bwd)


def _extrapolate(b, y, q):
    A = np.stack([np.ones_like(b), b ** (-q)], axis=1)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    return float(coef[0])


def classical_g(spec: pot.PotentialSpec, omega_in, eta_hat, *, impacts=(10.0, 20.0, 40.0, 80.0),
                opts: IntegratorOptions | None = None, max_spread: float = 0.02):
    """Leading coefficient ``g`` of the phase ``G = g |eta|^(1-alpha) + ...``.

    ``G`` is assembled from trajectory data as ``phi + v . eta`` where ``v``
    is the angular shift of the outgoing direction; the limit is taken by a
    two-term extrapolation in ``|eta|``.
    """
    if spec.is_zero:
        b = np.asarray(impacts, dtype=float)
        z = np.zeros_like(b)
        return ClassicalG(0.0, 0.0, b, z, z, 0.0)
    events = _ray_family(spec, omega_in, eta_hat, impacts, opts)
    b = np.array([ev.impact for ev in events])
    fwd, bwd = phase_coefficient_samples(events, spec.alpha)
    # the leading correction to the scaled phase is relative |eta|^-alpha
    q = spec.alpha
    if spec.correction:
        q = min(q, spec.epsilon)
    g = _extrapolate(b, fwd, q)
    g2 = _extrapolate(b, bwd, q)
    spread = abs(g - fwd[-1]) / abs(g) if g != 0 else 0.0
    if spread > max_spread:
        raise FitError(f"classical g not converged: spread {spread:.3g}")
    return ClassicalG(g, g2, b, fwd, bwd, spread)
