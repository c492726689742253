"""Potentials of the form ``V(x) = v0(x_hat) / |x|**alpha + W(x)``.

The angular profile ``v0`` is a truncated Fourier series in the polar angle
for ``d == 2`` and a zonal Legendre series in ``x_hat[-1]`` for ``d >= 3``.
The correction ``W`` is radial and built from terms

    coef * r**(-power) * cos(freq * log(r) + phase)

which covers pure power laws (``freq == phase == 0``) and log-oscillating
corrections.  Everything is closed form, so gradients are analytic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.polynomial import legendre
from scipy import stats

R_MIN_DEFAULT = 1e-6


class PointAtOriginError(ValueError):
    """Raised when a potential is evaluated inside the origin cutoff."""


@dataclass(frozen=True)
class CorrectionTerm:
    coef: float
    power: float
    freq: float = 0.0
    phase: float = 0.0

    def value(self, r):
        out = self.coef * np.power(r, -self.power)
        if self.freq or self.phase:
            out = out * np.cos(self.freq * np.log(r) + self.phase)
        return out

    def derivative(self, r, order: int = 1):
        """``d^order/dr^order`` of the term, via the complex-power form."""
        s = complex(-self.power, self.freq)
        pref = 1.0 + 0j
        for j in range(order):
            pref *= s - j
        z = self.coef * np.exp(1j * self.phase) * pref * np.exp((s - order) * np.log(r))
        return np.real(z)


@dataclass(frozen=True)
class PotentialSpec:
    """Parametric potential ``strength * profile(x_hat) / r**alpha + W(r)``.

    Attributes
    ----------
    dimension : int
        Space dimension ``d >= 2``.
    alpha : float
        Decay rate of the leading term, ``alpha > 1``.
    strength : float
        Overall coefficient of the leading term.
    v0_coeffs : tuple of float or None
        Angular profile.  ``d == 2``: ``(a0, a1, b1, a2, b2, ...)`` for
        ``a0 + sum a_n cos(n t) + b_n sin(n t)``.  ``d >= 3``: Legendre
        coefficients in ``x_hat[-1]``.  ``None`` means a constant profile 1.
    correction : tuple of CorrectionTerm
        Radial correction ``W``.
    epsilon : float
        Declared extra decay of ``W`` beyond ``r**-alpha``.
    energy : float
        Energy ``E > 0``.
    r_min : float
        Evaluation cutoff around the origin.
    """

    dimension: int = 2
    alpha: float = 3.0
    strength: float = 1.0
    v0_coeffs: tuple | None = None
    correction: tuple = field(default_factory=tuple)
    epsilon: float = 1.0
    energy: float = 1.0
    r_min: float = R_MIN_DEFAULT

    def __post_init__(self):
        if int(self.dimension) != self.dimension or self.dimension < 2:
            raise ValueError(f"dimension must be an integer >= 2, got {self.dimension}")
        if not self.alpha > 1.0:
            raise ValueError(f"alpha must exceed 1, got {self.alpha}")
        if not self.energy > 0.0:
            raise ValueError(f"energy must be positive, got {self.energy}")
        if self.correction and not self.epsilon > 0.0:
            raise ValueError("a correction term needs a declared epsilon > 0")
        if self.v0_coeffs is not None:
            object.__setattr__(self, "v0_coeffs", tuple(float(c) for c in self.v0_coeffs))
        object.__setattr__(
            self,
            "correction",
            tuple(t if isinstance(t, CorrectionTerm) else CorrectionTerm(**t) for t in self.correction),
        )

    @property
    def is_central(self) -> bool:
        if self.v0_coeffs is None:
            return True
        return all(c == 0.0 for c in self.v0_coeffs[1:])

    @property
    def is_zero(self) -> bool:
        lead = self.strength * (1.0 if self.v0_coeffs is None else max(abs(c) for c in self.v0_coeffs))
        return lead == 0.0 and all(t.coef == 0.0 for t in self.correction)

    @property
    def central_strength(self) -> float:
        """Coefficient of ``r**-alpha`` for a central spec."""
        if not self.is_central:
            raise ValueError("potential is not central")
        a0 = 1.0 if self.v0_coeffs is None else self.v0_coeffs[0]
        return self.strength * a0

    def radial_terms(self):
        """Central potential as ``(coef, power, freq, phase)`` arrays."""
        rows = [(self.central_strength, self.alpha, 0.0, 0.0)]
        rows += [(t.coef, t.power, t.freq, t.phase) for t in self.correction]
        rows = [r for r in rows if r[0] != 0.0]
        if not rows:
            rows = [(0.0, self.alpha, 0.0, 0.0)]
        arr = np.array(rows, dtype=float)
        return tuple(np.ascontiguousarray(arr[:, i]) for i in range(4))

    def sup_v0(self, samples: int = 4096) -> float:
        if self.dimension == 2:
            t = np.linspace(0.0, 2 * np.pi, samples, endpoint=False)
            pts = np.stack([np.cos(t), np.sin(t)], axis=-1)
        else:
            z = np.linspace(-1.0, 1.0, samples)
            pts = np.zeros((samples, self.dimension))
            pts[:, -1] = z
            pts[:, 0] = np.sqrt(1 - z * z)
        return float(np.max(np.abs(_profile(self, pts)[0])))


def _profile(spec: PotentialSpec, xhat):
    """Return ``(v0, tangential gradient of v0)`` at unit vectors ``xhat``."""
    xhat = np.asarray(xhat, dtype=float)
    if spec.v0_coeffs is None:
        return np.full(xhat.shape[:-1], spec.strength), np.zeros_like(xhat)
    c = np.asarray(spec.v0_coeffs)
    if spec.dimension == 2:
        t = np.arctan2(xhat[..., 1], xhat[..., 0])
        val = np.full(t.shape, c[0])
        dval = np.zeros(t.shape)
        for n in range(1, (len(c) - 1) // 2 + 1):
            a = c[2 * n - 1]
            b = c[2 * n] if 2 * n < len(c) else 0.0
            val = val + a * np.cos(n * t) + b * np.sin(n * t)
            dval = dval + n * (-a * np.sin(n * t) + b * np.cos(n * t))
        tangent = np.stack([-np.sin(t), np.cos(t)], axis=-1)
        return spec.strength * val, spec.strength * dval[..., None] * tangent
    z = xhat[..., -1]
    val = legendre.legval(z, c)
    dval = legendre.legval(z, legendre.legder(c)) if len(c) > 1 else np.zeros_like(z)
    e_d = np.zeros(spec.dimension)
    e_d[-1] = 1.0
    tangent = e_d - z[..., None] * xhat
    return spec.strength * val, spec.strength * dval[..., None] * tangent


def _radius(spec, x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != spec.dimension:
        raise ValueError(f"point has dimension {x.shape[-1]}, spec has {spec.dimension}")
    r = np.linalg.norm(x, axis=-1)
    if np.any(r < spec.r_min):
        raise PointAtOriginError(f"|x| below r_min={spec.r_min:g}")
    return x, r


def correction_value(spec: PotentialSpec, r):
    out = np.zeros_like(np.asarray(r, dtype=float))
    for t in spec.correction:
        out = out + t.value(r)
    return out


def correction_derivative(spec: PotentialSpec, r, order: int = 1):
    out = np.zeros_like(np.asarray(r, dtype=float))
    for t in spec.correction:
        out = out + t.derivative(r, order)
    return out


def evaluate(spec: PotentialSpec, x):
    """Potential value at ``x`` (shape ``(d,)`` or ``(n, d)``)."""
    x, r = _radius(spec, x)
    v0, _ = _profile(spec, x / r[..., None])
    out = v0 * r ** (-spec.alpha) + correction_value(spec, r)
    return float(out) if out.ndim == 0 else out


def gradient(spec: PotentialSpec, x):
    """Analytic gradient of the potential at ``x``."""
    x, r = _radius(spec, x)
    xhat = x / r[..., None]
    v0, dv0 = _profile(spec, xhat)
    ra = r ** (-spec.alpha)
    radial = -spec.alpha * v0 * ra / r + correction_derivative(spec, r)
    return radial[..., None] * xhat + (ra / r)[..., None] * dv0


def radial_value(spec: PotentialSpec, r):
    """``V(r)`` for a central spec."""
    r = np.asarray(r, dtype=float)
    return spec.central_strength * r ** (-spec.alpha) + correction_value(spec, r)


def radial_derivative(spec: PotentialSpec, r):
    r = np.asarray(r, dtype=float)
    return -spec.alpha * spec.central_strength * r ** (-spec.alpha - 1) + correction_derivative(spec, r)


def normalize_energy(spec: PotentialSpec, h: float):
    """Rescale to unit energy: ``V -> V/E`` and ``h -> h/sqrt(E)``."""
    if not h > 0:
        raise ValueError(f"h must be positive, got {h}")
    E = spec.energy
    terms = tuple(replace(t, coef=t.coef / E) for t in spec.correction)
    return replace(spec, strength=spec.strength / E, correction=terms, energy=1.0), h / math.sqrt(E)


@dataclass
class DecayReport:
    orders: list
    exponents: list
    thresholds: list
    passed: list

    @property
    def ok(self) -> bool:
        return all(self.passed)


def check_symbol_decay(spec: PotentialSpec, radii, max_order: int = 2, slack: float = 0.1) -> DecayReport:
    """Fit the decay exponent of ``|d^k W / dr^k|`` for ``k <= max_order``.

    Order ``k`` passes when the fitted exponent is at most
    ``-(alpha + k + epsilon) + slack``.
    """
    radii = np.asarray(radii, dtype=float)
    if radii.size < 3 or np.any(np.diff(radii) <= 0):
        raise ValueError("need at least three increasing radii")
    if np.log10(radii[-1] / radii[0]) < 2.0 - 1e-12:
        raise ValueError("radii must span at least two decades")
    orders, exps, thresholds, passed = [], [], [], []
    for k in range(max_order + 1):
        vals = np.abs(correction_value(spec, radii) if k == 0 else correction_derivative(spec, radii, k))
        if not np.all(np.isfinite(vals)):
            raise FloatingPointError(f"non-finite derivative of order {k}")
        thr = -(spec.alpha + k + spec.epsilon) + slack
        mask = vals > 0
        if mask.sum() < 2:
            exponent = -math.inf
        else:
            exponent = stats.linregress(np.log(radii[mask]), np.log(vals[mask])).slope
        orders.append(k)
        exps.append(float(exponent))
        thresholds.append(thr)
        passed.append(bool(exponent <= thr))
    return DecayReport(orders, exps, thresholds, passed)
