"""Experiment configuration: strict JSON parsing with recorded defaults."""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import asdict, dataclass, field, fields

from . import potentials as pot

WORKERS_ENV = "SOJOURN_LAB_WORKERS"
COMMANDS = ("classical", "deflection", "phaseshifts", "trace", "measure", "constants", "sweep", "verify")


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending key path."""


@dataclass
class PotentialBlock:
    dimension: int = 2
    alpha: float = 3.0
    strength: float = 1.0
    v0_coeffs: list | None = None
    correction: list = field(default_factory=list)
    epsilon: float = 1.0
    energy: float = 1.0
    r_min: float = pot.R_MIN_DEFAULT


@dataclass
class DirectionBlock:
    omega_in: list = field(default_factory=lambda: [1.0, 0.0])
    eta_hat: list = field(default_factory=lambda: [0.0, 1.0])


@dataclass
class Tolerances:
    integrator_tol: float = 1e-10
    quadrature_tol: float = 1e-9
    fit_slack: float = 0.1
    trace_tol: float = 0.10
    sector_tol: float = 0.15
    slope_tol: float = 0.1
    crossover_tol: float = 1e-4
    method_agree_tol: float = 1e-6
    g_tol: float = 0.02
    drift_tol: float = 1e-8
    annulus_factor: float = 2.0
    basket_slope_tol: float = 0.05


@dataclass
class SolverBlock:
    R0: float = 1e3
    launch_factor: float = 100.0
    max_length: float = 1e12
    l_cap: int = 20000
    delta_floor: float = 1e-9
    b_min: float = 2.0
    confirm: int = 3
    match_radius: float = 40.0
    numerov_step: float = 0.004
    richardson_order: float | None = None
    richardson_terms: int = 1
    g_impacts: list = field(default_factory=lambda: [10.0, 20.0, 40.0, 80.0])
    p_max: int = 20
    csv_eikonal_rows: int = 1000


@dataclass
class ExperimentConfig:
    potential: PotentialBlock = field(default_factory=PotentialBlock)
    h_list: list = field(default_factory=lambda: [0.1, 0.05, 0.025, 0.0125])
    k_max: int = 4
    sectors: list = field(default_factory=lambda: [[math.pi / 2, math.pi], [math.pi, 3 * math.pi / 2]])
    impact_list: list = field(default_factory=lambda: [2.0, 5.0, 10.0])
    direction: DirectionBlock = field(default_factory=DirectionBlock)
    g_profile: float | None = None
    tolerances: Tolerances = field(default_factory=Tolerances)
    solver: SolverBlock = field(default_factory=SolverBlock)
    output: str = "sojourn_out"
    workers: int = 1
    provenance: dict = field(default_factory=dict, compare=False)

    def spec(self) -> pot.PotentialSpec:
        p = self.potential
        return pot.PotentialSpec(
            dimension=p.dimension, alpha=p.alpha, strength=p.strength,
            v0_coeffs=None if p.v0_coeffs is None else tuple(p.v0_coeffs),
            correction=tuple(pot.CorrectionTerm(**t) for t in p.correction),
            epsilon=p.epsilon, energy=p.energy, r_min=p.r_min)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("provenance")
        return d

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()

    @property
    def richardson_order(self) -> float:
        """Correction exponent in ``h``; defaults to ``epsilon / (alpha - 1)``."""
        if self.solver.richardson_order is not None:
            return self.solver.richardson_order
        return self.potential.epsilon / (self.potential.alpha - 1.0)


_BLOCKS = {"potential": PotentialBlock, "direction": DirectionBlock, "tolerances": Tolerances, "solver": SolverBlock}
_CORRECTION_KEYS = {"coef", "power", "freq", "phase"}


def _no_duplicates(pairs):
    out = {}
    for k, v in pairs:
        if k in out:
            raise ConfigError(f"{k}: duplicated key")
        out[k] = v
    return out


def _fill(cls, data, path, prov):
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected an object")
    names = {f.name for f in fields(cls)} - {"provenance"}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{path}.{unknown[0]}: unknown key" if path else f"{unknown[0]}: unknown key")
    kwargs = {}
    for f in fields(cls):
        if f.name == "provenance":
            continue
        key = f"{path}.{f.name}" if path else f.name
        if f.name in _BLOCKS:
            kwargs[f.name] = _fill(_BLOCKS[f.name], data.get(f.name, {}), key, prov)
            prov[key] = "config" if f.name in data else "default"
        elif f.name in data:
            kwargs[f.name] = data[f.name]
            prov[key] = "config"
        else:
            prov[key] = "default"
    return cls(**kwargs)


def _num(v, key, *, positive=False, integer=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{key}: expected a number")
    if integer and int(v) != v:
        raise ConfigError(f"{key}: expected an integer")
    if not math.isfinite(v):
        raise ConfigError(f"{key}: must be finite")
    if positive and not v > 0:
        raise ConfigError(f"{key}: must be positive")
    return int(v) if integer else float(v)


def _validate(cfg: ExperimentConfig, command: str | None):
    p = cfg.potential
    p.dimension = _num(p.dimension, "potential.dimension", integer=True)
    if p.dimension < 2:
        raise ConfigError("potential.dimension: must be >= 2")
    p.alpha = _num(p.alpha, "potential.alpha")
    if not p.alpha > 1:
        raise ConfigError("potential.alpha: must exceed 1")
    p.strength = _num(p.strength, "potential.strength")
    p.energy = _num(p.energy, "potential.energy", positive=True)
    p.epsilon = _num(p.epsilon, "potential.epsilon", positive=True)
    p.r_min = _num(p.r_min, "potential.r_min", positive=True)
    if p.v0_coeffs is not None:
        if not isinstance(p.v0_coeffs, list) or not p.v0_coeffs:
            raise ConfigError("potential.v0_coeffs: expected a non-empty list")
        p.v0_coeffs = [_num(c, f"potential.v0_coeffs[{i}]") for i, c in enumerate(p.v0_coeffs)]
    if not isinstance(p.correction, list):
        raise ConfigError("potential.correction: expected a list")
    for i, t in enumerate(p.correction):
        key = f"potential.correction[{i}]"
        if not isinstance(t, dict):
            raise ConfigError(f"{key}: expected an object")
        bad = sorted(set(t) - _CORRECTION_KEYS)
        if bad:
            raise ConfigError(f"{key}.{bad[0]}: unknown key")
        if "coef" not in t or "power" not in t:
            raise ConfigError(f"{key}: needs coef and power")
        for k in t:
            t[k] = _num(t[k], f"{key}.{k}")
    if not isinstance(cfg.h_list, list) or not cfg.h_list:
        raise ConfigError("h_list: expected a non-empty list")
    cfg.h_list = [_num(h, f"h_list[{i}]", positive=True) for i, h in enumerate(cfg.h_list)]
    for i in range(1, len(cfg.h_list)):
        if not cfg.h_list[i] < cfg.h_list[i - 1]:
            raise ConfigError(f"h_list[{i}]: h_list must be strictly decreasing")
    cfg.k_max = _num(cfg.k_max, "k_max", integer=True)
    if cfg.k_max < 1:
        raise ConfigError("k_max: must be >= 1")
    if not isinstance(cfg.sectors, list):
        raise ConfigError("sectors: expected a list")
    for i, s in enumerate(cfg.sectors):
        if not (isinstance(s, list) and len(s) == 2):
            raise ConfigError(f"sectors[{i}]: expected [phi0, phi1]")
        a, b = _num(s[0], f"sectors[{i}][0]"), _num(s[1], f"sectors[{i}][1]")
        if not 0 < a < b < 2 * math.pi:
            raise ConfigError(f"sectors[{i}]: need 0 < phi0 < phi1 < 2 pi (sectors must exclude angle 0)")
        cfg.sectors[i] = [a, b]
    cfg.impact_list = [_num(b, f"impact_list[{i}]", positive=True) for i, b in enumerate(cfg.impact_list)]
    for name in ("omega_in", "eta_hat"):
        v = getattr(cfg.direction, name)
        if not isinstance(v, list) or len(v) != p.dimension:
            raise ConfigError(f"direction.{name}: expected {p.dimension} components")
        setattr(cfg.direction, name, [_num(x, f"direction.{name}") for x in v])
    if cfg.g_profile is not None:
        cfg.g_profile = _num(cfg.g_profile, "g_profile")
    for f in fields(Tolerances):
        setattr(cfg.tolerances, f.name, _num(getattr(cfg.tolerances, f.name), f"tolerances.{f.name}", positive=True))
    s = cfg.solver
    for name in ("R0", "launch_factor", "max_length", "delta_floor", "b_min", "match_radius", "numerov_step"):
        val = getattr(s, name)
        setattr(s, name, _num(val, f"solver.{name}", positive=name != "launch_factor"))
    for name in ("l_cap", "confirm", "richardson_terms", "p_max", "csv_eikonal_rows"):
        setattr(s, name, _num(getattr(s, name), f"solver.{name}", integer=True))
    if s.richardson_order is not None:
        s.richardson_order = _num(s.richardson_order, "solver.richardson_order", positive=True)
    s.g_impacts = [_num(b, f"solver.g_impacts[{i}]", positive=True) for i, b in enumerate(s.g_impacts)]
    if not isinstance(cfg.output, str) or not cfg.output:
        raise ConfigError("output: expected a directory name")
    cfg.workers = _num(cfg.workers, "workers", integer=True)
    if cfg.workers < 1:
        raise ConfigError("workers: must be >= 1")
    if command == "verify" and not p.alpha > p.dimension:
        raise ConfigError(f"potential.alpha: verify requires alpha > dimension (got alpha={p.alpha}, d={p.dimension})")
    try:
        cfg.spec()
    except ValueError as exc:
        raise ConfigError(f"potential: {exc}") from None


def parse_config(text: str, command: str | None = None) -> ExperimentConfig:
    """Parse JSON text into a validated :class:`ExperimentConfig`."""
    try:
        data = json.loads(text, object_pairs_hook=_no_duplicates)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"<root>: malformed JSON ({exc})") from None
    prov: dict = {}
    cfg = _fill(ExperimentConfig, data, "", prov)
    if "workers" not in data and os.environ.get(WORKERS_ENV):
        try:
            cfg.workers = int(os.environ[WORKERS_ENV])
        except ValueError:
            raise ConfigError(f"workers: environment variable {WORKERS_ENV} is not an integer") from None
        prov["workers"] = "environment"
    _validate(cfg, command)
    cfg.provenance = prov
    return cfg


def load_config(path: str, command: str | None = None) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), command)
