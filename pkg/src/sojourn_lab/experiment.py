"""Pipelines behind the command line: each returns rows and summary data."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import classical as cl
from . import partial_waves as pw
from . import potentials as pot
from . import spectral as sp
from .config import ExperimentConfig
from .fitting import power_law_fit


def integrator_options(cfg: ExperimentConfig) -> cl.IntegratorOptions:
    s = cfg.solver
    return cl.IntegratorOptions(tol=cfg.tolerances.integrator_tol, R0=s.R0, launch_factor=s.launch_factor,
                                max_length=s.max_length)


def table_options(cfg: ExperimentConfig) -> pw.TableOptions:
    s = cfg.solver
    return pw.TableOptions(crossover_tol=cfg.tolerances.crossover_tol, confirm=s.confirm, b_min=s.b_min,
                           delta_floor=s.delta_floor, l_cap=s.l_cap)


def solver_options(cfg: ExperimentConfig) -> pw.SolverOptions:
    return pw.SolverOptions(match_radius=cfg.solver.match_radius, numerov_step=cfg.solver.numerov_step,
                            agree_tol=cfg.tolerances.method_agree_tol)


def unit_spec(cfg: ExperimentConfig, h: float = 1.0):
    """Potential normalised to unit energy together with the rescaled ``h``."""
    return pot.normalize_energy(cfg.spec(), h)


def _in_plane_angle(w_in, w_out):
    if w_in.size == 2:
        return math.atan2(w_in[0] * w_out[1] - w_in[1] * w_out[0], float(w_in @ w_out))
    return math.acos(max(-1.0, min(1.0, float(w_in @ w_out))))


def classical_rows(cfg: ExperimentConfig, impacts=None):
    """Rows ``(b, omega_out_angle, eta_out, tau, phi, sigma_quadrature, energy_drift, fit_residual)``."""
    spec, _ = unit_spec(cfg)
    opts = integrator_options(cfg)
    w = np.asarray(cfg.direction.omega_in, dtype=float)
    w = w / np.linalg.norm(w)
    e = np.asarray(cfg.direction.eta_hat, dtype=float)
    e = e - (e @ w) * w
    e = e / np.linalg.norm(e)
    rows = []
    for b in (cfg.impact_list if impacts is None else impacts):
        traj = cl.integrate_trajectory(spec, w, b * e, opts)
        ev = cl.extract_asymptotics(traj, opts)
        if spec.dimension == 2:
            normal = np.array([-ev.omega_out[1], ev.omega_out[0]])
            sgn = np.sign(np.array([-w[1], w[0]]) @ e)
            eta_out = float(sgn * (ev.eta_out @ normal))
        else:
            eta_out = float(np.linalg.norm(ev.eta_out))
        sigma = cl.deflection_central(spec, b) if spec.is_central else math.nan
        drift = max(traj.energy_drift(), traj.angular_momentum_drift() if spec.is_central else 0.0)
        rows.append((b, _in_plane_angle(w, ev.omega_out), eta_out, ev.tau, ev.phi, sigma, drift, ev.residual))
    return rows


def deflection_rows(cfg: ExperimentConfig, impacts=None):
    spec, _ = unit_spec(cfg)
    rows = []
    for eta in (cfg.impact_list if impacts is None else impacts):
        rm, s = cl.turning_point(spec, eta)
        rows.append((eta, cl.deflection_central(spec, eta, epsabs=cfg.tolerances.quadrature_tol * 1e-4), rm, s))
    return rows


def build_tables(cfg: ExperimentConfig, h_list=None, progress=None):
    """``[(h_normalised, table), ...]`` in the order of ``h_list``."""
    out = []
    for h in (cfg.h_list if h_list is None else h_list):
        spec, hn = unit_spec(cfg, h)
        tab = pw.build_table(spec, hn, tolerances=table_options(cfg), solver=solver_options(cfg),
                             workers=cfg.workers)
        out.append((hn, tab))
        if progress is not None:
            progress(h, tab)
    return out


def eikonal_g(spec: pot.PotentialSpec) -> float:
    """Leading coefficient of ``G_eik(b) = g b^(1-alpha) + ...`` for a central potential."""
    if spec.is_zero:
        return 0.0
    a = spec.alpha
    I = math.sqrt(math.pi) * math.gamma((a - 1) / 2) / math.gamma(a / 2)
    return -0.5 * spec.central_strength * I


@dataclass
class QuantumG:
    g: float
    b_lo: float
    b_hi: float
    count: int


def quantum_g(table: pw.PhaseShiftTable, alpha: float) -> QuantumG:
    """Fit ``2 h delta = g b^(1-alpha)`` over the largest decade of exact ``b``."""
    m = table.exact_mask() & (table.b > 0)
    if not np.any(m):
        return QuantumG(0.0, math.nan, math.nan, 0)
    b = table.b[m]
    y = 2.0 * table.h * table.delta[m]
    sel = b >= b.max() / 10.0
    if np.all(y[sel] == 0):
        return QuantumG(0.0, float(b[sel].min()), float(b.max()), int(sel.sum()))
    scaled = y[sel] * b[sel] ** (alpha - 1.0)
    sign = float(np.sign(np.median(scaled)))
    g = sign * float(np.exp(np.mean(np.log(np.abs(scaled)))))
    return QuantumG(g, float(b[sel].min()), float(b.max()), int(sel.sum()))


def predicted_params(cfg: ExperimentConfig, g: float | None = None):
    spec, _ = unit_spec(cfg)
    if g is None:
        g = cfg.g_profile if cfg.g_profile is not None else eikonal_g(spec)
    return sp.predicted_constants(g, spec.dimension, spec.alpha)


def trace_rows(sweep, params, k_max):
    rows = []
    for h, tab in sweep:
        scale = h ** (params.alpha * params.gamma)
        for k in [j for i in range(1, k_max + 1) for j in (i, -i)]:
            t = sp.trace_power(tab, k)
            pred = params.trace_limit(k)
            s = scale * t
            rel = abs(s - pred) / abs(pred) if pred != 0 else (0.0 if s == 0 else math.inf)
            rows.append((h, k, t.real, t.imag, s.real, s.imag, pred.real, pred.imag, rel))
    return rows


def sector_rows(sweep, params, sectors):
    rows = []
    for h, tab in sweep:
        for a, b in sectors:
            n, scaled = sp.sector_count(tab, a, b, h, params.alpha)
            pred = sp.predicted_sector_mass(params, a, b)
            rel = abs(scaled - pred) / abs(pred) if pred != 0 else (0.0 if n == 0 else math.inf)
            rows.append((h, a, b, n, scaled, pred, rel))
    return rows


def annulus_rows(sweep, params, p_max):
    rows = []
    reports = []
    for h, tab in sweep:
        rep = sp.dyadic_annulus_counts(tab, h, params.alpha, params.d, p_max)
        reports.append(rep)
        for p, n, C in zip(rep.p, rep.counts, rep.C):
            rows.append((h, int(p), int(n), float(C)))
    return rows, reports


def basket_values(sweep, alpha):
    basket = sp.weighted_basket()
    vals = []
    for h, tab in sweep:
        mu = sp.build_mu_h(tab, alpha)
        vals.append([sp.mu_pair(mu, f).value for f in basket])
    return [f.name for f in basket], np.array(vals)


@dataclass
class Check:
    name: str
    passed: bool
    detail: dict = field(default_factory=dict)


def annulus_check(reports, factor):
    """Per-annulus stability of ``C_p`` across ``h`` and boundedness of ``sup_p C_p``."""
    C = np.array([r.C for r in reports])
    if not np.any(C > 0):
        return Check("dyadic_annuli", True, {"note": "no atoms"})
    with np.errstate(divide="ignore", invalid="ignore"):
        per_p = np.where(C.min(axis=0) > 0, C.max(axis=0) / C.min(axis=0), np.inf)
    sup = C.max(axis=1)
    sup_ratio = float(sup.max() / sup.min())
    ok = bool(np.all(per_p < factor) and sup_ratio < factor)
    return Check("dyadic_annuli", ok, {"per_p_ratio_max": float(per_p.max()), "sup_ratio": sup_ratio,
                                       "global_ratio": float(C.max() / C[C > 0].min()),
                                       "sup_C": sup.tolist()})


def basket_check(hs, vals, tol):
    sup = np.max(np.abs(vals), axis=1)
    if not np.all(sup > 0):
        return Check("weighted_bound", bool(np.all(sup == 0)), {"sup": sup.tolist()})
    slope = power_law_fit(hs, sup).exponent
    return Check("weighted_bound", bool(abs(slope) <= tol), {"sup": sup.tolist(), "constant": float(sup.max()),
                                                             "slope": slope})


def run_verify(cfg: ExperimentConfig, sweep=None, log=print):
    """Full chain: classical g, predicted constants, sweep and convergence checks."""
    spec, _ = unit_spec(cfg)
    tol = cfg.tolerances
    checks: list[Check] = []
    summary: dict = {}
    opts = integrator_options(cfg)
    if spec.is_zero:
        g_cl = 0.0
    else:
        cg = cl.classical_g(spec, cfg.direction.omega_in, cfg.direction.eta_hat, impacts=cfg.solver.g_impacts,
                            opts=opts, max_spread=tol.g_tol)
        g_cl = cg.g
        summary["classical_g_backward"] = cg.g_backward
    log(f"classical g = {g_cl:.10g}")
    g_eik = eikonal_g(spec)
    params = sp.predicted_constants(g_cl if cfg.g_profile is None else cfg.g_profile, spec.dimension, spec.alpha)
    summary["params"] = params
    if sweep is None:
        sweep = build_tables(cfg, progress=lambda h, t: log(f"h={h:g}: l*={t.l_star}, l_max={t.l_max}"))
    hs = np.array([h for h, _ in sweep])
    report = sp.convergence_report(sweep, params, k_max=cfg.k_max, sectors=cfg.sectors,
                                   order=cfg.richardson_order, terms=cfg.solver.richardson_terms,
                                   trace_tol=tol.trace_tol, sector_tol=tol.sector_tol, slope_tol=tol.slope_tol)
    summary["report"] = report
    checks.append(Check("traces", all(r.passed for r in report.traces),
                        {"max_rel_err": max((r.rel_err for r in report.traces), default=0.0)}))
    checks.append(Check("conjugate_symmetry", report.conjugate_ok))
    checks.append(Check("sectors", all(r.passed for r in report.sectors),
                        {"rel_err": [r.rel_err for r in report.sectors], "slopes": [r.slope for r in report.sectors]}))
    _, reps = annulus_rows(sweep, params, cfg.solver.p_max)
    checks.append(annulus_check(reps, tol.annulus_factor))
    names, vals = basket_values(sweep, spec.alpha)
    checks.append(basket_check(hs, vals, tol.basket_slope_tol))
    ab = max((t.max_ab_diff for _, t in sweep), default=0.0)
    checks.append(Check("method_agreement", bool(ab <= tol.method_agree_tol), {"max_diff": ab}))
    cross = [t.crossover_rel_err for _, t in sweep if t.size and not math.isnan(t.crossover_rel_err)]
    checks.append(Check("crossover", all(c <= tol.crossover_tol for c in cross), {"rel_err": cross}))
    if not spec.is_zero:
        qg = quantum_g(sweep[-1][1], spec.alpha)
        trio = {"quantum": qg.g, "classical": g_cl, "eikonal": g_eik}
        pair = max(abs(a - b) / max(abs(a), abs(b)) for a in trio.values() for b in trio.values())
        checks.append(Check("phase_coefficient", bool(pair <= tol.g_tol), {**trio, "max_pair_rel": pair}))
    summary["checks"] = checks
    summary["sweep"] = sweep
    return all(c.passed for c in checks), summary
