"""``sojourn-lab <command> --config <path> [--out dir] [--workers N]``."""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
import time

import numpy as np

from . import __version__
from . import experiment as ex
from . import spectral as sp
from .config import COMMANDS, ConfigError, load_config

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def _jsonable(obj):
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    if isinstance(obj, np.ndarray):
        return [_jsonable(x) for x in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return None if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


class Artifacts:
    """Stages output files and writes them atomically (or as ``.partial``)."""

    def __init__(self, outdir: str):
        self.outdir = outdir
        self.staged: dict[str, str] = {}

    def csv(self, name, header, rows):
        lines = [",".join(header)] + [",".join(_fmt(v) for v in row) for row in rows]
        self.staged[name] = "\n".join(lines) + "\n"

    def json(self, name, obj):
        self.staged[name] = json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"

    def _write(self, name, text):
        os.makedirs(self.outdir, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=self.outdir, prefix=".tmp-")
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, os.path.join(self.outdir, name))

    def commit(self, partial=False):
        for name, text in self.staged.items():
            self._write(name + ".partial" if partial else name, text)
        return sorted(self.staged)


def _params_dict(p: sp.HomogeneousMeasureParams):
    return {"gamma": p.gamma, "beta": p.beta, "a1": p.a1, "a2": p.a2, "c": p.c, "c_direct": p.c_direct,
            "Gamma": p.Gamma, "c1": p.c1, "c2": p.c2, "prefactor": p.prefactor}


def _cmd_classical(cfg, art, summary, log):
    rows = ex.classical_rows(cfg)
    art.csv("classical.csv", ["b", "omega_out_angle", "eta_out", "tau", "phi", "sigma_quadrature", "energy_drift",
                              "fit_residual"], rows)
    summary["max_drift"] = max((r[6] for r in rows), default=0.0)
    return True


def _cmd_deflection(cfg, art, summary, log):
    rows = ex.deflection_rows(cfg)
    art.csv("deflection.csv", ["eta", "sigma", "r_m", "r_m_rel"], rows)
    return True


def _table_rows(h, tab, max_eik):
    idx = np.nonzero(tab.method == 0)[0].tolist()
    eik = np.nonzero(tab.method == 1)[0]
    idx += eik[:max_eik].tolist()
    nu, b = tab.nu, tab.b
    return [(h, int(tab.l[i]), nu[i], b[i], tab.delta[i], "exact" if tab.method[i] == 0 else "eikonal",
             int(tab.mult[i])) for i in idx]


def _table_summary(h, tab):
    return {"h": h, "l_star": tab.l_star, "l_max": tab.l_max, "rows": tab.size, "tail_sum": tab.tail_sum,
            "tail_bound": tab.tail_bound, "tail_sq": tab.tail_sq, "crossover_rel_err": tab.crossover_rel_err,
            "crossover_found": tab.crossover_found, "max_method_diff": tab.max_ab_diff}


def _sweep(cfg, summary, log):
    sweep = ex.build_tables(cfg, progress=lambda h, t: log(f"h={h:g}: l*={t.l_star} l_max={t.l_max}"))
    summary["tables"] = [_table_summary(h, t) for h, t in sweep]
    return sweep


def _cmd_phaseshifts(cfg, art, summary, log):
    sweep = _sweep(cfg, summary, log)
    rows = [r for h, t in sweep for r in _table_rows(h, t, cfg.solver.csv_eikonal_rows)]
    art.csv("phaseshifts.csv", ["h", "l", "nu", "b", "delta", "method", "mult"], rows)
    summary["csv_eikonal_rows_per_h"] = cfg.solver.csv_eikonal_rows
    return True


def _trace_csv(art, sweep, params, k_max):
    art.csv("traces.csv", ["h", "k", "re", "im", "scaled_re", "scaled_im", "predicted_re", "predicted_im", "rel_err"],
            ex.trace_rows(sweep, params, k_max))


def _measure_csv(art, sweep, params, cfg):
    art.csv("sectors.csv", ["h", "phi0", "phi1", "N", "scaled", "predicted", "rel_err"],
            ex.sector_rows(sweep, params, cfg.sectors))
    rows, reps = ex.annulus_rows(sweep, params, cfg.solver.p_max)
    art.csv("annuli.csv", ["h", "p", "count", "C_p"], rows)
    names, vals = ex.basket_values(sweep, params.alpha)
    art.csv("pairings.csv", ["h", "f", "re", "im"],
            [(h, n, v.real, v.imag) for (h, _), row in zip(sweep, vals) for n, v in zip(names, row)])
    return reps, vals


def _cmd_trace(cfg, art, summary, log):
    params = ex.predicted_params(cfg)
    sweep = _sweep(cfg, summary, log)
    _trace_csv(art, sweep, params, cfg.k_max)
    summary["params"] = _params_dict(params)
    return True


def _cmd_measure(cfg, art, summary, log):
    params = ex.predicted_params(cfg)
    sweep = _sweep(cfg, summary, log)
    _measure_csv(art, sweep, params, cfg)
    summary["params"] = _params_dict(params)
    return True


def _cmd_constants(cfg, art, summary, log):
    params = ex.predicted_params(cfg)
    summary["params"] = _params_dict(params)
    summary["g"] = cfg.g_profile if cfg.g_profile is not None else ex.eikonal_g(ex.unit_spec(cfg)[0])
    return True


def _cmd_sweep(cfg, art, summary, log):
    params = ex.predicted_params(cfg)
    sweep = _sweep(cfg, summary, log)
    _trace_csv(art, sweep, params, cfg.k_max)
    _measure_csv(art, sweep, params, cfg)
    summary["params"] = _params_dict(params)
    return True


def _cmd_verify(cfg, art, summary, log):
    ok, res = ex.run_verify(cfg, log=log)
    sweep, params, report = res["sweep"], res["params"], res["report"]
    summary["tables"] = [_table_summary(h, t) for h, t in sweep]
    _trace_csv(art, sweep, params, cfg.k_max)
    _measure_csv(art, sweep, params, cfg)
    summary["params"] = _params_dict(params)
    summary["richardson_order"] = cfg.richardson_order
    summary["trace_limits"] = [{"k": r.k, "limit": r.limit, "predicted": r.predicted, "rel_err": r.rel_err,
                                "passed": r.passed} for r in report.traces]
    summary["sector_fits"] = [{"phi0": r.phi0, "phi1": r.phi1, "slope": r.slope, "scaled_smallest_h": r.scaled[-1],
                               "predicted": r.predicted, "rel_err": r.rel_err, "passed": r.passed}
                              for r in report.sectors]
    summary["checks"] = {c.name: {"passed": c.passed, **c.detail} for c in res["checks"]}
    summary["notes"] = report.notes
    for c in res["checks"]:
        log(f"{'PASS' if c.passed else 'FAIL'} {c.name}")
    return ok


_HANDLERS = {name: globals()[f"_cmd_{name}"] for name in COMMANDS}


def build_parser():
    p = argparse.ArgumentParser(prog="sojourn-lab", description="Semiclassical scattering experiments.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="JSON experiment configuration")
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--workers", type=int, help="worker processes (overrides the config)")
    p.add_argument("--h", type=float, help="single h value (phaseshifts, trace, measure)")
    p.add_argument("--impact-list", help="comma-separated impact parameters (classical, deflection)")
    p.add_argument("--quiet", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    log = (lambda *a: None) if args.quiet else (lambda msg: print(msg, file=sys.stderr))
    try:
        cfg = load_config(args.config, args.command)
        if args.workers is not None:
            if args.workers < 1:
                raise ConfigError("workers: must be >= 1")
            cfg.workers = args.workers
        if args.h is not None:
            if not args.h > 0:
                raise ConfigError("h: must be positive")
            cfg.h_list = [args.h]
        if args.impact_list:
            try:
                cfg.impact_list = [float(x) for x in args.impact_list.split(",") if x.strip()]
            except ValueError:
                raise ConfigError("impact_list: expected comma-separated numbers") from None
    except (ConfigError, OSError) as exc:
        print(f"sojourn-lab: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    outdir = args.out or cfg.output
    art = Artifacts(outdir)
    summary = {"command": args.command, "tolerances": cfg.to_dict()["tolerances"]}
    t0 = time.perf_counter()
    status, code = "ok", EXIT_OK
    try:
        ok = _HANDLERS[args.command](cfg, art, summary, log)
        if not ok:
            status, code = "verification_failed", EXIT_FAIL
    except ConfigError as exc:
        print(f"sojourn-lab: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ArithmeticError, RuntimeError, ValueError, FloatingPointError) as exc:
        status, code = "numerical_failure", EXIT_NUMERIC
        summary["error"] = f"{type(exc).__name__}: {exc}"
        print(f"sojourn-lab: {args.command} failed: {exc}", file=sys.stderr)
    summary["passed"] = code == EXIT_OK
    art.json("summary.json", summary)
    files = art.commit(partial=code == EXIT_NUMERIC)
    manifest = {"command": args.command, "config_sha256": cfg.digest(), "config": cfg.to_dict(),
                "provenance": cfg.provenance, "version": __version__, "status": status,
                "wall_time_s": time.perf_counter() - t0, "artifacts": files}
    mart = Artifacts(outdir)
    mart.json("manifest.json", manifest)
    mart.commit()
    return code


if __name__ == "__main__":
    sys.exit(main())
