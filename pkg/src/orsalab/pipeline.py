"""End-to-end pipeline as composable stages.

Each stage reads artifacts from ``stage_input`` (a directory written by the
previous stage), copies them forward and writes its own into ``out``, so
each stage directory is self-contained; ``run_pipeline`` chains them in one
directory.  Wall-clock timings go to ``timing.json`` so every
other artifact is reproducible byte for byte.
"""
from __future__ import annotations

import json
import shutil
import time
from pathlib import Path

import numpy as np
import yaml

from . import io, solvency
from .config import ConfigError, RunConfig, to_dict
from .nested import NavScrPaths, run_nested, single_secondary_pool
from .proxy import ProxyModel, ProxySet, design_matrix, fit_proxy_set, validate
from .stdformula import build_scr_paths, solvency_ratio
from .theory import (efficiency_report, estimate_decomposition, toy_sample,
                     verify_speed_of_convergence)

NAV_FILE = "nav_scr_paths.csv"
PANEL_FILE = "risk_factors.csv"
NPV_FILE = "npv_retained.csv"


def _record_timing(out, stage, seconds):
    f = Path(out) / "timing.json"
    doc = json.loads(f.read_text()) if f.exists() else {}
    doc[stage] = round(seconds, 3)
    f.write_text(json.dumps(doc, indent=2) + "\n")


def _find(name, *dirs):
    for d in dirs:
        if d is not None and (Path(d) / name).exists():
            return Path(d) / name
    raise FileNotFoundError(f"{name} not found in {[str(d) for d in dirs if d is not None]}")


def _carry(src, out):
    """Copy upstream artifacts (timings excluded) into ``out``."""
    src, out = Path(src), Path(out)
    out.mkdir(parents=True, exist_ok=True)
    if not src.is_dir():
        raise FileNotFoundError(f"stage input {src} is not a directory")
    if src.resolve() == out.resolve():
        return
    shutil.copytree(src, out, dirs_exist_ok=True,
                    ignore=lambda d, names: [n for n in names if n == "timing.json"])


def _prov(cfg):
    return cfg.seed, cfg.fingerprint()


def _resolved_config(cfg, out):
    doc = to_dict(cfg)
    doc.pop("output_dir")
    doc.pop("workers")
    for m in doc["structure"]["modules"]:
        m["risks"] = {r["name"]: list(r["shocks"]) for r in m["risks"]}
    seed, fp = _prov(cfg)
    Path(out, "config.yaml").write_text(io.provenance_line(seed, fp)
                                        + yaml.safe_dump(doc, sort_keys=False))


# -- stages ----------------------------------------------------------------------

def stage_simulate(cfg: RunConfig, out, workers=None):
    t0 = time.perf_counter()
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    seed, fp = _prov(cfg)
    paths, panel = run_nested(cfg, workers=workers)
    build_scr_paths(paths, cfg.structure)
    io.write_nav_scr_paths(paths, out / NAV_FILE, seed, fp)
    io.write_panel(panel, out / PANEL_FILE, fp)
    if paths.npv is not None:
        io.write_retained_npv(paths.npv, out / NPV_FILE, seed, fp)
    _resolved_config(cfg, out)
    _record_timing(out, "simulate", time.perf_counter() - t0)
    return paths, panel


def _proxy_paths(ps: ProxySet, panel, ref: NavScrPaths, structure):
    central, shocked = ps.evaluate(panel)
    paths = NavScrPaths(central, shocked, ps.shock_ids, ref.delta, nav0=ref.nav0,
                        nav0_shocked=ref.nav0_shocked, scr0=ref.scr0, seed=ref.seed)
    build_scr_paths(paths, structure)
    return paths


def _validation(method, proxy: NavScrPaths, ref: NavScrPaths, out, seed, fp):
    qq_dir = out / "qq"
    qq_dir.mkdir(exist_ok=True)
    per_t = []
    for t in range(1, ref.horizon + 1):
        v_nav = validate(proxy.nav_hat[:, t - 1], ref.nav_hat[:, t - 1])
        v_sr = validate(proxy.solvency_ratio[:, t - 1], ref.solvency_ratio[:, t - 1])
        io.write_qq(v_nav["qq"], qq_dir / f"{method}_nav_t{t}.csv", seed, fp)
        io.write_qq(v_sr["qq"], qq_dir / f"{method}_sr_t{t}.csv", seed, fp)
        per_t.append({"t": t,
                      "nav": {k: v_nav[k] for k in ("quantiles", "reference", "proxy",
                                                    "relative_difference")},
                      "solvency_ratio": {k: v_sr[k] for k in ("quantiles", "reference", "proxy",
                                                              "relative_difference")}})
    return per_t


def stage_calibrate(cfg: RunConfig, out, stage_input=None, workers=None):
    t0 = time.perf_counter()
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    src = Path(stage_input) if stage_input else out
    _carry(src, out)
    seed, fp = _prov(cfg)
    ref = io.read_nav_scr_paths(_find(NAV_FILE, src))
    panel = io.read_panel(_find(PANEL_FILE, src))
    pc = cfg.proxy
    sets = {}
    for method in pc.methods:
        if method == "CF":
            targets = np.concatenate([ref.nav_hat[:, :, None], ref.nav_hat_shocked], axis=2)
            ps, calib = fit_proxy_set("CF", panel, targets, ref.shock_ids, pc, pc.cf_selection,
                                      pc.cf_n_calibration, seed)
        else:
            pool_panel, pool_npv = single_secondary_pool(cfg, pc.lsmc_pool, workers=workers)
            ps, calib = fit_proxy_set("LSMC", pool_panel, pool_npv, ref.shock_ids, pc,
                                      pc.lsmc_selection, pc.lsmc_n_calibration, seed)
        sets[method] = ps
        pdir = out / "proxies"
        pdir.mkdir(exist_ok=True)
        for (t, s), m in sorted(ps.models.items()):
            io.write_json(m.to_dict(), pdir / f"{method}_t{t}_{s}.json", seed, fp)
        ppaths = _proxy_paths(ps, panel, ref, cfg.structure)
        io.write_nav_scr_paths(ppaths, out / f"proxy_paths_{method}.csv", seed, fp)
        io.write_json({"method": method,
                       "calibration_indices": {str(t): (idx + 1).tolist()
                                               for t, idx in calib.items()},
                       "by_t": _validation(method, ppaths, ref, out, seed, fp)},
                      out / f"validation_{method}.json", seed, fp)
    npv_file = src / NPV_FILE
    if npv_file.exists() and sets:
        npv = io.read_retained_npv(npv_file)
        ps = sets.get("CF") or next(iter(sets.values()))
        io.write_json(_efficiency_from_nested(cfg, ps, panel, npv),
                      out / "efficiency.json", seed, fp)
    _record_timing(out, "calibrate", time.perf_counter() - t0)
    return sets


def _efficiency_from_nested(cfg, ps: ProxySet, panel, npv):
    rows = []
    prior = None
    for t in range(1, ps.horizon + 1):
        m = ps.model(t)
        X = design_matrix(m.terms, panel.factors, prior)
        dec = estimate_decomposition(npv[:, t - 1, :], X)
        rep = efficiency_report(cfg.proxy.cf_n_calibration, cfg.nested.n_secondary,
                                dec.w_var, dec.npv_var)
        rows.append({"t": t, "decomposition": dec.to_dict(), "efficiency": rep.to_dict()})
        prior = m.evaluate(panel.factors, prior)
    return {"source": "nested", "by_t": rows}


def _load_proxy_paths(src, out, methods):
    found = {}
    for m in methods:
        try:
            found[m] = io.read_nav_scr_paths(_find(f"proxy_paths_{m}.csv", src, out))
        except FileNotFoundError:
            pass
    return found


def stage_solve(cfg: RunConfig, out, stage_input=None):
    t0 = time.perf_counter()
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    src = Path(stage_input) if stage_input else out
    _carry(src, out)
    seed, fp = _prov(cfg)
    ref = io.read_nav_scr_paths(_find(NAV_FILE, src, out))
    sources = {"nested": ref, **_load_proxy_paths(src, out, cfg.proxy.methods)}
    doc = {}
    for spec in cfg.constraints:
        entry = {}
        for name, paths in sources.items():
            if spec.kind == "SC5" and name != "nested":
                continue
            if spec.kind in ("SC3", "SC4") and paths.scr is None:
                raise ConfigError(f"{name} paths carry no SCR; {spec.kind} needs them")
            entry[name] = solvency.solve(spec, paths).to_dict()
        doc[spec.label] = entry
    io.write_json({"constraints": doc}, out / "required_capital.json", seed, fp)
    _record_timing(out, "solve", time.perf_counter() - t0)
    return doc


def _rel(a, b):
    if not (np.isfinite(a) and np.isfinite(b)) or b == 0:
        return float("nan")
    return (a - b) / abs(b)


def stage_compare(cfg: RunConfig, out, stage_input=None):
    t0 = time.perf_counter()
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    src = Path(stage_input) if stage_input else out
    _carry(src, out)
    seed, fp = _prov(cfg)
    ref = io.read_nav_scr_paths(_find(NAV_FILE, src, out))
    report = {}
    sc0_holds, scr0_q = solvency.check_sc0(ref.nav_hat[:, 0], ref.delta[:, 1], ref.nav0)
    report["initial"] = {"nav0": ref.nav0, "scr0_standard_formula": ref.scr0,
                         "solvency_ratio0": float(solvency_ratio(ref.nav0, ref.scr0)),
                         "sc0": {"holds": sc0_holds, "scr0_simulated": scr0_q}}
    try:
        caps = io.read_json(_find("required_capital.json", src, out))["constraints"]
    except FileNotFoundError:
        caps = {}
    table = {}
    for label, entry in caps.items():
        k_ref = _num(entry["nested"]["capital_K"])
        row = {"nested": k_ref}
        for m in cfg.proxy.methods:
            if m in entry:
                k = _num(entry[m]["capital_K"])
                row[m] = k
                row[f"{m}_relative_difference"] = _rel(k, k_ref)
        table[label] = row
    report["capital"] = table
    validation, diagnostics = {}, {}
    for m in cfg.proxy.methods:
        try:
            v = io.read_json(_find(f"validation_{m}.json", src, out))
        except FileNotFoundError:
            continue
        validation[m] = [{"t": r["t"], "nav": r["nav"]["relative_difference"],
                          "solvency_ratio": r["solvency_ratio"]["relative_difference"]}
                         for r in v["by_t"]]
        diag = []
        for t in range(1, ref.horizon + 1):
            pm = ProxyModel.from_dict(io.read_json(_find(f"proxies/{m}_t{t}_central.json", src, out)))
            diag.append({"t": t, "n_terms": len(pm.terms),
                         "terms": [term.label for term in pm.terms],
                         "r_squared": pm.diagnostics["r_squared"],
                         "adjusted_r_squared": pm.diagnostics["adjusted_r_squared"]})
        diagnostics[m] = diag
    report["validation_quantiles"] = [0.25, 0.5, 0.75]
    report["validation"] = validation
    report["proxy_diagnostics"] = diagnostics
    try:
        report["efficiency"] = io.read_json(_find("efficiency.json", src, out))
        report["efficiency"].pop("provenance", None)
    except FileNotFoundError:
        th = cfg.theory
        report["efficiency"] = {"source": "config",
                                **efficiency_report(cfg.proxy.cf_n_calibration,
                                                    cfg.nested.n_secondary,
                                                    th.w_over_npv * th.npv_var,
                                                    th.npv_var).to_dict()}
    try:
        report["theory"] = io.read_json(_find("theory.json", src, out))
        report["theory"].pop("provenance", None)
    except FileNotFoundError:
        pass
    io.write_json(report, out / "report.json", seed, fp)
    _record_timing(out, "compare", time.perf_counter() - t0)
    return report


def _num(v):
    # JSON carries non-finite values as "inf" / "-inf" / "nan"
    return float(v)


def stage_theory(cfg: RunConfig, out):
    t0 = time.perf_counter()
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    th = cfg.theory
    speed = verify_speed_of_convergence(th)
    w = th.w_over_npv * th.npv_var
    X, _, npv = toy_sample(100_000, 10, w, th.npv_var, th.seed, key=10**6, n_terms=th.n_terms)
    dec = estimate_decomposition(npv, X)
    doc = {"speed_of_convergence": speed,
           "toy_decomposition": {**dec.to_dict(), "truth": {"w_var": w, "npv_var": th.npv_var}},
           "efficiency": efficiency_report(th.cf_n, th.P, w, th.npv_var).to_dict()}
    io.write_json(doc, out / "theory.json", *_prov(cfg))
    _record_timing(out, "theory", time.perf_counter() - t0)
    return doc


def run_pipeline(cfg: RunConfig, out=None, workers=None):
    """Chain the stages into one directory.

    Theory runs last so the report equals the staged
    ``simulate``/``calibrate``/``solve``/``compare`` composition.
    """
    cfg.validate()
    out = Path(out or cfg.output_dir)
    stage_simulate(cfg, out, workers)
    if cfg.proxy.methods:
        stage_calibrate(cfg, out, out, workers)
    stage_solve(cfg, out, out)
    report = stage_compare(cfg, out, out)
    stage_theory(cfg, out)
    return report
