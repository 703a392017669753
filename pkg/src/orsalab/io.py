"""Artifact persistence: CSV for arrays, JSON for models and reports.

Every file starts with a provenance line (seed and config fingerprint):
a ``#`` comment in CSV files, a ``provenance`` key in JSON documents.
Floats are written with ``repr`` so they round-trip exactly.
"""
from __future__ import annotations

import csv
import io as _io
import json
import math
from pathlib import Path

import numpy as np

from .esg import RISKS, RiskFactorPanel
from .nested import NavScrPaths


def provenance_line(seed, fingerprint):
    return f"# orsalab seed={seed} config={fingerprint}\n"


def _fmt(v):
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(v)


def _write_rows(path, header, rows, seed, fingerprint):
    buf = _io.StringIO()
    buf.write(provenance_line(seed, fingerprint))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    Path(path).write_text(buf.getvalue())


def _read_rows(path):
    with open(path, newline="") as fh:
        lines = [line for line in fh if not line.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader)
    return header, [r for r in reader if r]


def read_provenance(path):
    with open(path) as fh:
        first = fh.readline()
    if not first.startswith("# orsalab"):
        return {}
    return dict(kv.split("=", 1) for kv in first.split()[2:])


# -- NAV / SCR paths -------------------------------------------------------------

def write_nav_scr_paths(paths: NavScrPaths, path, seed, fingerprint):
    """Rows ``(n, t, shock_id, value)``; ``n = 0, t = 0`` is the initial node."""
    rows = []
    if np.isfinite(paths.nav0):
        rows.append((0, 0, "central", _fmt(paths.nav0)))
        for k, s in enumerate(paths.shock_ids):
            rows.append((0, 0, s, _fmt(paths.nav0_shocked[k])))
        if np.isfinite(paths.scr0):
            rows.append((0, 0, "scr", _fmt(paths.scr0)))
    N, T = paths.nav_hat.shape
    for n in range(N):
        for t in range(T):
            rows.append((n + 1, t + 1, "central", _fmt(paths.nav_hat[n, t])))
            for k, s in enumerate(paths.shock_ids):
                rows.append((n + 1, t + 1, s, _fmt(paths.nav_hat_shocked[n, t, k])))
            if paths.scr is not None:
                rows.append((n + 1, t + 1, "scr", _fmt(paths.scr[n, t])))
                rows.append((n + 1, t + 1, "solvency_ratio", _fmt(paths.solvency_ratio[n, t])))
            rows.append((n + 1, t + 1, "deflator", _fmt(paths.delta[n, t + 1])))
    _write_rows(path, ("n", "t", "shock_id", "value"), rows, seed, fingerprint)


def read_nav_scr_paths(path) -> NavScrPaths:
    _, rows = _read_rows(path)
    init = {r[2]: float(r[3]) for r in rows if r[0] == "0"}
    body = [r for r in rows if r[0] != "0"]
    N = max(int(r[0]) for r in body)
    T = max(int(r[1]) for r in body)
    labels = []
    for r in body:
        if r[2] not in labels:
            labels.append(r[2])
    special = {"central", "scr", "solvency_ratio", "deflator"}
    shocks = tuple(s for s in labels if s not in special)
    cols = {s: np.full((N, T), np.nan) for s in labels}
    for n, t, s, v in body:
        cols[s][int(n) - 1, int(t) - 1] = float(v)
    delta = np.ones((N, T + 1))
    delta[:, 1:] = cols["deflator"]
    shocked = np.stack([cols[s] for s in shocks], axis=2) if shocks else np.zeros((N, T, 0))
    prov = read_provenance(path)
    paths = NavScrPaths(cols["central"], shocked, shocks, delta,
                        cols.get("scr"), cols.get("solvency_ratio"),
                        seed=int(prov.get("seed", 0)))
    if "central" in init:
        paths.nav0 = init["central"]
        paths.nav0_shocked = np.array([init[s] for s in shocks])
        paths.scr0 = init.get("scr", float("nan"))
    return paths


# -- risk factors --------------------------------------------------------------

def write_panel(panel: RiskFactorPanel, path, fingerprint):
    rows = [(n, u, r, _fmt(v)) for n, u, r, v in panel.rows()]
    _write_rows(path, ("n", "u", "risk", "value"), rows, panel.seed, fingerprint)


def read_panel(path) -> RiskFactorPanel:
    _, rows = _read_rows(path)
    N = max(int(r[0]) for r in rows)
    T = max(int(r[1]) for r in rows)
    f = np.empty((N, T, 2))
    for n, u, risk, v in rows:
        f[int(n) - 1, int(u) - 1, RISKS.index(risk)] = float(v)
    return RiskFactorPanel(f, int(read_provenance(path).get("seed", 0)))


def write_retained_npv(npv, path, seed, fingerprint):
    N, T, P = npv.shape
    rows = [(n + 1, t + 1, p + 1, _fmt(npv[n, t, p]))
            for n in range(N) for t in range(T) for p in range(P)]
    _write_rows(path, ("n", "t", "p", "value"), rows, seed, fingerprint)


def read_retained_npv(path):
    _, rows = _read_rows(path)
    a = np.array([[int(r[0]), int(r[1]), int(r[2])] for r in rows])
    out = np.empty(tuple(a.max(axis=0)))
    for (n, t, p), r in zip(a, rows):
        out[n - 1, t - 1, p - 1] = float(r[3])
    return out


def write_qq(qq, path, seed, fingerprint):
    rows = [(_fmt(a), _fmt(b)) for a, b in np.asarray(qq)]
    _write_rows(path, ("reference_quantile", "proxy_quantile"), rows, seed, fingerprint)


# -- JSON ----------------------------------------------------------------------

def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(a) for k, a in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(a) for a in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return v


def write_json(doc, path, seed=None, fingerprint=None):
    out = dict(doc)
    if seed is not None:
        out = {"provenance": {"seed": seed, "config": fingerprint}, **out}
    Path(path).write_text(json.dumps(_jsonable(out), indent=2) + "\n")


def read_json(path):
    return json.loads(Path(path).read_text())
