"""Acceptance criteria, one test per criterion.

Each test records a PASS/FAIL line through the ``acceptance`` fixture; the
lines are repeated in the terminal summary.  Criteria 9 and 10 share the
desk-scale pipeline run (N = 1000, P = 100, T = 5).
"""
import dataclasses
import math
from pathlib import Path

import numpy as np
import pytest

import oracles
from conftest import small_config
from orsalab.config import EsgConfig, TheoryConfig
from orsalab.esg import RateModel, generate_secondary, initial_node
from orsalab.nested import NestedEngine, estimate_nav, secondary_mean
from orsalab.pipeline import run_pipeline, stage_simulate
from orsalab.proxy import INTERCEPT, RegressorTerm, calibrate
from orsalab.regression import SingularDesignError, fit_ols
from orsalab.solvency import (DeterministicSet, evaluate_sc5, required_capital_sc1,
                              required_capital_sc2, required_capital_sc3, required_capital_sc4)
from orsalab.stdformula import CorrelationMatrix, aggregate_inter, aggregate_intra
from orsalab.stdformula import stand_alone_capital
from orsalab.theory import (equivalent_lsmc_n, estimate_decomposition, toy_beta, toy_sample,
                            verify_speed_of_convergence)


def test_criterion_1_aggregation(acceptance):
    half = CorrelationMatrix(("a", "b"), [[1, 0.5], [0.5, 1]])
    cases = [abs(stand_alone_capital(100, 80) - 20), stand_alone_capital(100, 120),
             abs(aggregate_intra([3, 4], CorrelationMatrix(("a", "b"), np.eye(2))) - 5),
             abs(aggregate_intra([7], CorrelationMatrix(("a",), [[1]])) - 7),
             abs(aggregate_intra([3, 4], half) - math.sqrt(37)),
             abs(aggregate_inter([3, 4], half) - math.sqrt(37))]
    hand = max(cases) <= 1e-12
    g = np.random.default_rng(1)
    bad = 0
    for _ in range(1000):
        k = int(g.integers(1, 6))
        B = np.abs(g.standard_normal((k, k + 1)))
        B /= np.linalg.norm(B, axis=1, keepdims=True)
        C = B @ B.T
        np.fill_diagonal(C, 1.0)
        m = CorrelationMatrix(tuple(range(k)), np.clip((C + C.T) / 2, 0, 1))
        c = g.uniform(0, 100, k)
        lam = g.uniform(0.01, 100)
        base = aggregate_intra(c, m)
        up = c.copy()
        up[g.integers(k)] += g.uniform(0, 10)
        bad += not math.isclose(aggregate_intra(lam * c, m), lam * base, rel_tol=1e-12)
        bad += aggregate_intra(up, m) < base * (1 - 1e-12)
    ok = hand and bad == 0
    acceptance(1, ok, f"hand cases max err {max(cases):.1e}; 1000 random instances, "
                      f"{bad} violations")
    assert ok


def test_criterion_2_ols(acceptance):
    g = np.random.default_rng(2)
    s, z = g.standard_normal((2, 1000))
    X = np.column_stack([np.ones(1000), s, z, s * s, s * z, z ** 3])
    truth = toy_beta()
    beta, _ = fit_ols(X, X @ truth)
    exact = float(np.abs(beta - truth).max())
    y = X @ truth + g.standard_normal(1000)
    b, _ = fit_ols(X, y)
    r = y - X @ b
    ortho = max(abs(col @ r) / (np.linalg.norm(col) * np.linalg.norm(r)) for col in X.T)
    try:
        fit_ols(np.column_stack([X, s + 2 * z]), y,
                names=["1", "s", "z", "s^2", "s*z", "z^3", "s+2z"])
        named = False
    except SingularDesignError as e:
        named = len(e.columns) == 1 and e.columns[0] in ("s", "z", "s+2z")
    ok = exact <= 1e-10 and ortho < 1e-8 and named
    acceptance(2, ok, f"exact-fit err {exact:.1e}; orthogonality {ortho:.1e}; "
                      f"singular design named: {named}")
    assert ok


TERMS = (INTERCEPT, RegressorTerm.of((1, 0, 1)), RegressorTerm.of((1, 1, 1)),
         RegressorTerm.of((1, 0, 2)), RegressorTerm.of((1, 0, 1), (1, 1, 1)),
         RegressorTerm.of((1, 1, 2)))


def _synthetic(n, P, seed, w_var=0.1, npv_var=1.0):
    """Polynomial truth in one period's factors; targets are means of P NPVs."""
    g = np.random.default_rng([seed, n, P])
    f = g.standard_normal((n, 1, 2))
    X = np.column_stack([t.values(f) for t in TERMS])
    nav = X @ toy_beta() + math.sqrt(w_var) * g.standard_normal(n)
    y = nav + math.sqrt(npv_var / P) * g.standard_normal(n)
    return f, y


def test_criterion_3_cf_lsmc_equivalence(acceptance):
    truth = toy_beta()
    hits = {"CF": 0, "LSMC": 0}
    for seed in range(50):
        for method, n, P in (("CF", 500, 100), ("LSMC", 50_000, 1)):
            f, y = _synthetic(n, P, seed)
            m = calibrate(method, 1, "central", f, y, reuse_terms=TERMS)
            se = np.array(m.diagnostics["standard_errors"])
            hits[method] += bool(np.all(np.abs(m.coefficients - truth) <= 3 * se))
    ok = min(hits.values()) >= 45
    acceptance(3, ok, f"within 3 SE componentwise: CF {hits['CF']}/50, "
                      f"LSMC {hits['LSMC']}/50 seeds (need 45)")
    assert ok


def test_criterion_4_residual_variance_identity(acceptance):
    P = 10
    X, _, npv = toy_sample(100_000, P, 0.1, 1.0, seed=4)
    d = estimate_decomposition(npv, X)
    want = d.u_var + (P - 1) / P * d.npv_var
    rel = abs(d.v_var - want) / want
    ok = rel <= 0.05
    acceptance(4, ok, f"v_var {d.v_var:.4f} vs u_var + 0.9 npv_var {want:.4f} "
                      f"(rel {rel:.2%})")
    assert ok


def test_criterion_5_equivalent_budget(acceptance):
    g = np.random.default_rng(5)
    endpoints = (equivalent_lsmc_n(123, 1, 0.4, 1.0) == 123
                 and equivalent_lsmc_n(123, 77, 0.0, 1.0) == 123 * 77)
    viol = 0
    for _ in range(10_000):
        cf_n, P = int(g.integers(1, 5000)), int(g.integers(1, 5000))
        w, s2 = g.exponential(1.0) * g.choice([0.0, 1.0], p=[0.05, 0.95]), g.exponential(1.0)
        viol += equivalent_lsmc_n(cf_n, P, w, s2) > cf_n * P
    worked = equivalent_lsmc_n(100, 500, 1.0, 1.0)
    ok = endpoints and viol == 0 and worked == 200 == oracles.equivalent_budget(100, 500, 1)
    acceptance(5, ok, f"endpoints {endpoints}; bound violations {viol}/10000; "
                      f"(100, 500, 1) -> {worked}")
    assert ok


def test_criterion_6_speed_of_convergence(acceptance):
    rep = verify_speed_of_convergence(TheoryConfig(), replications=500)
    ratio = np.array(rep["variance_ratio"])
    ok = bool(np.all((ratio >= 0.7) & (ratio <= 1.4)))
    acceptance(6, ok, f"CF {rep['cf_n']}x{rep['P']} vs LSMC {rep['lsmc_n']}, R = 500: "
                      f"variance ratios {np.round(ratio, 3).tolist()}")
    assert ok


def test_criterion_7_nested_statistics(acceptance):
    # risk-neutral martingale at P = 50 000
    esg = EsgConfig()
    model = RateModel(esg, 40)
    sec = generate_secondary(esg, initial_node(esg, 1, 40), None, 50_000, 20, seed=7,
                             model=model)
    zs = []
    for u in (1, 5, 10, 20):
        x = sec.discount[:, u] * sec.stock[:, u]
        zs.append(abs(x.mean() - 1.0) / (x.std(ddof=1) / math.sqrt(len(x))))
    mart = max(zs) < 3
    # NAV-hat variance against the 1/P law, 200 replications per P
    cfg = small_config(N=1, H=20, shocks=())
    est = {10: [], 160: []}
    for r in range(200):
        c = dataclasses.replace(cfg, nested=dataclasses.replace(cfg.nested, seed=5000 + r))
        for P in est:
            est[P].append(estimate_nav(c, 1, 0, P=P))
    scale = (np.var(est[10], ddof=1) / np.var(est[160], ddof=1)) / 16.0
    law = 0.5 <= scale <= 2.0
    # NAV-hat is the mean of single-secondary NPVs, bit for bit
    cfg = small_config(N=3, P=20, T=2)
    eng = NestedEngine(cfg)
    ident = True
    for t in (0, 1, 2):
        singles = np.array([[eng.node_npvs([i], t, P=20)[0, p] for p in range(20)]
                            for i in range(3)])
        ident &= bool(np.array_equal(eng.estimate_nav(np.arange(3), t),
                                     secondary_mean(singles, axis=1)))
    ok = mart and law and ident
    acceptance(7, ok, f"martingale max |z| {max(zs):.2f}; var(P=10)/var(P=160) / 16 = "
                      f"{scale:.2f}; decomposition identity exact: {ident}")
    assert ok


def _sample(g, N=200, T=5):
    nav = g.normal(g.uniform(-1, 4), g.uniform(0.5, 4), (N, T))
    delta = np.cumprod(g.uniform(0.95, 1.0, (N, T)), axis=1)
    scr = np.where(g.uniform(size=(N, T)) < 0.03, 0.0, g.uniform(0.5, 4, (N, T)))
    return nav, delta, scr


def test_criterion_8_required_capital_oracles(acceptance):
    g = np.random.default_rng(8)
    nav, delta, scr = _sample(g)
    step = 1e-4 * float(np.abs(nav).mean())
    grid_err = 0.0
    for kind, fn, kw in (("SC1", required_capital_sc1, {}), ("SC2", required_capital_sc2, {}),
                         ("SC3", required_capital_sc3, {"alpha": 1.1, "scr": scr}),
                         ("SC4", required_capital_sc4, {"alpha": 1.1, "scr": scr})):
        for p in (0.85, 0.995):
            K = fn(nav, delta, p=p, **kw).capital_K
            want = oracles.capital_grid_search(kind, nav.tolist(), delta.tolist(),
                                               scr.tolist() if kw else None,
                                               kw.get("alpha", 0.0), p, step)
            # the grid answer is the first grid point at or above the exact K
            grid_err = max(grid_err, (want - K) / step if want >= K else np.inf)
    fails = 0
    for _ in range(100):
        nav, delta, scr = _sample(g, N=int(g.integers(20, 200)), T=int(g.integers(1, 6)))
        p, a, c = g.uniform(0.5, 0.995), g.uniform(0, 2), g.normal(0, 10)
        k = [required_capital_sc1(nav, delta, p).capital_K,
             required_capital_sc2(nav, delta, p).capital_K,
             required_capital_sc3(nav, delta, p, a, scr).capital_K,
             required_capital_sc4(nav, delta, p, a, scr).capital_K]
        fails += k[1] < k[0] or k[3] < k[2]
        lifted = nav + c / delta
        k2 = [required_capital_sc1(lifted, delta, p).capital_K,
              required_capital_sc2(lifted, delta, p).capital_K,
              required_capital_sc3(lifted, delta, p, a, scr).capital_K,
              required_capital_sc4(lifted, delta, p, a, scr).capital_K]
        fails += not all(math.isclose(b, x - c, abs_tol=1e-9) for x, b in zip(k, k2))
    rows = [[j, t, g.normal(100, 30), g.uniform(10, 150), g.uniform(0.8, 1)]
            for j in range(1, 11) for t in range(1, 6)]
    sc5 = all(evaluate_sc5(DeterministicSet.from_rows(rows), a)[0].capital_K
              == oracles.sc5_loop(rows, a) for a in (0.0, 1.0, 1.1, 1.5))
    ok = grid_err <= 1.0 and fails == 0 and sc5
    acceptance(8, ok, f"grid oracle within {grid_err:.2f} steps; ordering/translation "
                      f"failures {fails}/100; SC5 exact: {sc5}")
    assert ok


# -- desk scale ----------------------------------------------------------------

def _nav_rel(report, method):
    return np.array([row["nav"] for row in report["validation"][method]])


@pytest.mark.slow
def test_criterion_9a_lsmc_nav_quantiles(desk_run, acceptance):
    _, report = desk_run
    rel = _nav_rel(report, "LSMC")
    ok = bool(np.all(np.abs(rel) <= 0.10))
    acceptance("9a", ok, f"LSMC NAV quantile rel. diff. (25/50/75%, t = 1..5) within "
                         f"[{rel.min():+.1%}, {rel.max():+.1%}]; bar 10%")
    assert ok


@pytest.mark.slow
def test_criterion_9b_capital(desk_run, acceptance):
    _, report = desk_run
    parts, ok = [], True
    for label in ("SC3_specimen", "SC4_specimen"):
        row = report["capital"][label]
        for m in ("CF", "LSMC"):
            rd = row[f"{m}_relative_difference"]
            ok &= abs(rd) <= 0.15
            parts.append(f"{label[:3]} {m} {rd:+.1%}")
    acceptance("9b", ok, "capital rel. diff. " + ", ".join(parts) + "; bar 15%")
    assert ok


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason=(
    "Extreme-norm CF calibration on 100 of 1000 scenarios extrapolates a concave NAV "
    "surface inward from a norm shell; the fitted centre sits 9-13% below the nested "
    "median at t >= 2. The sub-check is reported as failing rather than retuned."))
def test_criterion_9c_cf_nav_quantiles(desk_run, acceptance):
    _, report = desk_run
    rel = _nav_rel(report, "CF")
    ok = bool(np.all(np.abs(rel) <= 0.10))
    worst = np.unravel_index(np.argmax(np.abs(rel)), rel.shape)
    acceptance("9c", ok, f"CF (extreme norm) NAV quantile rel. diff. within "
                         f"[{rel.min():+.1%}, {rel.max():+.1%}], worst at t = {worst[0] + 1}, "
                         f"q = {(0.25, 0.5, 0.75)[worst[1]]}; bar 10%")
    assert ok


def _files(d):
    d = Path(d)
    return {p.relative_to(d).as_posix(): p.read_bytes() for p in sorted(d.rglob("*"))
            if p.is_file() and p.name != "timing.json"}


@pytest.mark.slow
def test_criterion_10_determinism(desk_run, desk_config, tmp_path, acceptance):
    out, _ = desk_run
    run_pipeline(desk_config, tmp_path / "again", workers=1)
    a, b = _files(out), _files(tmp_path / "again")
    same = a == b
    differing = sorted(k for k in set(a) | set(b) if a.get(k) != b.get(k))
    # any worker count: the nested stage at 2 workers reproduces the persisted paths
    stage_simulate(desk_config, tmp_path / "w2", workers=2)
    par = all((tmp_path / "w2" / f).read_bytes() == (out / f).read_bytes()
              for f in ("nav_scr_paths.csv", "risk_factors.csv"))
    ok = same and par
    acceptance(10, ok, f"rerun byte-identical on {len(a)} artifacts: {same}"
                       + (f" (differ: {differing[:3]})" if differing else "")
                       + f"; workers=2 nested artifacts identical: {par}")
    assert ok
