import numpy as np
import pytest

import oracles
from orsalab.config import ConfigError, ConstraintSpec
from orsalab.nested import NavScrPaths
from orsalab.solvency import (DeterministicSet, check_sc0, empirical_quantile, evaluate_sc5,
                              required_capital_sc1, required_capital_sc2,
                              required_capital_sc3, required_capital_sc4, satisfaction, solve)

# 8 paths x 3 dates, hand-made
NAV8 = np.array([[4.0, 2.0, 1.0],
                 [3.0, -1.0, 2.0],
                 [-2.0, 0.5, 3.0],
                 [1.0, 1.0, -4.0],
                 [5.0, 6.0, 7.0],
                 [0.0, -3.0, -1.0],
                 [2.0, 2.0, 2.0],
                 [-1.0, 4.0, 0.5]])
DELTA8 = np.array([0.98, 0.95, 0.93])


def constant(v, N=5, T=3):
    return np.full((N, T), float(v))


def test_empirical_quantile_matches_oracle():
    g = np.random.default_rng(0)
    for n in (1, 7, 100, 1000):
        x = g.standard_normal(n)
        for q in (0.0, 0.005, 0.25, 0.5, 0.85, 0.995, 1.0):
            assert empirical_quantile(x, q) == oracles.lower_quantile(x, q)
    with pytest.raises(ValueError):
        empirical_quantile([], 0.5)


def test_sc0_examples():
    holds, scr0 = check_sc0(np.full(10, -10.0), np.ones(10), 50.0)
    assert scr0 == 60.0 and not holds
    holds, scr0 = check_sc0(np.linspace(0, 5, 10), np.ones(10), 3.0)
    assert scr0 <= 3.0 and holds


def test_sc0_on_a_mixture_matches_sort_oracle():
    g = np.random.default_rng(1)
    nav1 = np.where(g.uniform(size=1000) < 0.1, g.normal(-20, 5, 1000), g.normal(10, 3, 1000))
    d1 = g.uniform(0.96, 0.99, 1000)
    _, scr0 = check_sc0(nav1, d1, 7.0)
    assert scr0 == 7.0 + oracles.lower_quantile(-(nav1 * d1), 0.995)


def test_sc1_sc2_constant_examples():
    assert required_capital_sc1(constant(-5)).capital_K == 5.0
    assert required_capital_sc1(constant(5)).capital_K == -5.0
    assert required_capital_sc2(constant(0)).capital_K == 0.0
    # non-negative paths: no injection needed; the surplus is reported unfloored
    assert required_capital_sc2(constant(3)).capital_K == -3.0


def test_sc2_single_path_example():
    r = required_capital_sc2(np.array([[-2.0, -10.0]]), np.array([1.0, 0.5]), p=0.5)
    assert r.capital_K == 5.0


@pytest.mark.parametrize("p", [0.8, 0.9])
def test_sc1_hand_table(p):
    # the quantile formula -min_t q_{1-p}(delta_t NAV_t), evaluated directly; at these
    # p the lower and upper quantile conventions agree on n = 8
    y = NAV8 * DELTA8
    want = -min(oracles.lower_quantile(y[:, t], round(1 - p, 12)) for t in range(3))
    assert required_capital_sc1(NAV8, DELTA8, p=p).capital_K == pytest.approx(want, rel=1e-15)


def test_sc1_realises_the_argmin_below_the_quantile_formula():
    # p = 0.75: the quantile formula gives a feasible but non-minimal K
    y = NAV8 * DELTA8
    formula = -min(oracles.lower_quantile(y[:, t], 0.25) for t in range(3))
    r = required_capital_sc1(NAV8, DELTA8, p=0.75)
    assert r.capital_K <= formula
    assert satisfaction("SC1", NAV8, DELTA8, X=r.capital_K) >= 0.75
    assert satisfaction("SC1", NAV8, DELTA8, X=np.nextafter(r.capital_K, -np.inf)) < 0.75


def test_sc3_sc4_deterministic_example():
    nav, scr = constant(90, N=4), constant(100, N=4)
    for p in (0.5, 0.85, 0.99):
        assert required_capital_sc3(nav, 1.0, p, 1.1, scr).capital_K == pytest.approx(20.0)
        assert required_capital_sc4(nav, 1.0, p, 1.1, scr).capital_K == pytest.approx(20.0)


def test_alpha_zero_degenerates_to_nav_constraints():
    g = np.random.default_rng(2)
    nav = g.normal(1, 3, (50, 4))
    delta = np.cumprod(g.uniform(0.95, 1.0, (50, 4)), axis=1)
    scr = g.uniform(0.5, 3, (50, 4))
    assert (required_capital_sc3(nav, delta, 0.9, 0.0, scr).capital_K
            == required_capital_sc1(nav, delta, 0.9).capital_K)
    assert (required_capital_sc4(nav, delta, 0.9, 0.0, scr).capital_K
            == required_capital_sc2(nav, delta, 0.9).capital_K)


def _sample(seed, N=60, T=4):
    g = np.random.default_rng(seed)
    nav = g.normal(2, 4, (N, T))
    delta = np.cumprod(g.uniform(0.94, 1.0, (N, T)), axis=1)
    scr = np.where(g.uniform(size=(N, T)) < 0.05, 0.0, g.uniform(0.5, 4, (N, T)))
    return nav, delta, scr


def test_argmin_consistency_for_all_kinds():
    nav, delta, scr = _sample(3)
    for kind, fn, kw in (("SC1", required_capital_sc1, {}), ("SC2", required_capital_sc2, {}),
                         ("SC3", required_capital_sc3, {"alpha": 1.1, "scr": scr}),
                         ("SC4", required_capital_sc4, {"alpha": 1.1, "scr": scr})):
        r = fn(nav, delta, p=0.85, **kw)
        a = kw.get("alpha", 0.0)
        assert satisfaction(kind, nav, delta, scr, r.capital_K, a) >= 0.85
        assert r.achieved_probability >= 0.85
        assert satisfaction(kind, nav, delta, scr, np.nextafter(r.capital_K, -np.inf), a) < 0.85


def test_grid_oracle_small_sample():
    nav, delta, scr = _sample(4, N=40, T=3)
    step = 1e-4 * float(np.abs(nav).mean())
    lists = lambda a: a.tolist()
    for kind, fn, kw in (("SC1", required_capital_sc1, {}), ("SC2", required_capital_sc2, {}),
                         ("SC3", required_capital_sc3, {"alpha": 1.1, "scr": scr}),
                         ("SC4", required_capital_sc4, {"alpha": 1.1, "scr": scr})):
        K = fn(nav, delta, p=0.85, **kw).capital_K
        want = oracles.capital_grid_search(kind, lists(nav), lists(delta),
                                           lists(scr) if "scr" in kw else None,
                                           kw.get("alpha", 0.0), 0.85, step)
        assert want - step <= K <= want + 1e-12


def test_monotone_in_p_and_alpha():
    nav, delta, scr = _sample(5)
    for fn in (required_capital_sc1, required_capital_sc2):
        ks = [fn(nav, delta, p=p).capital_K for p in (0.5, 0.7, 0.85, 0.95, 0.995)]
        assert ks == sorted(ks)
    for fn in (required_capital_sc3, required_capital_sc4):
        ks = [fn(nav, delta, p=0.85, alpha=a, scr=scr).capital_K for a in (0.0, 0.5, 1.0, 1.5)]
        assert ks == sorted(ks)


def test_orderings_and_translation():
    nav, delta, scr = _sample(6)
    k1 = required_capital_sc1(nav, delta, 0.9).capital_K
    k2 = required_capital_sc2(nav, delta, 0.9).capital_K
    k3 = required_capital_sc3(nav, delta, 0.9, 1.1, scr).capital_K
    k4 = required_capital_sc4(nav, delta, 0.9, 1.1, scr).capital_K
    assert k2 >= k1 and k4 >= k3
    c = 2.5
    lifted = nav + c / delta
    assert required_capital_sc1(lifted, delta, 0.9).capital_K == pytest.approx(k1 - c, abs=1e-12)
    assert required_capital_sc2(lifted, delta, 0.9).capital_K == pytest.approx(k2 - c, abs=1e-12)
    assert required_capital_sc3(lifted, delta, 0.9, 1.1, scr).capital_K == pytest.approx(
        k3 - c, abs=1e-12)
    assert required_capital_sc4(lifted, delta, 0.9, 1.1, scr).capital_K == pytest.approx(
        k4 - c, abs=1e-12)


def test_ratio_kinds_need_scr():
    with pytest.raises(ConfigError):
        required_capital_sc3(constant(1), 1.0)
    with pytest.raises(ConfigError):
        required_capital_sc1(constant(1), horizon_T=4)


def test_sc5_examples(tmp_path):
    res, table = evaluate_sc5(DeterministicSet.from_rows([[1, 1, 80.0, 100.0, 1.0]]), alpha=1.0)
    assert res.capital_K == 20.0
    assert table == [(1, 1, 0.8, False)]
    rows = [[1, 1, 130.0, 100.0, 0.97], [1, 2, 150.0, 100.0, 0.94], [2, 1, 120.0, 0.0, 0.97]]
    res, table = evaluate_sc5(DeterministicSet.from_rows(rows), alpha=1.1)
    assert res.capital_K <= 0 and all(ok for *_, ok in table)
    with pytest.raises(ConfigError):
        evaluate_sc5(DeterministicSet.from_rows(np.zeros((0, 5))))


def test_sc5_matches_exhaustive_loop(tmp_path):
    g = np.random.default_rng(7)
    rows = [[j, t, g.normal(100, 30), g.uniform(20, 120), g.uniform(0.8, 1.0)]
            for j in range(1, 6) for t in range(1, 6)]
    for alpha in (0.0, 1.0, 1.3):
        res, _ = evaluate_sc5(DeterministicSet.from_rows(rows), alpha)
        assert res.capital_K == oracles.sc5_loop(rows, alpha)
    csv = tmp_path / "set.csv"
    csv.write_text("# stressed\nj,t,nav,scr,delta\n"
                   + "".join(f"{int(j)},{int(t)},{n!r},{s!r},{d!r}\n" for j, t, n, s, d in rows))
    spec = ConstraintSpec("SC5", alpha=1.3, deterministic_set=str(csv), name="stress")
    assert solve(spec, None).capital_K == oracles.sc5_loop(rows, 1.3)


def test_solve_dispatch_on_paths():
    N, T = 8, 3
    delta = np.column_stack([np.ones(N), np.tile(DELTA8, (N, 1))])
    paths = NavScrPaths(NAV8, np.zeros((N, T, 0)), (), delta,
                        scr=np.full((N, T), 2.0), nav0=3.0)
    r = solve(ConstraintSpec("SC1", p=0.9, horizon_T=2), paths)
    assert r.capital_K == required_capital_sc1(NAV8[:, :2], DELTA8[:2], 0.9).capital_K
    r0 = solve(ConstraintSpec("SC0"), paths)
    assert r0.binding_detail["scr0"] == 3.0 + r0.capital_K
    with pytest.raises(ConfigError):
        solve(ConstraintSpec("SC0", p=0.9), paths)
    doc = solve(ConstraintSpec("SC4", p=0.85, alpha=1.1, horizon_T=3), paths).to_dict()
    assert doc["kind"] == "SC4" and isinstance(doc["capital_K"], float)
