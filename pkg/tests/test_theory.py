import math

import numpy as np
import pytest

import oracles
from orsalab.theory import (clt_variance_ratio, efficiency_report, equivalent_lsmc_n,
                            estimate_decomposition, eta, toy_beta, toy_fit, toy_sample)


def test_equivalent_budget_examples():
    assert equivalent_lsmc_n(100, 1, 0.7, 1.3) == 100
    assert equivalent_lsmc_n(100, 500, 0.0, 1.0) == 100 * 500
    assert equivalent_lsmc_n(100, 500, 1.0, 1.0) == 200
    assert oracles.equivalent_budget(100, 500, 1) == 200


def test_equivalent_budget_matches_exact_oracle():
    g = np.random.default_rng(0)
    for _ in range(200):
        cf_n, P = int(g.integers(1, 1000)), int(g.integers(1, 1000))
        num, den = int(g.integers(0, 50)), int(g.integers(1, 50))
        assert equivalent_lsmc_n(cf_n, P, num, den) == oracles.equivalent_budget(
            cf_n, P, f"{num}/{den}")


def test_eta_examples():
    assert eta(500, 0.0, 1.0) == 1.0
    assert eta(1, 0.3, 1.0) == 1.0
    # (1 + r) / (1 + 500 r) = 1/4  <=>  r = 3/496
    assert eta(500, 3.0, 496.0) == pytest.approx(0.5, abs=1e-15)
    assert eta(500, 3.0, 498.0) == pytest.approx(0.5, abs=2e-3)


def test_eta_monotone_in_P_and_ratio():
    vals = [eta(P, 0.2, 1.0) for P in (1, 2, 10, 100, 1000)]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    vals = [eta(50, w, 1.0) for w in (0.0, 0.01, 0.1, 1.0, 10.0)]
    assert all(b < a for a, b in zip(vals, vals[1:]))


def test_degenerate_inputs():
    assert eta(4, 1.0, 0.0) == 0.5
    assert equivalent_lsmc_n(10, 4, 1.0, 0.0) == 10
    with pytest.raises(ValueError):
        eta(0, 1.0, 1.0)
    with pytest.raises(ValueError):
        equivalent_lsmc_n(10, 4, -1.0, 1.0)
    rep = efficiency_report(100, 500, 1.0, 1.0)
    assert rep.equivalent_lsmc_n == 200 and rep.eta == pytest.approx(math.sqrt(2 / 501))


def test_decomposition_recovers_toy_variances():
    w, s2, P = 1.0, 2.0, 10
    X, _, npv = toy_sample(100_000, P, w, s2, seed=1)
    d = estimate_decomposition(npv, X)
    explained = float(np.sum(toy_beta()[1:] ** 2))
    assert d.npv_var == pytest.approx(s2, rel=0.05)
    assert d.w_var == pytest.approx(w, rel=0.05)
    assert d.nav_var == pytest.approx(explained + w, rel=0.05)
    assert d.explained_var == pytest.approx(explained, rel=0.05)
    assert d.u_var == pytest.approx(w + s2 / P, rel=0.05)
    assert d.v_var == pytest.approx(w + s2, rel=0.05)
    # total-variance identities for the CF and LSMC regressions
    assert d.nav_var + d.npv_var / P == pytest.approx(d.explained_var + d.u_var, rel=0.05)
    assert d.nav_var + d.npv_var == pytest.approx(d.explained_var + d.v_var, rel=0.05)
    assert 0.0 <= d.w_var <= d.nav_var


def test_deterministic_secondaries_give_equal_residuals():
    X, _, npv = toy_sample(2000, 5, 0.5, 0.0, seed=2)
    d = estimate_decomposition(npv, X)
    assert d.npv_var < 1e-25
    assert d.v_var == pytest.approx(d.u_var, rel=1e-12)


def test_single_secondary_rejected():
    X, _, npv = toy_sample(50, 1, 1.0, 1.0, seed=3)
    with pytest.raises(ValueError, match="P < 2"):
        estimate_decomposition(npv, X)


def _mean_estimates(method, n, P, w, s2, R, key0):
    return np.array([toy_fit(method, n, P, w, s2, seed=4, key=key0 + r, n_terms=1)[0]
                     for r in range(R)])


def test_intercept_only_variance_ratio_matches_clt():
    w, s2, cf_n, P, lsmc_n, R = 1.0, 4.0, 50, 10, 120, 2000
    cf = _mean_estimates("CF", cf_n, P, w, s2, R, 0)
    ls = _mean_estimates("LSMC", lsmc_n, P, w, s2, R, 10_000)
    ratio = ls.var(ddof=1) / cf.var(ddof=1)
    assert ratio == pytest.approx(clt_variance_ratio(cf_n, P, lsmc_n, w, s2), rel=0.10)


def test_doubling_lsmc_budget_halves_variance():
    R = 1500
    a = np.array([toy_fit("LSMC", 200, 1, 0.5, 1.0, seed=5, key=r) for r in range(R)])
    b = np.array([toy_fit("LSMC", 400, 1, 0.5, 1.0, seed=5, key=R + r) for r in range(R)])
    ratio = a.var(axis=0, ddof=1) / b.var(axis=0, ddof=1)
    assert np.all(np.abs(ratio / 2.0 - 1.0) < 0.2)
