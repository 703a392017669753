"""Efficiency of Curve Fitting versus LSMC.

Notation: ``w_var`` is the residual variance of the true NAV on the
regressors, ``npv_var`` the mean conditional variance of a single NPV
around NAV.  With ``r = w_var / npv_var``::

    eta = sqrt((1 + r) / (1 + P r))
    N_lsmc = N_cf * P * (1 + r) / (1 + P r)  <=  N_cf * P
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import rng
from .config import TheoryConfig
from .regression import fit_ols


@dataclass(frozen=True)
class VarianceDecomposition:
    nav_var: float
    npv_var: float
    u_var: float
    v_var: float
    w_var: float
    explained_var: float
    P: int

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class EfficiencyReport:
    eta: float
    equivalent_lsmc_n: int
    cf_n: int
    P: int
    w_over_npv: float

    def to_dict(self):
        return asdict(self)


def _ratio(w_var, npv_var):
    if w_var < 0 or npv_var < 0:
        raise ValueError("variances must be >= 0")
    if npv_var == 0:
        return math.inf if w_var > 0 else 0.0
    return w_var / npv_var


def eta(P, w_var, npv_var):
    """Comparative efficiency coefficient, in (0, 1]."""
    if P < 1:
        raise ValueError("P must be >= 1")
    r = _ratio(w_var, npv_var)
    if math.isinf(r):
        return 1.0 / math.sqrt(P)
    return math.sqrt((1.0 + r) / (1.0 + P * r))


def equivalent_lsmc_n(cf_n, P, w_var, npv_var):
    """LSMC scenario count matching a (cf_n, P) Curve Fitting budget, rounded up."""
    if cf_n < 1 or P < 1:
        raise ValueError("cf_n and P must be >= 1")
    r = _ratio(w_var, npv_var)
    if math.isinf(r):
        return int(cf_n)
    exact = cf_n * P * (1.0 + r) / (1.0 + P * r)
    # guard against 200.0000000001-style round-off before the ceiling
    return int(math.ceil(round(exact, 9)))


def efficiency_report(cf_n, P, w_var, npv_var):
    return EfficiencyReport(eta(P, w_var, npv_var), equivalent_lsmc_n(cf_n, P, w_var, npv_var),
                            int(cf_n), int(P), _ratio(w_var, npv_var))


def estimate_decomposition(npv, design, P=None):
    """Variance decomposition from per-node NPV samples.

    Parameters
    ----------
    npv : (N, P) array
        Secondary NPVs of each node, P >= 2.
    design : (N, k) array
        Regressors of the nodes, intercept included.

    ``u_var`` is the residual variance of NAV-hat on the design, ``v_var``
    that of the first secondary's NPV; ``nav_var`` and ``w_var`` are
    corrected for the secondary noise.
    """
    npv = np.asarray(npv, dtype=float)
    if npv.ndim != 2:
        raise ValueError("npv must be (nodes, secondaries)")
    N, P_ = npv.shape
    P = P_ if P is None else int(P)
    if P < 2 or P_ < 2:
        raise ValueError("nav_var is not identifiable with P < 2 secondaries per node")
    X = np.asarray(design, dtype=float)
    npv_var = float(npv.var(axis=1, ddof=1).mean())
    nav_hat = npv.mean(axis=1)
    nav_var = float(nav_hat.var(ddof=1)) - npv_var / P_
    beta_u, diag_u = fit_ols(X, nav_hat)
    fitted = X @ beta_u
    explained = float(fitted.var(ddof=1))
    _, diag_v = fit_ols(X, npv[:, 0])
    w_var = nav_var - explained
    return VarianceDecomposition(max(nav_var, 0.0), npv_var, diag_u.residual_variance,
                                 diag_v.residual_variance, max(w_var, 0.0), explained, P_)


# -- Gaussian toy --------------------------------------------------------------

def toy_beta(n_terms=6):
    """Fixed coefficient vector of the synthetic model (intercept first)."""
    return np.array([5.0, 1.0, -0.5, 0.8, 0.3, -0.2, 0.6, -0.4][:n_terms])


def toy_sample(n, P, w_var, npv_var, seed, key=0, n_terms=6, beta=None):
    """Synthetic nodes: NAV = X beta + N(0, w_var), NPV = NAV + N(0, npv_var).

    Returns ``(X (n, k), nav (n,), npv (n, P))``.
    """
    beta = toy_beta(n_terms) if beta is None else np.asarray(beta, dtype=float)
    g = rng.stream(seed, rng.SYNTHETIC, key, P, n)
    k = len(beta)
    X = np.column_stack([np.ones(n), g.standard_normal((n, k - 1))])
    nav = X @ beta + math.sqrt(w_var) * g.standard_normal(n)
    npv = nav[:, None] + math.sqrt(npv_var) * g.standard_normal((n, P))
    return X, nav, npv


def toy_fit(method, n, P, w_var, npv_var, seed, key=0, n_terms=6, beta=None):
    """One calibration on the toy: CF averages P NPVs per node, LSMC uses one."""
    P_use = P if method == "CF" else 1
    X, _, npv = toy_sample(n, P_use, w_var, npv_var, seed, key, n_terms, beta)
    b, _ = fit_ols(X, npv.mean(axis=1))
    return b


def clt_variance_ratio(cf_n, P, lsmc_n, w_var, npv_var):
    """Var(LSMC mean estimator) / Var(CF mean estimator) for an intercept-only truth."""
    return ((w_var + npv_var) / lsmc_n) / ((w_var + npv_var / P) / cf_n)


def verify_speed_of_convergence(config: TheoryConfig | None = None, lsmc_n=None,
                                replications=None, seed=None, w_var=None, npv_var=None,
                                cf_n=None, P=None, n_terms=None):
    """Replicate CF and LSMC calibrations and compare beta-hat sampling variances.

    The LSMC budget defaults to the equivalent count, so the componentwise
    variance ratio should be close to 1.
    """
    cfg = config or TheoryConfig()
    R = cfg.replications if replications is None else int(replications)
    seed = cfg.seed if seed is None else seed
    cf_n = cfg.cf_n if cf_n is None else int(cf_n)
    P = cfg.P if P is None else int(P)
    k = cfg.n_terms if n_terms is None else int(n_terms)
    npv_var = cfg.npv_var if npv_var is None else float(npv_var)
    w_var = cfg.w_over_npv * npv_var if w_var is None else float(w_var)
    n_l = equivalent_lsmc_n(cf_n, P, w_var, npv_var) if lsmc_n is None else int(lsmc_n)
    b_cf = np.array([toy_fit("CF", cf_n, P, w_var, npv_var, seed, 2 * r, k) for r in range(R)])
    b_ls = np.array([toy_fit("LSMC", n_l, P, w_var, npv_var, seed, 2 * r + 1, k)
                     for r in range(R)])
    var_cf = b_cf.var(axis=0, ddof=1)
    var_ls = b_ls.var(axis=0, ddof=1)
    return {"replications": R, "cf_n": cf_n, "P": P, "lsmc_n": n_l,
            "w_var": w_var, "npv_var": npv_var, "eta": eta(P, w_var, npv_var),
            "beta_true": toy_beta(k).tolist(),
            "mean_cf": b_cf.mean(axis=0).tolist(), "mean_lsmc": b_ls.mean(axis=0).tolist(),
            "var_cf": var_cf.tolist(), "var_lsmc": var_ls.tolist(),
            "variance_ratio": (var_ls / var_cf).tolist()}
