"""Polynomial NAV proxies: Curve Fitting and LSMC.

Both methods regress on the same basis of elementary risk factors (stock
and rate innovations per year).  Curve Fitting targets nested NAV-hat on a
few scenarios; LSMC targets single-secondary NPVs on many.  Shocked proxies
refit the central term set.  A lag regressor carries the central proxy at
``t - 1``, chained on fitted values.
"""
from __future__ import annotations

import itertools
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree
from scipy.stats import norm, qmc

from . import rng
from .config import ConfigError, ProxyConfig
from .regression import fit_ols, stepwise_select
from .solvency import empirical_quantile

RISK_LABELS = ("s", "z")  # stock, rates


class ProxyError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class RegressorTerm:
    """Monomial in the risk factors, optionally times the lagged proxy.

    ``monomial`` holds ``(u, risk, exponent)`` triples sorted by ``(u, risk)``;
    ``risk`` is 0 for stock and 1 for rates.  The empty monomial without lag
    is the intercept.
    """

    monomial: tuple = ()
    lag: bool = False

    @classmethod
    def of(cls, *factors, lag=False):
        """``RegressorTerm.of((5, 0, 2), (3, 1, 1))`` is s5^2 * z3."""
        acc = {}
        for u, r, e in factors:
            acc[(int(u), int(r))] = acc.get((int(u), int(r)), 0) + int(e)
        return cls(tuple((u, r, e) for (u, r), e in sorted(acc.items()) if e > 0), bool(lag))

    @property
    def degree(self):
        return sum(e for _, _, e in self.monomial) + int(self.lag)

    @property
    def is_intercept(self):
        return not self.monomial and not self.lag

    @property
    def label(self):
        if self.is_intercept:
            return "1"
        parts = ["lag"] if self.lag else []
        for u, r, e in self.monomial:
            parts.append(f"{RISK_LABELS[r]}{u}" + (f"^{e}" if e > 1 else ""))
        return "*".join(parts)

    @property
    def sort_key(self):
        # lower degree first, then the current period's factors, then label
        return (self.degree, -max((u for u, _, _ in self.monomial), default=0), self.label)

    def values(self, factors, prior=None):
        """Column for scenarios in ``factors`` (shape ``(n, T, 2)``)."""
        col = np.ones(factors.shape[0])
        for u, r, e in self.monomial:
            col = col * factors[:, u - 1, r] ** e
        if self.lag:
            if prior is None:
                raise ProxyError(f"term {self.label} needs the lagged proxy values")
            col = col * prior
        return col

    def to_dict(self):
        return {"monomial": {f"{RISK_LABELS[r]}{u}": e for u, r, e in self.monomial},
                "lag_proxy": self.lag}

    @classmethod
    def from_dict(cls, d):
        facs = [(int(k[1:]), RISK_LABELS.index(k[0]), int(e)) for k, e in d["monomial"].items()]
        return cls.of(*facs, lag=bool(d.get("lag_proxy", False)))


INTERCEPT = RegressorTerm()


def candidate_terms(t, max_degree=3, use_lag=True):
    """Candidate pool at date ``t`` (intercept excluded)."""
    out = []
    # current-period monomials up to max_degree
    for d in range(1, max_degree + 1):
        for a in range(d, -1, -1):
            out.append(RegressorTerm.of((t, 0, a), (t, 1, d - a)))
    # earlier periods: first order, and times a current first-order factor
    if max_degree >= 1:
        for u in range(1, t):
            for r in (0, 1):
                out.append(RegressorTerm.of((u, r, 1)))
    if max_degree >= 2:
        for u in range(1, t):
            for r, rc in itertools.product((0, 1), (0, 1)):
                out.append(RegressorTerm.of((t, rc, 1), (u, r, 1)))
    if use_lag and t >= 2:
        out.append(RegressorTerm(lag=True))
        if max_degree >= 2:
            for r in (0, 1):
                out.append(RegressorTerm.of((t, r, 1), lag=True))
    return sorted(set(out), key=lambda c: c.sort_key)


def design_matrix(terms, factors, prior=None):
    return np.column_stack([term.values(factors, prior) for term in terms])


@dataclass
class ProxyModel:
    date_t: int
    shock_id: str
    method: str
    terms: tuple
    coefficients: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        if len(self.terms) != len(self.coefficients):
            raise ValueError("terms and coefficients differ in length")

    @property
    def uses_lag(self):
        return any(t.lag for t in self.terms)

    def evaluate(self, factors, prior=None):
        factors = getattr(factors, "factors", factors)
        if factors.ndim != 3 or factors.shape[1] < self.date_t:
            raise ValueError(f"factor panel of shape {factors.shape} does not reach t={self.date_t}")
        if self.uses_lag:
            if prior is None:
                raise ProxyError(f"{self.method} proxy at t={self.date_t} needs prior values")
            prior = np.asarray(prior, dtype=float)
            if prior.shape != (factors.shape[0],):
                raise ValueError(f"prior has shape {prior.shape}, expected ({factors.shape[0]},)")
        return design_matrix(self.terms, factors, prior) @ self.coefficients

    def to_dict(self):
        return {"date_t": self.date_t, "shock_id": self.shock_id, "method": self.method,
                "terms": [t.to_dict() for t in self.terms],
                "term_labels": [t.label for t in self.terms],
                "coefficients": [float(c) for c in self.coefficients],
                "diagnostics": self.diagnostics}

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["date_t"]), d["shock_id"], d["method"],
                   tuple(RegressorTerm.from_dict(t) for t in d["terms"]),
                   np.array(d["coefficients"], dtype=float), d.get("diagnostics", {}))

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


# -- calibration scenarios ---------------------------------------------------

@dataclass(frozen=True)
class CalibrationSet:
    method: str
    indices: np.ndarray
    targets: np.ndarray | None = None


def scenario_norms(panel, t):
    if t < 1:
        raise ValueError("t must be >= 1")
    factors = getattr(panel, "factors", panel)
    flat = factors[:, :t, :].reshape(factors.shape[0], -1)
    return np.sqrt((flat * flat).sum(axis=1))


def scenario_norm(panel, n, t):
    """Euclidean norm of scenario ``n`` (0-based row) over periods ``1..t``."""
    factors = getattr(panel, "factors", panel)
    return float(scenario_norms(factors[[n]], t)[0])


def select_calibration(panel, n_prime, method, t, seed=0):
    factors = getattr(panel, "factors", panel)
    N = factors.shape[0]
    if n_prime > N:
        raise ConfigError(f"N' = {n_prime} exceeds the {N} available scenarios")
    if n_prime < 1:
        raise ConfigError("N' must be >= 1")
    if method == "extreme_norm":
        norms = scenario_norms(factors, t)
        order = np.lexsort((np.arange(N), -norms))
        return CalibrationSet(method, np.sort(order[:n_prime]))
    if method == "sobol_grid":
        return CalibrationSet(method, _sobol_nearest(factors, n_prime, t, seed))
    raise ConfigError(f"unknown selection method {method!r}")


def _sobol_nearest(factors, n_prime, t, seed):
    X = factors[:, :t, :].reshape(factors.shape[0], -1)
    N, d = X.shape
    sampler = qmc.Sobol(d, scramble=True, seed=rng.stream(seed, rng.SOBOL, t))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # non power-of-two sample sizes
        u = sampler.random(n_prime)
    targets = norm.ppf(np.clip(u, 1e-12, 1 - 1e-12))
    tree = cKDTree(X)
    taken = np.zeros(N, dtype=bool)
    chosen = []
    for pt in targets:
        k = min(N, 16)
        while True:
            _, cand = tree.query(pt, k=k)
            cand = np.atleast_1d(cand)
            free = cand[~taken[cand]]
            if free.size:
                j = int(free[0])
                break
            if k == N:
                raise RuntimeError("no free scenario left")
            k = min(N, 4 * k)
        taken[j] = True
        chosen.append(j)
    return np.sort(np.array(chosen, dtype=int))


# -- calibration ---------------------------------------------------------------

def calibrate(method, t, shock_id, factors, targets, reuse_terms=None, prior=None,
              config: ProxyConfig | None = None):
    """Fit one proxy on calibration scenarios.

    ``factors`` (n, T, 2) and ``targets`` (n,) are the calibration data:
    NAV-hat for CF, single-secondary NPVs for LSMC.  ``prior`` holds the
    central (t - 1) proxy on the same scenarios, required whenever a lag
    term is a candidate or reused.
    """
    cfg = config or ProxyConfig()
    factors = getattr(factors, "factors", factors)
    y = np.asarray(targets, dtype=float)
    if factors.shape[0] != y.shape[0]:
        raise ValueError("factors and targets differ in length")
    if reuse_terms is not None:
        terms = tuple(reuse_terms)
        if INTERCEPT not in terms:
            terms = (INTERCEPT,) + terms
    else:
        cands = candidate_terms(t, cfg.max_degree, cfg.use_lag)
        if any(c.lag for c in cands) and prior is None:
            raise ProxyError(f"lag candidates at t={t} need the calibrated t-1 proxy")
        chosen = stepwise_select(cands, lambda ts: design_matrix(ts, factors, prior), y,
                                 cfg.significance, cfg.max_terms,
                                 sort_key=lambda c: c.sort_key)
        terms = (INTERCEPT,) + tuple(chosen)
    if any(term.lag for term in terms) and prior is None:
        raise ProxyError(f"proxy at t={t} reuses a lag term but no t-1 proxy was given")
    X = design_matrix(terms, factors, prior)
    beta, diag = fit_ols(X, y, names=[term.label for term in terms])
    return ProxyModel(int(t), shock_id, method, terms, beta, diag.to_dict())


@dataclass
class ProxySet:
    """All (t, shock) proxies of one method; central ones chain through ``lag``."""

    method: str
    horizon: int
    shock_ids: tuple
    models: dict

    def model(self, t, shock_id="central"):
        return self.models[(t, shock_id)]

    def evaluate(self, factors):
        """``(central (n, T), shocked (n, T, S))`` on a factor panel."""
        factors = getattr(factors, "factors", factors)
        n = factors.shape[0]
        central = np.empty((n, self.horizon))
        shocked = np.empty((n, self.horizon, len(self.shock_ids)))
        prior = None
        for t in range(1, self.horizon + 1):
            central[:, t - 1] = self.models[(t, "central")].evaluate(factors, prior)
            for k, s in enumerate(self.shock_ids):
                shocked[:, t - 1, k] = self.models[(t, s)].evaluate(factors, prior)
            prior = central[:, t - 1]
        return central, shocked

    def save(self, directory):
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        for (t, s), m in sorted(self.models.items()):
            m.save(d / f"{self.method}_t{t}_{s}.json")

    @classmethod
    def load(cls, directory, method):
        models = {}
        for f in sorted(Path(directory).glob(f"{method}_t*_*.json")):
            m = ProxyModel.load(f)
            models[(m.date_t, m.shock_id)] = m
        if not models:
            raise FileNotFoundError(f"no {method} proxies in {directory}")
        T = max(t for t, _ in models)
        shocks = tuple(sorted({s for _, s in models if s != "central"}))
        return cls(method, T, shocks, models)


def fit_proxy_set(method, factors, targets, shock_ids, config: ProxyConfig | None = None,
                  selection=None, n_prime=None, seed=0):
    """Calibrate central and shocked proxies for t = 1..T.

    ``targets[n, t - 1, 0]`` is the central target and ``targets[..., k + 1]``
    the target under ``shock_ids[k]``; ``n_prime`` scenarios are picked per
    ``t`` by ``selection`` (all of them when ``n_prime`` is None).
    """
    cfg = config or ProxyConfig()
    factors = getattr(factors, "factors", factors)
    N, T, _ = factors.shape
    models = {}
    prior_all = None
    calib = {}
    for t in range(1, T + 1):
        if n_prime is None or n_prime >= N:
            idx = np.arange(N)
        else:
            idx = select_calibration(factors, n_prime, selection, t, seed).indices
        calib[t] = idx
        prior = None if prior_all is None else prior_all[idx]
        use_prior = prior if cfg.use_lag else None
        central = calibrate(method, t, "central", factors[idx], targets[idx, t - 1, 0],
                            prior=use_prior, config=cfg)
        models[(t, "central")] = central
        for k, s in enumerate(shock_ids):
            reuse = central.terms if cfg.reuse_central_terms else None
            models[(t, s)] = calibrate(method, t, s, factors[idx], targets[idx, t - 1, k + 1],
                                       reuse_terms=reuse, prior=use_prior, config=cfg)
        prior_all = central.evaluate(factors, prior_all)
    return ProxySet(method, T, tuple(shock_ids), models), calib


# -- validation ----------------------------------------------------------------

QUANTILES = (0.25, 0.5, 0.75)


def validate(proxy_values, reference_values, quantiles=QUANTILES):
    """Quantile relative differences and QQ pairs of proxy vs reference."""
    p = np.asarray(proxy_values, dtype=float).ravel()
    r = np.asarray(reference_values, dtype=float).ravel()
    if p.shape != r.shape:
        raise ValueError("proxy and reference samples differ in size")
    qr = np.array([empirical_quantile(r, q) for q in quantiles])
    qp = np.array([empirical_quantile(p, q) for q in quantiles])
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(qr != 0, (qp - qr) / np.abs(qr), np.where(qp == qr, 0.0, np.inf))
    return {"quantiles": list(quantiles), "reference": qr.tolist(), "proxy": qp.tolist(),
            "relative_difference": rel.tolist(),
            "qq": np.column_stack([np.sort(r), np.sort(p)])}
