"""Overall Solvency Needs under constraints SC0 - SC5.

Injected capital ``X`` is invested risk-free, so at date ``t`` it is worth
``X / delta_t`` and leaves every SCR unchanged.  Each constraint then has a
closed-form minimal injection on the empirical sample:

* SC1  K = max_t q_p(-delta_t NAV_t)
* SC2  K = q_p(max_t -delta_t NAV_t)
* SC3  K = max_t q_p(D_t),   D_t = delta_t (alpha SCR_t - NAV_t)
* SC4  K = q_p(max_t D_t)

``q_p`` is the lower empirical inverse CDF (order statistic ``ceil(p n)``).
K is never floored: a negative value is a surplus that could be withdrawn.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .config import ConfigError, ConstraintSpec


def empirical_quantile(x, q, axis=0):
    """Order statistic at 1-based rank ``ceil(q n)`` (rank 1 for q = 0)."""
    x = np.sort(np.asarray(x, dtype=float), axis=axis)
    n = x.shape[axis]
    if n == 0:
        raise ValueError("empty sample")
    k = min(max(int(math.ceil(q * n - 1e-12)), 1), n)
    return np.take(x, k - 1, axis=axis)


@dataclass
class RequiredCapitalResult:
    kind: str
    capital_K: float
    achieved_probability: float
    p: float
    alpha: float = 0.0
    binding_detail: dict = field(default_factory=dict)
    label: str = ""

    def to_dict(self):
        def clean(v):
            if isinstance(v, (np.floating, float)):
                v = float(v)
                return v if math.isfinite(v) else ("inf" if v > 0 else "-inf")
            if isinstance(v, np.integer):
                return int(v)
            if isinstance(v, np.ndarray):
                return [clean(a) for a in v.tolist()]
            if isinstance(v, (list, tuple)):
                return [clean(a) for a in v]
            if isinstance(v, dict):
                return {k: clean(a) for k, a in v.items()}
            return v
        return clean({"label": self.label, "kind": self.kind, "p": self.p, "alpha": self.alpha,
                      "capital_K": self.capital_K,
                      "achieved_probability": self.achieved_probability,
                      "binding_detail": self.binding_detail})


def _arrays(paths, delta=None, scr=None, horizon_T=None):
    """(nav, delta, scr) as (N, T) arrays; ``paths`` may be a NavScrPaths."""
    if hasattr(paths, "nav_hat"):
        nav = paths.nav_hat
        delta = paths.delta[:, 1:] if delta is None else delta
        scr = paths.scr if scr is None else scr
    else:
        nav = paths
    nav = np.atleast_2d(np.asarray(nav, dtype=float))
    delta = np.ones_like(nav) if delta is None else np.broadcast_to(
        np.asarray(delta, dtype=float), nav.shape)
    if scr is not None:
        scr = np.broadcast_to(np.asarray(scr, dtype=float), nav.shape)
    if horizon_T is not None:
        if horizon_T < 1 or horizon_T > nav.shape[1]:
            raise ConfigError(f"horizon_T={horizon_T} outside the simulated 1..{nav.shape[1]}")
        nav, delta = nav[:, :horizon_T], delta[:, :horizon_T]
        scr = None if scr is None else scr[:, :horizon_T]
    return nav, delta, scr


def deficiency(nav, delta, scr=None, alpha=0.0):
    """Pathwise minimal injection per date: delta_t (alpha SCR_t - NAV_t).

    Zero-SCR nodes satisfy any positive ratio threshold, so they get -inf.
    """
    d = delta * ((0.0 if scr is None else alpha * scr) - nav)
    if alpha > 0 and scr is not None:
        d = np.where(scr > 0, d, -np.inf)
    return d


def satisfaction(kind, nav, delta, scr=None, X=0.0, alpha=0.0):
    """Empirical probability that the constraint holds after injecting ``X``.

    Marginal kinds (SC1, SC3) report the worst date; joint kinds (SC2, SC4)
    the share of paths that hold at every date.
    """
    nav, delta, scr = _arrays(nav, delta, scr)
    if kind in ("SC1", "SC2"):
        alpha = 0.0
    ok = deficiency(nav, delta, scr, alpha) <= X
    if kind in ("SC1", "SC3"):
        return float(ok.mean(axis=0).min())
    return float(ok.all(axis=1).mean())


def _marginal(kind, d, p, alpha):
    q = empirical_quantile(d, p, axis=0)
    t = int(np.argmax(q))
    K = float(q[t])
    prob = float((d <= K).mean(axis=0).min())
    return RequiredCapitalResult(kind, K, prob, p, alpha,
                                 {"quantile_by_t": q, "binding_t": t + 1})


def _joint(kind, d, p, alpha):
    x = d.max(axis=1)
    K = float(empirical_quantile(x, p))
    prob = float((x <= K).mean())
    binding = np.flatnonzero(x > K)
    return RequiredCapitalResult(kind, K, prob, p, alpha,
                                 {"n_paths": int(len(x)),
                                  "paths_not_covered": (binding + 1).tolist(),
                                  "binding_t_per_path": (np.argmax(d, axis=1) + 1).tolist()})


def required_capital_sc1(paths, delta=None, p=0.995, horizon_T=None):
    nav, delta, _ = _arrays(paths, delta, None, horizon_T)
    return _marginal("SC1", deficiency(nav, delta), p, 0.0)


def required_capital_sc2(paths, delta=None, p=0.995, horizon_T=None):
    nav, delta, _ = _arrays(paths, delta, None, horizon_T)
    return _joint("SC2", deficiency(nav, delta), p, 0.0)


def required_capital_sc3(paths, delta=None, p=0.85, alpha=1.1, scr=None, horizon_T=None):
    nav, delta, scr = _arrays(paths, delta, scr, horizon_T)
    if scr is None:
        raise ConfigError("SC3 needs SCR paths")
    return _marginal("SC3", deficiency(nav, delta, scr, alpha), p, alpha)


def required_capital_sc4(paths, delta=None, p=0.85, alpha=1.1, scr=None, horizon_T=None):
    nav, delta, scr = _arrays(paths, delta, scr, horizon_T)
    if scr is None:
        raise ConfigError("SC4 needs SCR paths")
    return _joint("SC4", deficiency(nav, delta, scr, alpha), p, alpha)


def check_sc0(nav1_sample, delta1_sample, nav0):
    """One-year regulatory test.

    K is the minimal injection making ``P(NAV_1 >= 0) >= 99.5%``, i.e. the
    99.5% quantile of ``-delta_1 NAV_1``; SCR_0 = NAV_0 + K and the test
    holds iff NAV_0 >= SCR_0.
    """
    y = np.asarray(nav1_sample, dtype=float) * np.asarray(delta1_sample, dtype=float)
    if y.size == 0:
        raise ValueError("empty sample")
    K = float(empirical_quantile(-y.ravel(), 0.995))
    scr0 = float(nav0) + K
    return bool(nav0 >= scr0), scr0


@dataclass(frozen=True)
class DeterministicSet:
    """J stressed paths as flat rows (j, t, nav, scr, delta)."""

    j: np.ndarray
    t: np.ndarray
    nav: np.ndarray
    scr: np.ndarray
    delta: np.ndarray

    @classmethod
    def from_rows(cls, rows):
        a = np.asarray(rows, dtype=float).reshape(-1, 5)
        return cls(a[:, 0].astype(int), a[:, 1].astype(int), a[:, 2], a[:, 3], a[:, 4])

    @classmethod
    def read_csv(cls, path):
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(line for line in fh if not line.startswith("#"))]
        header = [h.strip() for h in rows[0]]
        cols = [header.index(c) for c in ("j", "t", "nav", "scr", "delta")]
        return cls.from_rows([[float(r[c]) for c in cols] for r in rows[1:] if r])


def evaluate_sc5(dset: DeterministicSet, alpha=1.0):
    """Direct evaluation over the stressed set; own funds are identified with NAV.

    Returns ``(result, pass_table)`` with pass rows ``(j, t, ratio, passes)``.
    """
    if len(dset.nav) == 0:
        raise ConfigError("SC5 needs at least one stressed path")
    d = dset.delta * (alpha * dset.scr - dset.nav)
    i = int(np.argmax(d))
    K = float(d[i])
    ratio = np.where(dset.scr > 0, dset.nav / np.where(dset.scr > 0, dset.scr, 1.0), np.inf)
    passes = (ratio >= alpha) | (dset.scr <= 0)
    table = [(int(a), int(b), float(r), bool(ok)) for a, b, r, ok in zip(dset.j, dset.t, ratio, passes)]
    res = RequiredCapitalResult("SC5", K, float(passes.mean()), 1.0, alpha,
                                {"binding_j": int(dset.j[i]), "binding_t": int(dset.t[i]),
                                 "n_cells": int(len(d))})
    return res, table


def solve(spec: ConstraintSpec, paths, nav1_sample=None, delta1_sample=None):
    """Dispatch a configured constraint against reference or proxy paths."""
    errs = spec.problems()
    if errs:
        raise ConfigError(errs)
    T = spec.horizon_T
    if spec.kind == "SC0":
        nav, delta, _ = _arrays(paths, horizon_T=1)
        y = nav[:, 0] * delta[:, 0]
        K = float(empirical_quantile(-y, 0.995))
        holds, scr0 = check_sc0(nav[:, 0], delta[:, 0], paths.nav0)
        res = RequiredCapitalResult("SC0", K, float((-y <= K).mean()),
                                    0.995, 0.0, {"scr0": scr0, "nav0": paths.nav0, "holds": holds})
    elif spec.kind == "SC1":
        res = required_capital_sc1(paths, p=spec.p, horizon_T=T)
    elif spec.kind == "SC2":
        res = required_capital_sc2(paths, p=spec.p, horizon_T=T)
    elif spec.kind == "SC3":
        res = required_capital_sc3(paths, p=spec.p, alpha=spec.alpha, horizon_T=T)
    elif spec.kind == "SC4":
        res = required_capital_sc4(paths, p=spec.p, alpha=spec.alpha, horizon_T=T)
    else:
        res, _ = evaluate_sc5(DeterministicSet.read_csv(spec.deterministic_set), spec.alpha)
    res.label = spec.label
    return res
