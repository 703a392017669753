"""Multi-year nested simulations.

For every primary scenario ``n`` and date ``t`` the central and shocked NAV
are estimated by averaging the NPV of margins over ``P`` risk-neutral
secondary paths spliced onto the primary path at ``t``.  Work is cut into
fixed scenario blocks so the numbers never depend on the worker count.
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels, rng
from .alm import project_block
from .config import ConfigError, NestedConfig, PortfolioConfig, RunConfig, ShockSpec
from .esg import (RateModel, RiskFactorPanel, apply_shock, diffuse_primary, diffuse_secondary,
                  draw_primary_factors, initial_node, node_at, secondary_innovations)


class NumericalError(RuntimeError):
    """Non-finite output or singular computation, with node context."""


@dataclass
class NavScrPaths:
    """Joint NAV / SCR sample paths; arrays are indexed ``[n - 1, t - 1]``.

    ``delta[:, t]`` is the deflator at ``t`` (column 0 is 1).  The initial
    node (t = 0) is kept separately in ``nav0`` / ``nav0_shocked`` / ``scr0``.
    """

    nav_hat: np.ndarray
    nav_hat_shocked: np.ndarray
    shock_ids: tuple
    delta: np.ndarray
    scr: np.ndarray | None = None
    solvency_ratio: np.ndarray | None = None
    nav0: float = float("nan")
    nav0_shocked: np.ndarray = field(default_factory=lambda: np.zeros(0))
    scr0: float = float("nan")
    seed: int = 0
    npv: np.ndarray | None = None  # retained central NPVs, (N, T, P)

    @property
    def n_primary(self):
        return self.nav_hat.shape[0]

    @property
    def horizon(self):
        return self.nav_hat.shape[1]

    def shocked(self, shock_id):
        try:
            return self.nav_hat_shocked[:, :, self.shock_ids.index(shock_id)]
        except ValueError:
            raise KeyError(f"no shocked NAV for {shock_id!r}") from None

    def deflated_nav(self):
        return self.delta[:, 1:] * self.nav_hat

    def take(self, idx):
        idx = np.asarray(idx)
        pick = lambda a: None if a is None else a[idx]
        return NavScrPaths(self.nav_hat[idx], self.nav_hat_shocked[idx], self.shock_ids,
                           self.delta[idx], pick(self.scr), pick(self.solvency_ratio),
                           self.nav0, self.nav0_shocked, self.scr0, self.seed, pick(self.npv))


def secondary_mean(npv, axis=-1):
    """Mean over secondaries, accumulated around the first draw.

    Identical draws (a deterministic economy) average to that draw exactly.
    """
    npv = np.asarray(npv, dtype=float)
    first = np.take(npv, [0], axis=axis)
    return np.squeeze(first, axis=axis) + (npv - first).mean(axis=axis)


def max_maturity_for(config: RunConfig):
    n = config.nested
    return n.horizon_T + n.liability_horizon_H + config.portfolio.bond_ladder_maturity + 2


class NestedEngine:
    """Valuation machinery for a block of primary scenarios.

    Parameters
    ----------
    config : RunConfig
    first, count : int
        Scenario block ``first .. first + count - 1`` (0-based).
    purpose : int
        Primary stream purpose; LSMC pools use their own.
    """

    def __init__(self, config: RunConfig, first=0, count=None, purpose=rng.PRIMARY,
                 secondary_purpose=rng.SECONDARY):
        self.config = config
        self.esg = config.esg
        self.portfolio: PortfolioConfig = config.portfolio
        self.nested: NestedConfig = config.nested
        self.seed = self.nested.seed
        self.T = self.nested.horizon_T
        self.H = self.nested.liability_horizon_H
        self.model = RateModel(self.esg, max_maturity_for(config))
        self.first = int(first)
        count = self.nested.n_primary if count is None else int(count)
        self.secondary_purpose = secondary_purpose
        self.factors = draw_primary_factors(self.esg, count, self.T, self.seed, purpose, self.first)
        self.batch = diffuse_primary(self.esg, self.factors, self.model)
        self._alloc = np.asarray(self.portfolio.asset_allocation, dtype=float)
        ret, mkt = self.batch.portfolio_returns(self._alloc, self.portfolio.bond_ladder_maturity)
        self.primary_profits, self.primary_reserves, _, _ = project_block(
            self.portfolio, ret, mkt, self.portfolio.reserves[None], 0.0)

    @property
    def panel(self):
        return RiskFactorPanel(self.factors, self.seed)

    def _innovations(self, idx, t, shock_id, P):
        key = None if self.nested.common_random_numbers else shock_id
        return np.stack([secondary_innovations(self.seed, self.first + i, t, P, self.H, key,
                                               self.secondary_purpose) for i in idx])

    def secondaries(self, idx, t, shock: ShockSpec | None, P):
        """Secondary batch (node-major rows) for local scenarios ``idx`` at ``t``."""
        idx = np.asarray(idx)
        node = apply_shock(node_at(self.batch, t, idx), shock, self.model, self.esg.rate_floor)
        sid = None if shock is None else shock.shock_id
        return diffuse_secondary(self.esg, node, self._innovations(idx, t, sid, P), self.model)

    def node_npvs(self, idx, t, shock: ShockSpec | None = None, P=None):
        """NPV_t of every secondary: array ``(len(idx), P)``."""
        P = self.nested.n_secondary if P is None else int(P)
        if P < 1:
            raise ConfigError("P must be >= 1")
        idx = np.asarray(idx)
        sec = self.secondaries(idx, t, shock, P)
        ret, mkt = sec.portfolio_returns(self._alloc, self.portfolio.bond_ladder_maturity)
        res0 = np.repeat(self.primary_reserves[idx, t, :], P, axis=0)
        future, _, _, _ = project_block(self.portfolio, ret, mkt, res0, sec.mass_lapse)
        past = np.repeat(self.primary_profits[idx, :t], P, axis=0)
        profits = np.concatenate([past, future], axis=1)
        npv = kernels.npv_accumulate(sec.discount, profits, t)
        return npv.reshape(len(idx), P)

    def estimate_nav(self, idx, t, shock=None, P=None):
        return secondary_mean(self.node_npvs(idx, t, shock, P), axis=1)


def estimate_nav(config: RunConfig, n, t, shock=None, P=None):
    """NAV-hat at node ``(n, t)`` (``n`` 1-based) with ``P`` secondaries."""
    if P is not None and P < 1:
        raise ConfigError("P must be >= 1")
    if not 0 <= t <= config.nested.horizon_T:
        raise ConfigError(f"t must lie in [0, {config.nested.horizon_T}]")
    eng = NestedEngine(config, first=n - 1, count=1)
    return float(eng.estimate_nav([0], t, shock, P)[0])


def initial_valuation(config: RunConfig, P=None):
    """NAV_0 and shocked NAV_0 at the common starting node.

    Uses ``10 * P`` secondaries on its own stream: one node, so the larger
    table is cheap and keeps SCR_0 noise well below the dated nodes'.
    """
    nc = config.nested
    P = 10 * nc.n_secondary if P is None else int(P)
    model = RateModel(config.esg, max_maturity_for(config))
    node0 = initial_node(config.esg, 1, model.max_maturity)
    pf = config.portfolio
    alloc = np.asarray(pf.asset_allocation, dtype=float)
    out = []
    for shock in (None,) + tuple(nc.shock_set):
        node = apply_shock(node0, shock, model, config.esg.rate_floor)
        key = None if (nc.common_random_numbers or shock is None) else shock.shock_id
        z = secondary_innovations(nc.seed, 0, 0, P, nc.liability_horizon_H, key, rng.INITIAL)
        sec = diffuse_secondary(config.esg, node, z[None], model)
        ret, mkt = sec.portfolio_returns(alloc, pf.bond_ladder_maturity)
        prof, _, _, _ = project_block(pf, ret, mkt, pf.reserves[None], sec.mass_lapse)
        out.append(secondary_mean(kernels.npv_accumulate(sec.discount, prof, 0)))
    return float(out[0]), np.array(out[1:])


def _run_block(args):
    config, first, count, retain = args
    eng = NestedEngine(config, first, count)
    nc = config.nested
    T, S = nc.horizon_T, len(nc.shock_set)
    idx = np.arange(count)
    nav = np.empty((count, T))
    shocked = np.empty((count, T, S))
    npv_keep = np.empty((count, T, nc.n_secondary)) if retain else None
    for t in range(1, T + 1):
        npv = eng.node_npvs(idx, t)
        nav[:, t - 1] = secondary_mean(npv, axis=1)
        if retain:
            npv_keep[:, t - 1] = npv
        for k, shock in enumerate(nc.shock_set):
            shocked[:, t - 1, k] = eng.estimate_nav(idx, t, shock)
    bad = ~np.isfinite(nav).all(axis=1) | ~np.isfinite(shocked).all(axis=(1, 2))
    if bad.any():
        n = first + int(np.flatnonzero(bad)[0]) + 1
        raise NumericalError(f"non-finite NAV estimate at primary scenario n={n} (seed {nc.seed})")
    return nav, shocked, eng.batch.discount.copy(), eng.factors, npv_keep


def resolve_workers(workers):
    if workers in (None, "auto"):
        return os.cpu_count() or 1
    return max(1, int(workers))


def _blocks(n_total, block_size):
    return [(b, min(block_size, n_total - b)) for b in range(0, n_total, block_size)]


def _map(fn, jobs, workers):
    workers = min(resolve_workers(workers), len(jobs))
    if workers <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


def run_nested(config: RunConfig, workers=None, initial=True):
    """Reference nested run.

    Returns ``(NavScrPaths, RiskFactorPanel)``; the SCR fields are left
    empty for :func:`orsalab.stdformula.build_scr_paths`.
    """
    if isinstance(config, NestedConfig):
        config = RunConfig(nested=config, portfolio=PortfolioConfig(
            liability_horizon_H=config.liability_horizon_H))
    config.validate()
    nc = config.nested
    workers = config.workers if workers is None else workers
    jobs = [(config, b, c, nc.retain_npv) for b, c in _blocks(nc.n_primary, nc.block_size)]
    parts = _map(_run_block, jobs, workers)
    nav = np.concatenate([p[0] for p in parts])
    shocked = np.concatenate([p[1] for p in parts])
    delta = np.concatenate([p[2] for p in parts])
    factors = np.concatenate([p[3] for p in parts])
    npv = np.concatenate([p[4] for p in parts]) if nc.retain_npv else None
    paths = NavScrPaths(nav, shocked, tuple(s.shock_id for s in nc.shock_set), delta,
                        seed=nc.seed, npv=npv)
    if initial:
        paths.nav0, paths.nav0_shocked = initial_valuation(config)
    return paths, RiskFactorPanel(factors, nc.seed)


# -- LSMC calibration pool ----------------------------------------------------

def _lsmc_block(args):
    config, first, count = args
    eng = NestedEngine(config, first, count, purpose=rng.LSMC_PRIMARY,
                       secondary_purpose=rng.LSMC_SECONDARY)
    nc = config.nested
    T, S = nc.horizon_T, len(nc.shock_set)
    idx = np.arange(count)
    out = np.empty((count, T, S + 1))
    for t in range(1, T + 1):
        out[:, t - 1, 0] = eng.node_npvs(idx, t, None, 1)[:, 0]
        for k, shock in enumerate(nc.shock_set):
            out[:, t - 1, k + 1] = eng.node_npvs(idx, t, shock, 1)[:, 0]
    return eng.factors, out


def single_secondary_pool(config: RunConfig, n_pool, workers=None, block_size=1000):
    """Fresh primary scenarios with one independent secondary each.

    Returns ``(RiskFactorPanel, npv)`` with ``npv[n, t - 1, 0]`` central and
    ``npv[n, t - 1, k + 1]`` under ``shock_set[k]``.
    """
    workers = config.workers if workers is None else workers
    jobs = [(config, b, c) for b, c in _blocks(int(n_pool), block_size)]
    parts = _map(_lsmc_block, jobs, workers)
    factors = np.concatenate([p[0] for p in parts])
    npv = np.concatenate([p[1] for p in parts])
    return RiskFactorPanel(factors, config.nested.seed), npv
