"""Stylised savings-product projection.

Market-value balance sheet, assets rebalanced to the initial allocation at
the start of each period.  Per period and model point::

    credited = max(guaranteed, profit_sharing * asset_return)
    lapse    = clamp(base_lapse + slope * max(0, market_rate - credited), 0, 1)
    R       += reserve * (margin_fee + asset_return - credited)
    reserve  = reserve * (1 + credited) * (1 - lapse)

where ``reserve`` is the in-force amount over the period and ``market_rate``
is the one-year rate for the same period (the target crediting rate).
Surrenders are paid at account value, so they carry no profit; the book is
paid out at the liability horizon.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .config import PortfolioConfig
from .esg import EconomicPath, PathBatch


class CoverageError(ValueError):
    pass


@dataclass(frozen=True)
class AlmOutput:
    """Projection of one path (or a block; arrays then gain a leading axis).

    ``profits[u - 1]`` is R_u; ``discount_factors[u]`` is delta_u, taken
    verbatim from the driving path.
    """

    profits: np.ndarray
    discount_factors: np.ndarray
    reserves: np.ndarray
    credited: np.ndarray
    lapse: np.ndarray
    exhausted: np.ndarray
    weights_before_rebalance: np.ndarray = None
    weights_after_rebalance: np.ndarray = None

    @property
    def periods(self):
        return self.profits.shape[-1]


@dataclass(frozen=True)
class SplicedPath:
    """A primary path up to its node ``t`` followed by one secondary path."""

    head: EconomicPath
    tail: EconomicPath

    @property
    def start(self):
        return 0

    @property
    def node(self):
        return self.tail.start

    @property
    def end(self):
        return self.tail.end

    @property
    def discount_factor(self):
        return self.tail.discount_factor

    @property
    def mass_lapse(self):
        return self.tail.mass_lapse


def _batch_of(path: EconomicPath):
    one = lambda a: np.asarray(a)[None]
    return PathBatch(path.start, one(path.stock_index), one(path.real_estate_index),
                     one(path.base_rate), one(path.discount_factor), one(path.curve_shift),
                     one(path.opening_stock), one(path.opening_real_estate),
                     one(path.opening_rate), one(path.opening_shift), one(path.mass_lapse),
                     path.model)


def _sleeves(path, ladder):
    if isinstance(path, SplicedPath):
        t = path.node
        if path.head.start != 0 or path.head.end < t:
            raise CoverageError(f"primary head must cover periods 0..{t}")
        head = _batch_of(path.head).asset_returns(ladder)
        tail = _batch_of(path.tail).asset_returns(ladder)
        return [np.concatenate([h[0, :t], q[0]]) for h, q in zip(head, tail)]
    if path.start != 0:
        raise CoverageError("path must start at period 0; splice a secondary onto its primary")
    return [a[0] for a in _batch_of(path).asset_returns(ladder)]


def path_returns(config: PortfolioConfig, path):
    """Per-sleeve returns, portfolio return and market rate for every period of ``path``.

    Returns ``(sleeves (U, 4), portfolio (U,), market_rate (U,))``.
    """
    stock, re, bond, cash, market = _sleeves(path, config.bond_ladder_maturity)
    w = np.asarray(config.asset_allocation, dtype=float)
    ret = w[0] * stock + w[1] * re + w[2] * bond + w[3] * cash
    return np.stack([stock, re, bond, cash], axis=1), ret, market


def project_block(config: PortfolioConfig, returns, market_rate, reserves0, mass_lapse):
    """Vectorised projection; thin wrapper over the compiled/numpy kernel."""
    n = returns.shape[0]
    reserves0 = np.broadcast_to(np.asarray(reserves0, dtype=float),
                                (n, len(config.model_points)))
    mass = np.broadcast_to(np.asarray(mass_lapse, dtype=float), (n,))
    return kernels.alm_project(returns, market_rate, np.ascontiguousarray(reserves0),
                               config.guaranteed_rates, config.margin_fee,
                               config.profit_sharing_rate, config.base_lapse,
                               config.dynamic_lapse_slope, np.ascontiguousarray(mass))


def project(config: PortfolioConfig, path, start=0, mass_lapse=None) -> AlmOutput:
    """Project the book along ``path`` over periods 1 .. start + H.

    ``path`` is a primary :class:`EconomicPath` or a :class:`SplicedPath`
    whose node is ``start``.  ``mass_lapse`` is the one-off surrender
    fraction applied at ``start``; ``None`` takes it from the path (set by a
    mass_lapse shock), ``True`` is not accepted since the magnitude lives on
    the shock.
    """
    H = config.liability_horizon_H
    if path.end < start + H:
        raise CoverageError(f"path ends at {path.end}, projection needs {start + H}")
    if mass_lapse is None:
        mass_lapse = getattr(path, "mass_lapse", 0.0)
    sleeves, returns, market = path_returns(config, path)
    returns = returns[:start + H][None]
    market = market[:start + H][None]
    reserves0 = config.reserves[None]
    if start == 0:
        prof, res, cred, lap = project_block(config, returns, market, reserves0, mass_lapse)
    else:
        # run to the node unshocked, then apply the one-off surrender at ``start``
        p1, r1, c1, l1 = project_block(config, returns[:, :start], market[:, :start], reserves0, 0.0)
        p2, r2, c2, l2 = project_block(config, returns[:, start:], market[:, start:],
                                       r1[:, -1, :], mass_lapse)
        prof = np.concatenate([p1, p2], axis=1)
        res = np.concatenate([r1[:, :-1], r2], axis=1)
        cred = np.concatenate([c1, c2], axis=1)
        lap = np.concatenate([l1, l2], axis=1)
    delta = np.asarray(path.discount_factor)[:start + H + 1]
    exhausted = bool(np.all(res[0, -1] <= 0.0))
    w = np.asarray(config.asset_allocation, dtype=float)
    grown = w * (1.0 + sleeves[:start + H])
    before = grown / grown.sum(axis=1, keepdims=True)
    after = np.broadcast_to(w, before.shape).copy()
    return AlmOutput(prof[0], delta, res[0], cred[0], lap[0], np.array(exhausted), before, after)


def compute_npv(output: AlmOutput, t) -> float:
    """Capitalised past plus discounted future profits seen from ``t``.

    NPV_t = sum_{u=1}^{U} (delta_u / delta_t) * R_u with U the last projected period.
    """
    profits = np.asarray(output.profits, dtype=float)
    delta = np.asarray(output.discount_factors, dtype=float)
    if t < 0 or t > profits.shape[-1] or delta.shape[-1] < profits.shape[-1] + 1:
        raise CoverageError("output does not cover the requested date")
    if profits.ndim == 1:
        return float(kernels.npv_accumulate(delta[None], profits[None], t)[0])
    return kernels.npv_accumulate(delta, profits, t)
