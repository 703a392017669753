"""Economic scenario generator.

Real-world primary scenarios, risk-neutral secondary scenarios conditioned
on a node, and instantaneous Standard Formula shocks at nodes.

Rates follow a one-factor Gaussian short-rate model discretised exactly on
the annual grid::

    x_u = b + (x_{u-1} - b) * phi + s * z_u,   phi = exp(-a),
    s = sigma * sqrt((1 - exp(-2a)) / (2a))

with ``b`` the risk-neutral long-term mean (real-world: ``b`` plus the risk
premium).  The one-year rate for period ``u`` is ``r_{u-1} = x_{u-1} + g``,
where ``g`` is a deterministic spread (zero except after a rate shock), and
the deflator is ``delta_u = delta_{u-1} * exp(-r_{u-1})``.  Zero-coupon
prices are the exact discrete expectation::

    log P(x, m) = -m b - (x - b) B_m + V_m / 2
    B_m = (1 - phi^m) / (1 - phi),   V_m = s^2 * sum_{k<m} B_k^2

so deflated bonds and the deflated stock are exact martingales on the grid.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import rng
from .config import ConfigError, EsgConfig, ShockSpec

RISKS = ("stock", "rates")


class RateModel:
    """Closed-form discrete zero-coupon prices for the Gaussian short rate."""

    def __init__(self, esg: EsgConfig, max_maturity=64):
        a = esg.rate_mean_reversion
        self.phi = np.exp(-a)
        self.s = esg.rate_vol * np.sqrt((1.0 - np.exp(-2.0 * a)) / (2.0 * a))
        self.b = esg.rate_long_term_mean
        self.b_rw = esg.rate_long_term_mean + esg.rate_risk_premium
        self._grow(max_maturity)

    def _grow(self, max_maturity):
        m = np.arange(max_maturity + 1)
        self.B = (1.0 - self.phi ** m) / (1.0 - self.phi)
        self.V = np.concatenate([[0.0], self.s ** 2 * np.cumsum(self.B[:-1] ** 2)])
        self.max_maturity = max_maturity

    def log_price(self, x, m):
        """log P(x, m); broadcasts ``x`` against integer maturities ``m``."""
        m = np.asarray(m)
        if m.size and m.max() > self.max_maturity:
            self._grow(int(m.max()) * 2)
        return -m * self.b - (np.asarray(x) - self.b) * self.B[m] + 0.5 * self.V[m]


@dataclass(frozen=True)
class RiskFactorPanel:
    """Standard-normal innovations indexed ``[n, u - 1, risk]``.

    ``risk`` 0 is the stock innovation (already correlated with rates),
    ``risk`` 1 the short-rate innovation.
    """

    factors: np.ndarray
    seed: int = 0

    @property
    def n_scenarios(self):
        return self.factors.shape[0]

    @property
    def horizon(self):
        return self.factors.shape[1]

    def stock(self, u):
        return self.factors[:, u - 1, 0]

    def rates(self, u):
        return self.factors[:, u - 1, 1]

    def up_to(self, t):
        """Factors through period ``t`` flattened to ``(N, 2t)``: s_1, z_1, s_2, z_2, ..."""
        return self.factors[:, :t, :].reshape(self.n_scenarios, 2 * t)

    def subset(self, idx):
        return RiskFactorPanel(self.factors[np.asarray(idx)], self.seed)

    def rows(self):
        """(n, u, risk, value) tuples, 1-based n and u."""
        N, T, _ = self.factors.shape
        for n in range(N):
            for u in range(T):
                for r, name in enumerate(RISKS):
                    yield n + 1, u + 1, name, self.factors[n, u, r]


@dataclass(frozen=True)
class EconomicPath:
    """One scenario.  Level arrays cover periods ``start .. end``.

    ``discount_factor`` always runs from period 0, so a secondary path carries
    the deflator history of its node.  ``opening_*`` hold the pre-shock node
    values used for the first period's asset returns.
    """

    start: int
    stock_index: np.ndarray
    real_estate_index: np.ndarray
    base_rate: np.ndarray
    discount_factor: np.ndarray
    curve_shift: np.ndarray
    opening_stock: float
    opening_real_estate: float
    opening_rate: float
    opening_shift: np.ndarray
    mass_lapse: float
    model: RateModel = field(repr=False)

    @property
    def end(self):
        return self.start + len(self.stock_index) - 1

    @property
    def short_rate(self):
        j = np.arange(len(self.base_rate))
        return self.base_rate + (self.curve_shift[j + 1] - self.curve_shift[j])

    def zc_prices(self, u, maturities):
        """Zero-coupon prices at period ``u`` for the given maturities."""
        j = u - self.start
        m = np.asarray(maturities)
        logp = self.model.log_price(self.base_rate[j], m)
        return np.exp(logp - (self.curve_shift[j + m] - self.curve_shift[j]))

    def zc_curve(self, horizon):
        """Matrix of zero-coupon prices, one row per period, maturities 1..horizon."""
        m = np.arange(1, horizon + 1)
        return np.vstack([self.zc_prices(u, m) for u in range(self.start, self.end + 1)])


class PathBatch:
    """A stack of paths sharing ``start`` and length; rows are scenarios.

    Indexing yields :class:`EconomicPath`, so a batch behaves like the list
    of paths the generators return.
    """

    def __init__(self, start, stock, real_estate, base_rate, discount, shift,
                 opening_stock, opening_real_estate, opening_rate, opening_shift,
                 mass_lapse, model):
        self.start = int(start)
        self.stock = stock
        self.real_estate = real_estate
        self.base_rate = base_rate
        self.discount = discount
        self.shift = shift
        self.opening_stock = opening_stock
        self.opening_real_estate = opening_real_estate
        self.opening_rate = opening_rate
        self.opening_shift = opening_shift
        self.mass_lapse = mass_lapse
        self.model = model

    def __len__(self):
        return self.stock.shape[0]

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def __getitem__(self, i):
        return EconomicPath(
            start=self.start,
            stock_index=self.stock[i],
            real_estate_index=self.real_estate[i],
            base_rate=self.base_rate[i],
            discount_factor=self.discount[i],
            curve_shift=self.shift[i],
            opening_stock=float(self.opening_stock[i]),
            opening_real_estate=float(self.opening_real_estate[i]),
            opening_rate=float(self.opening_rate[i]),
            opening_shift=self.opening_shift[i],
            mass_lapse=float(self.mass_lapse[i]),
            model=self.model,
        )

    @property
    def n_levels(self):
        return self.stock.shape[1]

    @property
    def end(self):
        return self.start + self.n_levels - 1

    def short_rate(self):
        L = self.n_levels
        return self.base_rate + (self.shift[:, 1:L + 1] - self.shift[:, :L])

    def _log_zc(self, j, m):
        x = self.base_rate[:, j][:, None]
        return self.model.log_price(x, m[None, :]) - (self.shift[:, j + m] - self.shift[:, [j]])

    def asset_returns(self, ladder_maturity):
        """Per-period returns for periods ``start+1 .. end``.

        Returns ``(stock, real_estate, bonds, cash, market_rate)``, each of
        shape ``(n_paths, n_levels - 1)``.  The bond sleeve is an equal-weight
        zero-coupon ladder with maturities ``1 .. ladder_maturity``, bought at
        the start of each period and marked at the end.  The first period's
        returns are measured against the pre-shock opening values.
        """
        L = self.n_levels
        # period j runs from level j-1 to level j; the first uses opening values
        s_prev = self.stock[:, :-1].copy()
        s_prev[:, 0] = self.opening_stock
        re_prev = self.real_estate[:, :-1].copy()
        re_prev[:, 0] = self.opening_real_estate
        stock_ret = self.stock[:, 1:] / s_prev - 1.0
        re_ret = self.real_estate[:, 1:] / re_prev - 1.0

        r = self.short_rate()
        cash_ret = np.exp(r[:, :-1]) - 1.0
        market_rate = r[:, :-1]

        M = int(ladder_maturity)
        m_buy = np.arange(1, M + 1)
        m_hold = m_buy - 1
        bond_ret = np.empty((len(self), L - 1))
        open_logp = (self.model.log_price(self.opening_rate[:, None], m_buy[None, :])
                     - (self.opening_shift[:, m_buy] - self.opening_shift[:, [0]]))
        for j in range(1, L):
            buy = open_logp if j == 1 else self._log_zc(j - 1, m_buy)
            hold = self._log_zc(j, m_hold)
            bond_ret[:, j - 1] = np.exp(hold - buy).mean(axis=1) - 1.0
        return stock_ret, re_ret, bond_ret, cash_ret, market_rate

    def portfolio_returns(self, allocation, ladder_maturity):
        stock_ret, re_ret, bond_ret, cash_ret, market_rate = self.asset_returns(ladder_maturity)
        w = allocation
        ret = w[0] * stock_ret + w[1] * re_ret + w[2] * bond_ret + w[3] * cash_ret
        return ret, market_rate


@dataclass(frozen=True)
class NodeState:
    """Vector of node states at a common date ``t`` (one entry per node).

    ``shift`` is the cumulative deterministic rate spread ``G_m`` over
    maturities ``0..K``; zero for an unshocked node.  ``opening_*`` keep the
    pre-shock values, ``history`` the deflators ``delta_0..delta_t``.
    """

    t: int
    base_rate: np.ndarray
    stock: np.ndarray
    real_estate: np.ndarray
    shift: np.ndarray
    history: np.ndarray
    opening_stock: np.ndarray
    opening_real_estate: np.ndarray
    opening_rate: np.ndarray
    opening_shift: np.ndarray
    mass_lapse: np.ndarray

    def __len__(self):
        return self.base_rate.shape[0]

    def zc_curve(self, model, maturities):
        m = np.asarray(maturities)
        return np.exp(model.log_price(self.base_rate[:, None], m[None, :]) - self.shift[:, m])

    def zero_rates(self, model, maturities):
        m = np.asarray(maturities)
        return -np.log(self.zc_curve(model, m)) / m[None, :]

    def take(self, idx):
        idx = np.asarray(idx)
        return NodeState(self.t, self.base_rate[idx], self.stock[idx], self.real_estate[idx],
                         self.shift[idx], self.history[idx], self.opening_stock[idx],
                         self.opening_real_estate[idx], self.opening_rate[idx],
                         self.opening_shift[idx], self.mass_lapse[idx])


# -- generation --------------------------------------------------------------

def draw_primary_factors(esg: EsgConfig, n_scenarios, horizon_T, seed,
                         purpose=rng.PRIMARY, first=0):
    """Innovation panel for scenarios ``first .. first + n_scenarios - 1``."""
    rho = esg.stock_rate_correlation
    out = np.empty((n_scenarios, horizon_T, 2))
    for i in range(n_scenarios):
        z = rng.stream(seed, purpose, first + i).standard_normal((horizon_T, 2))
        out[i, :, 1] = z[:, 0]
        out[i, :, 0] = rho * z[:, 0] + np.sqrt(1.0 - rho * rho) * z[:, 1]
    return out


def diffuse_primary(esg: EsgConfig, factors, model=None, max_maturity=64):
    """Real-world paths over [0, T] built from an innovation panel ``(N, T, 2)``."""
    model = model or RateModel(esg, max_maturity)
    N, T, _ = factors.shape
    x = np.empty((N, T + 1))
    S = np.empty((N, T + 1))
    RE = np.empty((N, T + 1))
    delta = np.empty((N, T + 1))
    x[:, 0] = esg.short_rate_initial
    S[:, 0] = 1.0
    RE[:, 0] = 1.0
    delta[:, 0] = 1.0
    mu_s = esg.stock_drift_rw - 0.5 * esg.stock_vol ** 2
    mu_re = esg.real_estate_drift_rw - 0.5 * esg.real_estate_vol ** 2
    for u in range(1, T + 1):
        eps_s = factors[:, u - 1, 0]
        z = factors[:, u - 1, 1]
        x[:, u] = model.b_rw + (x[:, u - 1] - model.b_rw) * model.phi + model.s * z
        S[:, u] = S[:, u - 1] * np.exp(mu_s + esg.stock_vol * eps_s)
        RE[:, u] = RE[:, u - 1] * np.exp(mu_re + esg.real_estate_vol * eps_s)
        delta[:, u] = delta[:, u - 1] * np.exp(-x[:, u - 1])
    K = model.max_maturity
    zeros_shift = np.zeros((N, K + 1))
    return PathBatch(0, S, RE, x, delta, zeros_shift, S[:, 0].copy(), RE[:, 0].copy(),
                     x[:, 0].copy(), zeros_shift, np.zeros(N), model)


def generate_primary(config: EsgConfig, n_scenarios, horizon_T, seed, max_maturity=64):
    """Real-world primary scenarios and their innovation panel.

    Returns ``(RiskFactorPanel, PathBatch)``; the batch indexes like a list
    of :class:`EconomicPath`.
    """
    config.validate()
    if n_scenarios < 1 or horizon_T < 1:
        raise ConfigError("n_scenarios and horizon_T must be >= 1")
    factors = draw_primary_factors(config, n_scenarios, horizon_T, seed)
    panel = RiskFactorPanel(factors, seed)
    return panel, diffuse_primary(config, factors, max_maturity=max_maturity)


def node_at(batch: PathBatch, t, idx=None):
    """Unshocked node states at date ``t`` for rows ``idx`` of a primary batch."""
    if idx is None:
        idx = np.arange(len(batch))
    idx = np.asarray(idx)
    j = t - batch.start
    n = len(idx)
    K = batch.shift.shape[1] - 1
    zeros = np.zeros((n, K + 1))
    return NodeState(
        t=t,
        base_rate=batch.base_rate[idx, j].copy(),
        stock=batch.stock[idx, j].copy(),
        real_estate=batch.real_estate[idx, j].copy(),
        shift=zeros,
        history=batch.discount[idx, :t + 1].copy(),
        opening_stock=batch.stock[idx, j].copy(),
        opening_real_estate=batch.real_estate[idx, j].copy(),
        opening_rate=batch.base_rate[idx, j].copy(),
        opening_shift=zeros,
        mass_lapse=np.zeros(n),
    )


def initial_node(esg: EsgConfig, n=1, max_maturity=64):
    K = max_maturity
    zeros = np.zeros((n, K + 1))
    ones = np.ones(n)
    r0 = np.full(n, esg.short_rate_initial)
    return NodeState(0, r0, ones.copy(), ones.copy(), zeros, np.ones((n, 1)),
                     ones.copy(), ones.copy(), r0.copy(), zeros, np.zeros(n))


def apply_shock(node: NodeState, shock: ShockSpec | None, model: RateModel, floor=True):
    """Shocked copy of ``node``; history up to ``t`` is never touched.

    equity_down scales stock and real estate by ``1 + magnitude``; rates_up and
    rates_down shift every zero rate by ``magnitude`` (a downward shift never
    takes a rate below ``min(rate, 0)`` when ``floor``); mass_lapse only flags
    the liability model.
    """
    if shock is None:
        return node
    sid = shock.shock_id
    if sid == "equity_down":
        f = 1.0 + shock.magnitude
        return replace(node, stock=node.stock * f, real_estate=node.real_estate * f)
    if sid in ("rates_up", "rates_down"):
        K = node.shift.shape[1] - 1
        m = np.arange(1, K + 1)
        z = node.zero_rates(model, m)
        z_new = z + shock.magnitude
        if floor and shock.magnitude < 0:
            z_new = np.maximum(z_new, np.minimum(z, 0.0))
        shift = node.shift.copy()
        shift[:, 1:] += m[None, :] * (z_new - z)
        return replace(node, shift=shift)
    if sid == "mass_lapse":
        return replace(node, mass_lapse=np.full(len(node), float(shock.magnitude)))
    raise ConfigError(f"unknown shock_id {sid!r}")


def diffuse_secondary(esg: EsgConfig, node: NodeState, innovations, model: RateModel):
    """Risk-neutral paths over [t, t+H] from each node.

    ``innovations`` has shape ``(n_nodes, P, H, 2)`` (rate, independent stock
    part).  Output rows are node-major: row ``i * P + p``.
    """
    n_nodes, P, H, _ = innovations.shape
    if H < 1:
        raise ConfigError("secondary horizon H must be >= 1")
    K = node.shift.shape[1] - 1
    if K < H + 1:
        raise ConfigError(f"node curve covers {K} maturities, need at least {H + 1}")
    rho = esg.stock_rate_correlation
    rep = lambda a: np.repeat(a, P, axis=0)
    n = n_nodes * P
    z = innovations[..., 0].reshape(n, H)
    eps_s = rho * z + np.sqrt(1.0 - rho * rho) * innovations[..., 1].reshape(n, H)

    shift = rep(node.shift)
    g = shift[:, 1:H + 1] - shift[:, :H]
    x = np.empty((n, H + 1))
    S = np.empty((n, H + 1))
    RE = np.empty((n, H + 1))
    x[:, 0] = rep(node.base_rate)
    S[:, 0] = rep(node.stock)
    RE[:, 0] = rep(node.real_estate)
    t = node.t
    delta = np.empty((n, t + H + 1))
    delta[:, :t + 1] = rep(node.history)
    half_s = 0.5 * esg.stock_vol ** 2
    half_re = 0.5 * esg.real_estate_vol ** 2
    for j in range(1, H + 1):
        r_prev = x[:, j - 1] + g[:, j - 1]
        x[:, j] = model.b + (x[:, j - 1] - model.b) * model.phi + model.s * z[:, j - 1]
        S[:, j] = S[:, j - 1] * np.exp(r_prev - half_s + esg.stock_vol * eps_s[:, j - 1])
        RE[:, j] = RE[:, j - 1] * np.exp(r_prev - half_re + esg.real_estate_vol * eps_s[:, j - 1])
        delta[:, t + j] = delta[:, t + j - 1] * np.exp(-r_prev)
    return PathBatch(t, S, RE, x, delta, shift, rep(node.opening_stock),
                     rep(node.opening_real_estate), rep(node.opening_rate),
                     rep(node.opening_shift), rep(node.mass_lapse), model)


def secondary_innovations(seed, n, t, P, H, shock_id=None, purpose=rng.SECONDARY):
    """Innovations for node ``(n, t)``; draws are p-major so growing P keeps old ones."""
    return rng.stream(seed, purpose, n, t, rng.shock_code(shock_id)).standard_normal((P, H, 2))


def generate_secondary(config: EsgConfig, node: NodeState, shock, n_secondaries, horizon_H,
                       seed, key=(0, 0), model=None, floor=None):
    """``n_secondaries`` risk-neutral paths over [t, t+H] from a single node.

    ``key`` is the ``(n, t)`` pair identifying the node's RNG sub-stream.
    """
    if horizon_H <= 0:
        raise ConfigError("horizon_H must be > 0")
    if len(node) != 1:
        raise ValueError("generate_secondary takes a single node; use diffuse_secondary for batches")
    model = model or RateModel(config, node.shift.shape[1] - 1)
    floor = config.rate_floor if floor is None else floor
    shocked = apply_shock(node, shock, model, floor=floor)
    innov = secondary_innovations(seed, key[0], key[1], n_secondaries, horizon_H)[None]
    return diffuse_secondary(config, shocked, innov, model)
