"""Pure numpy kernels; reference implementation of ``_kernels.pyx``.

Both backends perform the same floating-point operations in the same
order, so their outputs are bit-identical.
"""
import numpy as np


def alm_project(returns, market_rate, reserves0, guaranteed, fee, profit_sharing,
                base_lapse, lapse_slope, mass_lapse):
    """Savings-book recursion over a block of paths.

    Parameters
    ----------
    returns, market_rate : (n, U) arrays
        Portfolio return and market short rate of each period.
    reserves0 : (n, K) array
        Model-point reserves at the start of the window.
    guaranteed : (K,) array
    mass_lapse : (n,) array
        One-off surrender fraction applied before the first period.

    Returns
    -------
    profits (n, U), reserves (n, U + 1, K), credited (n, U, K), lapse (n, U, K)
    """
    returns = np.ascontiguousarray(returns, dtype=np.float64)
    market_rate = np.ascontiguousarray(market_rate, dtype=np.float64)
    n, U = returns.shape
    K = reserves0.shape[1]
    profits = np.zeros((n, U))
    reserves = np.empty((n, U + 1, K))
    credited = np.empty((n, U, K))
    lapse = np.empty((n, U, K))
    L = reserves0 * (1.0 - mass_lapse)[:, None]
    reserves[:, 0, :] = L
    for u in range(U):
        r = returns[:, u]
        shared = profit_sharing * r
        acc = np.zeros(n)
        for k in range(K):
            c = np.maximum(shared, guaranteed[k])
            gap = market_rate[:, u] - c
            lr = base_lapse + lapse_slope * np.maximum(gap, 0.0)
            lr = np.minimum(np.maximum(lr, 0.0), 1.0)
            Lk = L[:, k]
            acc = acc + Lk * ((fee + r) - c)
            L[:, k] = (Lk * (1.0 + c)) * (1.0 - lr)
            credited[:, u, k] = c
            lapse[:, u, k] = lr
        profits[:, u] = acc
        reserves[:, u + 1, :] = L
    return profits, reserves, credited, lapse


def npv_accumulate(delta, profits, t):
    """Sequential sum over u = 1..U of (delta_u / delta_t) * R_u."""
    delta = np.ascontiguousarray(delta, dtype=np.float64)
    profits = np.ascontiguousarray(profits, dtype=np.float64)
    n, U = profits.shape
    acc = np.zeros(n)
    d_t = delta[:, t]
    for u in range(1, U + 1):
        acc = acc + (delta[:, u] / d_t) * profits[:, u - 1]
    return acc
