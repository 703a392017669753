"""Ordinary least squares and forward stepwise selection.

Non-constant design columns are centred and scaled before a column-pivoted
QR factorisation; coefficients and their covariance are mapped back to the
original scale.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy import stats

RANK_TOL = 1e-10


class SingularDesignError(ValueError):
    """Rank-deficient design.

    ``columns`` lists the dependent columns, ``relations`` maps each of them
    to the columns it is a combination of.
    """

    def __init__(self, columns, rank, relations=None):
        self.columns = list(columns)
        self.rank = rank
        self.relations = dict(relations or {})
        parts = [f"{c} ~ {' + '.join(map(str, self.relations[c]))}" if self.relations.get(c)
                 else str(c) for c in self.columns]
        super().__init__(f"design is rank deficient (rank {rank}); collinear columns: "
                         + "; ".join(parts))


def _relations(Z, keep, drop, names):
    out = {}
    for j in drop:
        coef, *_ = np.linalg.lstsq(Z[:, keep], Z[:, j], rcond=None)
        big = np.abs(coef) > 1e-8 * max(np.abs(coef).max(), 1e-300)
        out[names[j]] = [names[keep[i]] for i in np.flatnonzero(big)]
    return out


@dataclass(frozen=True)
class OlsDiagnostics:
    r_squared: float
    adjusted_r_squared: float
    t_statistics: np.ndarray
    standard_errors: np.ndarray
    residual_variance: float
    n_obs: int
    n_params: int

    def to_dict(self):
        return {"r_squared": self.r_squared, "adjusted_r_squared": self.adjusted_r_squared,
                "t_statistics": [float(v) for v in self.t_statistics],
                "standard_errors": [float(v) for v in self.standard_errors],
                "residual_variance": self.residual_variance,
                "n_obs": self.n_obs, "n_params": self.n_params}


def _standardise(X):
    """Centre/scale non-constant columns; returns (Z, mean, scale, constant_mask)."""
    mean = X.mean(axis=0)
    spread = X.std(axis=0)
    const = spread <= 1e-14 * np.maximum(np.abs(mean), 1.0)
    has_const = bool(const.any())
    mu = np.where(const | (not has_const), 0.0, mean)
    scale = np.where(const, 1.0, spread if has_const else np.sqrt((X * X).mean(axis=0)))
    scale = np.where(scale > 0, scale, 1.0)
    return (X - mu) / scale, mu, scale, const


def fit_ols(design, targets, names=None):
    """Least-squares coefficients for ``targets ~ design``.

    Parameters
    ----------
    design : (n, p) array
        Include a column of ones for an intercept.
    targets : (n,) array
    names : optional column labels used in error messages.

    Returns
    -------
    coefficients : (p,) array
    diagnostics : OlsDiagnostics
    """
    X = np.asarray(design, dtype=float)
    y = np.asarray(targets, dtype=float)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ValueError(f"design {X.shape} and targets {y.shape} do not align")
    n, p = X.shape
    names = list(names) if names is not None else [f"x{j}" for j in range(p)]
    if n < p:
        raise SingularDesignError(names[n:], n)
    Z, mu, scale, const = _standardise(X)
    # several constant columns are collinear with each other
    const_idx = np.flatnonzero(const)
    if len(const_idx) > 1:
        raise SingularDesignError([names[j] for j in const_idx[1:]], p - len(const_idx) + 1,
                                  {names[j]: [names[const_idx[0]]] for j in const_idx[1:]})
    if len(const_idx) == 1:
        c = const_idx[0]
        # represent the intercept by the raw constant so centring is exact
        Z[:, c] = X[:, c]
        scale[c] = 1.0
    Q, R, piv = scipy.linalg.qr(Z, mode="economic", pivoting=True)
    d = np.abs(np.diag(R))
    rank = int(np.sum(d > RANK_TOL * max(d[0], 1e-300))) if p else 0
    if rank < p:
        drop = sorted(piv[rank:])
        keep = sorted(piv[:rank])
        raise SingularDesignError([names[j] for j in drop], rank,
                                  _relations(Z, keep, drop, names))
    gamma_p = scipy.linalg.solve_triangular(R, Q.T @ y)
    gamma = np.empty(p)
    gamma[piv] = gamma_p

    # back-transform: y = sum_j gamma_j (x_j - mu_j) / s_j
    beta = gamma / scale
    if len(const_idx) == 1:
        c = const_idx[0]
        beta[c] = (gamma[c] - np.sum(beta * mu)) / X[0, c]
    fitted = X @ beta
    resid = y - fitted
    ssr = float(resid @ resid)
    if len(const_idx):
        sst = float(((y - y.mean()) ** 2).sum())
    else:
        sst = float((y * y).sum())
    r2 = 1.0 - ssr / sst if sst > 0 else 1.0
    r2 = float(min(max(r2, 0.0), 1.0))
    dof = n - p
    sigma2 = ssr / dof if dof > 0 else float("nan")
    adj = 1.0 - (1.0 - r2) * (n - (1 if len(const_idx) else 0)) / dof if dof > 0 else float("nan")

    # covariance of gamma = sigma2 (R^T R)^-1 in pivoted order
    Rinv = scipy.linalg.solve_triangular(R, np.eye(p))
    cov_gp = sigma2 * (Rinv @ Rinv.T)
    cov_g = np.empty((p, p))
    cov_g[np.ix_(piv, piv)] = cov_gp
    A = np.diag(1.0 / scale)
    if len(const_idx) == 1:
        c = const_idx[0]
        A[c, :] = -(mu / scale) / X[0, c]
        A[c, c] = 1.0 / X[0, c]
    cov_b = A @ cov_g @ A.T
    se = np.sqrt(np.maximum(np.diag(cov_b), 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        tstat = np.where(se > 0, beta / se, np.where(beta == 0, 0.0, np.inf * np.sign(beta)))
    return beta, OlsDiagnostics(r2, float(adj), tstat, se, float(sigma2), n, p)


def stepwise_select(candidate_terms, design_builder, targets, significance=0.05,
                    max_terms=25, base_columns=None, sort_key=None):
    """Forward stepwise selection on top of an intercept.

    At each step every remaining candidate is scored by the adjusted R^2 of
    the enlarged model; among candidates whose two-sided t-test p-value is
    below ``significance`` the best score wins (ties: ``sort_key``, which
    defaults to the candidate order).  Stops when nothing qualifies, the fit
    is exact, or ``max_terms`` candidates were added.

    ``design_builder(terms)`` returns the ``(n, len(terms))`` column block.
    ``base_columns`` are forced regressors (beyond the intercept).
    """
    cands = list(candidate_terms)
    if not cands:
        raise ValueError("no candidate terms")
    y = np.asarray(targets, dtype=float)
    n = len(y)
    C = np.asarray(design_builder(cands), dtype=float).reshape(n, len(cands))
    if sort_key is None:
        order = {id(c): i for i, c in enumerate(cands)}
        sort_key = lambda c: order[id(c)]
    # work in standardised units
    mu = C.mean(axis=0)
    sd = C.std(axis=0)
    usable = sd > 1e-14 * np.maximum(np.abs(mu), 1.0)
    Cs = np.where(usable, (C - mu) / np.where(usable, sd, 1.0), 0.0)

    cols = [np.ones(n) / np.sqrt(n)]
    if base_columns is not None:
        B = np.asarray(base_columns, dtype=float).reshape(n, -1)
        cols += [(b - b.mean()) / (b.std() or 1.0) for b in B.T]
    Q, _ = np.linalg.qr(np.column_stack(cols))
    p = Q.shape[1]
    yc = y - Q @ (Q.T @ y)
    sst = float(((y - y.mean()) ** 2).sum())
    ssr = float(yc @ yc)

    chosen = []
    remaining = [j for j in range(len(cands)) if usable[j]]
    while remaining and len(chosen) < max_terms:
        if sst <= 0 or ssr <= 1e-24 * max(sst, 1.0) or 1.0 - ssr / sst >= 1.0 - 1e-12:
            break
        Cr = Cs[:, remaining]
        Cp = Cr - Q @ (Q.T @ Cr)
        norm2 = (Cp * Cp).sum(axis=0)
        ok = norm2 > 1e-10 * n
        proj = Cp.T @ yc
        ssr_new = ssr - np.where(ok, proj ** 2 / np.where(ok, norm2, 1.0), 0.0)
        ssr_new = np.maximum(ssr_new, 0.0)
        dof = n - (p + 1)
        if dof <= 0:
            break
        adj = 1.0 - (ssr_new / dof) / (sst / (n - 1))
        with np.errstate(divide="ignore", invalid="ignore"):
            tval = np.abs(proj) / np.sqrt(np.where(ok, norm2, 1.0) * ssr_new / dof)
        tval = np.where(ok, np.nan_to_num(tval, nan=0.0, posinf=np.inf), 0.0)
        pval = 2.0 * stats.t.sf(tval, dof)
        qual = ok & (pval < significance)
        if not qual.any():
            break
        best = adj[qual].max()
        # near-ties resolved by the deterministic term order
        tied = [k for k in np.flatnonzero(qual) if adj[k] >= best - 1e-12 * max(abs(best), 1.0)]
        k = min(tied, key=lambda k: sort_key(cands[remaining[k]]))
        j = remaining.pop(k)
        chosen.append(cands[j])
        q = Cp[:, k] / np.sqrt(norm2[k])
        # re-orthogonalise once for numerical hygiene
        q = q - Q @ (Q.T @ q)
        q /= np.linalg.norm(q)
        Q = np.column_stack([Q, q])
        p += 1
        yc = yc - q * (q @ yc)
        ssr = float(yc @ yc)
    return chosen
