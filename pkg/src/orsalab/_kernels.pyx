# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels.  Same arithmetic, same order as ``_kernels_py``."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def alm_project(returns, market_rate, reserves0, guaranteed, double fee, double profit_sharing,
                double base_lapse, double lapse_slope, mass_lapse):
    cdef const double[:, ::1] ret = np.ascontiguousarray(returns, dtype=np.float64)
    cdef const double[:, ::1] mkt = np.ascontiguousarray(market_rate, dtype=np.float64)
    cdef const double[:, ::1] res0 = np.ascontiguousarray(reserves0, dtype=np.float64)
    cdef const double[::1] g = np.ascontiguousarray(guaranteed, dtype=np.float64)
    cdef const double[::1] ml = np.ascontiguousarray(mass_lapse, dtype=np.float64)
    cdef Py_ssize_t n = ret.shape[0], U = ret.shape[1], K = res0.shape[1]
    out_profits = np.zeros((n, U))
    out_reserves = np.empty((n, U + 1, K))
    out_credited = np.empty((n, U, K))
    out_lapse = np.empty((n, U, K))
    cdef double[:, ::1] profits = out_profits
    cdef double[:, :, ::1] reserves = out_reserves
    cdef double[:, :, ::1] credited = out_credited
    cdef double[:, :, ::1] lapse = out_lapse
    cdef Py_ssize_t i, u, k
    cdef double r, shared, acc, c, gap, lr, Lk
    cdef double[::1] L = np.empty(K)
    for i in range(n):
        for k in range(K):
            L[k] = res0[i, k] * (1.0 - ml[i])
            reserves[i, 0, k] = L[k]
        for u in range(U):
            r = ret[i, u]
            shared = profit_sharing * r
            acc = 0.0
            for k in range(K):
                c = shared if shared > g[k] else g[k]
                gap = mkt[i, u] - c
                lr = base_lapse + lapse_slope * (gap if gap > 0.0 else 0.0)
                if lr < 0.0:
                    lr = 0.0
                if lr > 1.0:
                    lr = 1.0
                Lk = L[k]
                acc = acc + Lk * ((fee + r) - c)
                L[k] = (Lk * (1.0 + c)) * (1.0 - lr)
                credited[i, u, k] = c
                lapse[i, u, k] = lr
            profits[i, u] = acc
            for k in range(K):
                reserves[i, u + 1, k] = L[k]
    return out_profits, out_reserves, out_credited, out_lapse


def npv_accumulate(delta, profits, Py_ssize_t t):
    cdef const double[:, ::1] d = np.ascontiguousarray(delta, dtype=np.float64)
    cdef const double[:, ::1] R = np.ascontiguousarray(profits, dtype=np.float64)
    cdef Py_ssize_t n = R.shape[0], U = R.shape[1], i, u
    out = np.zeros(n)
    cdef double[::1] acc = out
    cdef double d_t
    for i in range(n):
        d_t = d[i, t]
        for u in range(1, U + 1):
            acc[i] = acc[i] + (d[i, u] / d_t) * R[i, u - 1]
    return out
