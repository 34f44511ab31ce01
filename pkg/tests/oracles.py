"""Brute-force grid minimizers, written independently of the library code."""

import numpy as np
from scipy.special import xlogy


def _dev(y, m):
    y = np.asarray(y, dtype=float)
    m = np.asarray(m, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        d = 2.0 * (m - y + xlogy(y, y) - xlogy(y, m))
    return np.where((m <= 0) & (y > 0), np.inf, d)


def _refine(f, lo, hi, coarse=1e-3, fine=1e-6):
    grid = np.arange(lo, hi + coarse, coarse)
    vals = f(grid)
    k = int(np.argmin(vals))
    a, b = max(lo, grid[k] - 2 * coarse), grid[k] + 2 * coarse
    grid = np.append(np.arange(a, b, fine), lo if grid[k] - 2 * coarse <= lo else a)
    vals = f(grid)
    k = int(np.argmin(vals))
    return float(grid[k]), float(vals[k])


def fixed_objective(ds, thetas):
    c = ds.B / ds.t_B
    m = (np.asarray(thetas)[:, None] + c[None, :]) * ds.t_S
    return _dev(ds.S[None, :], np.maximum(m, 0.0)).sum(axis=1)


def grid_fixed(ds, allow_negative=False):
    c = ds.B / ds.t_B
    lo = -float(c.min()) if allow_negative else 0.0
    hi = 3.0 * max(1.0, ds.S.max() / ds.t_S) + 1.0
    return _refine(lambda t: fixed_objective(ds, t), lo, hi)


def wstat_objective(ds, thetas, empty_bins="profile"):
    S = ds.S.astype(float)[None, :]
    B = ds.B.astype(float)[None, :]
    mu = np.asarray(thetas, dtype=float)[:, None]
    T = ds.t_S + ds.t_B
    # textbook root, fine here because counts and means are small
    delta = (mu - (S + B) / T) ** 2 + 4.0 * B * mu / T
    b = 0.5 * ((S + B) / T - mu + np.sqrt(delta))
    if empty_bins == "profile":
        b = np.where(B == 0, np.maximum(S / T - mu, 0.0), b)
    else:
        b = np.where(B == 0, 0.0, b)
    return (_dev(S, (mu + b) * ds.t_S) + _dev(B, b * ds.t_B)).sum(axis=1)


def grid_wstat(ds, empty_bins="profile"):
    hi = 3.0 * max(1.0, ds.S.max() / ds.t_S) + 1.0
    return _refine(lambda t: wstat_objective(ds, t, empty_bins), 0.0, hi)


def grid_joint(ds):
    """Joint fit by separate 1-D searches over the source-region mean and the background."""
    hi_s = ds.S.max() / ds.t_S + 1.0
    hi_b = ds.B.max() / ds.t_B + 1.0
    s_hat, s_val = _refine(lambda s: _dev(ds.S[None, :], np.asarray(s)[:, None] * ds.t_S).sum(axis=1), 0.0, hi_s,
                           coarse=1e-4, fine=1e-7)
    phi_hat, phi_val = _refine(lambda p: _dev(ds.B[None, :], np.asarray(p)[:, None] * ds.t_B).sum(axis=1), 0.0,
                               hi_b, coarse=1e-4, fine=1e-7)
    return s_hat - phi_hat, phi_hat, s_val + phi_val
