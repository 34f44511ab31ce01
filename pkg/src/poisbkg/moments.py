"""Expectation and variance of Poisson deviance statistics.

Per-bin moments are exact sums over the Poisson distribution of the
single-bin deviance at a fixed parent mean; aggregate moments subtract the
number of fitted (or effective) degrees of freedom from the expectation.
"""

from __future__ import annotations

import math
from functools import lru_cache
from typing import Iterable

import numpy as np
from scipy.special import xlogy
from scipy.stats import poisson

from .data import MomentPair
from .errors import ValidationError


def truncation_point(mu: float) -> int:
    """Upper summation index ``ceil(mu + 12 sqrt(mu) + 40)``."""
    return int(math.ceil(mu + 12.0 * math.sqrt(mu) + 40.0))


def _bin_moments(mu: float, k_max: int) -> tuple[float, float]:
    k = np.arange(k_max + 1, dtype=float)
    p = poisson.pmf(k, mu)
    c = 2.0 * ((mu - k) + xlogy(k, k / mu))
    e = float(np.dot(p, c))
    second = float(np.dot(p, c * c))
    return e, max(second - e * e, 0.0)


@lru_cache(maxsize=4096)
def _cached(mu: float) -> tuple[float, float]:
    return _bin_moments(mu, truncation_point(mu))


def kb_bin_moments(mu: float) -> MomentPair:
    """Mean and variance of the single-bin deviance ``C(Y, mu)`` for ``Y ~ Poisson(mu)``."""
    mu = float(mu)
    if not (math.isfinite(mu) and mu > 0):
        raise ValidationError(f"parent mean must be > 0, got {mu}")
    e, v = _cached(mu)
    return MomentPair(e, v, "KB")


def expected_statistic(means: Iterable[float], df: float) -> MomentPair:
    """Aggregate moments ``(sum_i E_i - df, sum_i Var_i)``."""
    if not (math.isfinite(df) and df >= 0):
        raise ValidationError(f"df must be >= 0, got {df}")
    mus = np.atleast_1d(np.asarray(list(means), dtype=float))
    e = 0.0
    v = 0.0
    uniq, counts = np.unique(mus, return_counts=True)
    for mu, n in zip(uniq, counts):
        if not mu > 0:
            raise ValidationError(f"parent mean must be > 0, got {mu}", int(np.flatnonzero(mus == mu)[0]))
        m = kb_bin_moments(mu)
        e += n * m.expectation
        v += n * m.variance
    return MomentPair(float(e - df), float(v), "KB")


def chi2_reference(n_bins: int, df: float) -> MomentPair:
    """Moments of a chi-squared variable with ``n_bins - df`` degrees of freedom."""
    if not n_bins > df or df < 0:
        raise ValidationError(f"need n_bins > df >= 0, got n_bins={n_bins}, df={df}")
    k = n_bins - df
    return MomentPair(float(k), 2.0 * k, "ChiSquared")


def gof_zscore(observed: float, moments: MomentPair) -> float:
    """Standardized deviation ``(observed - E) / sqrt(Var)``."""
    if not moments.variance > 0:
        raise ValidationError("variance must be > 0 for a z-score")
    return (observed - moments.expectation) / math.sqrt(moments.variance)
