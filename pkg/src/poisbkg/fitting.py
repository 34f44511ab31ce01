"""Maximum-likelihood fits for the three background treatments.

* joint: source and background both parametric (constant background ``phi``);
* wstat: background profiled out bin by bin;
* fixed: rescaled background counts taken as the true background.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .data import FitOutcome, Method, PairedDataset, validate
from .errors import ConvergenceError, InfiniteDevianceError, ValidationError
from .models import CONSTANT, LinearSource, is_constant
from .stats import EmptyBins, _profile, _wmin, cmin_fixed, cmin_joint, profile_background


@dataclass(frozen=True)
class OptimizerSettings:
    """Tolerances for the scalar searches.

    ``max_evaluations`` caps the iterations of each scalar search and the
    number of coordinate sweeps of the numeric joint fit.
    """

    abs_tol_theta: float = 1e-9
    max_evaluations: int = 500
    theta_upper_factor: float = 3.0

    def __post_init__(self):
        if not self.abs_tol_theta > 0:
            raise ValidationError("abs_tol_theta must be > 0")
        if not self.theta_upper_factor > 0:
            raise ValidationError("theta_upper_factor must be > 0")
        if self.max_evaluations < 10:
            raise ValidationError("max_evaluations must be >= 10")


DEFAULT_SETTINGS = OptimizerSettings()


class _Counter:
    def __init__(self, fn: Callable[[float], float]):
        self.fn = fn
        self.calls = 0

    def __call__(self, t: float) -> float:
        self.calls += 1
        return self.fn(t)


def _increasing_root(g: Callable[[float], float], edge: float, hi: float, xtol: float,
                     maxiter: int) -> tuple[float, bool]:
    """Root of a strictly increasing ``g`` on ``(edge, inf)``.

    Returns ``(root, on_edge)``; ``on_edge`` means ``g > 0`` all the way down
    to ``edge`` so the constrained minimizer sits on the boundary.
    """
    for _ in range(200):
        if g(hi) > 0:
            break
        hi = edge + 2.0 * (hi - edge)
    else:
        raise ConvergenceError("could not bracket the score root from above", best=hi)
    lo = None
    span = hi - edge
    for k in range(1, 64):
        p = edge + span * 0.5**k
        if p <= edge:
            break
        if g(p) <= 0:
            lo = p
            break
    if lo is None:
        return edge + 0.0, True
    if g(lo) == 0:
        return lo, False
    root = brentq(g, lo, hi, xtol=xtol, rtol=4 * np.finfo(float).eps, maxiter=maxiter)
    return root, False


def fit_joint_constant(dataset: PairedDataset) -> FitOutcome:
    """Closed-form joint fit of a constant source on a constant background.

    ``phi = n_B / (N t_B)`` and ``theta = n_S / (N t_S) - phi``. A negative
    source estimate is reported as-is, with a warning attached.
    """
    validate(dataset)
    N = dataset.N
    phi = dataset.n_B / (N * dataset.t_B)
    theta = dataset.n_S / (N * dataset.t_S) - phi
    warnings = ("negative source estimate",) if theta < 0 else ()
    return FitOutcome(
        method=Method.JOINT,
        theta_hat=theta,
        background_hat=[phi],
        statistic=cmin_joint(dataset, theta, phi),
        at_boundary=False,
        converged=True,
        evaluations=1,
        n_source=dataset.n_S,
        n_background=dataset.n_B,
        warnings=warnings,
    )


def fit_joint_numeric(dataset: PairedDataset, source_model: LinearSource = CONSTANT,
                      settings: OptimizerSettings = DEFAULT_SETTINGS) -> FitOutcome:
    """Joint fit by alternating bracketed solves of the two score equations.

    The search runs in ``(a, phi)`` where ``a = theta * max(T) + phi`` is the
    source-region mean of the bin with the largest template value. In these
    coordinates the feasible set (every mean non-negative) is the box
    ``a >= 0, phi >= 0``, so coordinate steps cannot stall against a slanted
    constraint. Each score is monotone along its own coordinate and every
    step is a bracketed root search. For a constant template the two
    coordinates decouple and one sweep is exact.
    """
    validate(dataset)
    S = dataset.S.astype(float)
    tS, tB, N = dataset.t_S, dataset.t_B, dataset.N
    T = source_model.template(dataset.x)
    if not np.any(T > 0):
        raise ValidationError("source shape is zero in every bin")
    Tmax = T.max()
    w = T / Tmax
    nS, nB = S.sum(), float(dataset.n_B)
    xtol = settings.abs_tol_theta * 1e-3
    calls = 0

    def src_ratio(a: float, phi: float) -> np.ndarray:
        m = a * w + phi * (1.0 - w)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(S > 0, S / m, 0.0)

    def a_score(a: float) -> float:
        nonlocal calls
        calls += 1
        return float(np.sum(w * (tS - src_ratio(a, phi))))

    def phi_score(p: float) -> float:
        nonlocal calls
        calls += 1
        bkg = nB / p if nB > 0 else 0.0
        return float(np.sum((1.0 - w) * (tS - src_ratio(a, p))) + N * tB - bkg)

    a_hi = nS / (tS * w.sum()) + 1.0
    phi_hi = (nS + nB) / (N * tB) + 1.0
    phi = nB / (N * tB)
    a, a_edge = _increasing_root(a_score, 0.0, a_hi, xtol, settings.max_evaluations)
    converged = False
    for _ in range(settings.max_evaluations):
        new_phi, phi_edge = _increasing_root(phi_score, 0.0, phi_hi, xtol, settings.max_evaluations)
        delta = abs(new_phi - phi)
        phi = new_phi
        new_a, a_edge = _increasing_root(a_score, 0.0, a_hi, xtol, settings.max_evaluations)
        delta = max(delta, abs(new_a - a))
        a = new_a
        if delta < settings.abs_tol_theta * 1e-2:
            converged = True
            break
    theta = (a - phi) / Tmax + 0.0
    if not converged:
        raise ConvergenceError("joint fit did not converge", best=(theta, phi))
    warnings = ("negative source estimate",) if theta < 0 else ()
    return FitOutcome(
        method=Method.JOINT,
        theta_hat=theta,
        background_hat=[phi],
        statistic=cmin_joint(dataset, theta, phi, source_model),
        at_boundary=bool(a_edge or phi_edge),
        converged=True,
        evaluations=calls,
        n_source=dataset.n_S,
        n_background=dataset.n_B,
        warnings=warnings,
    )


def fit_fixed(dataset: PairedDataset, source_model: LinearSource = CONSTANT,
              settings: OptimizerSettings = DEFAULT_SETTINGS, allow_negative: bool = False) -> FitOutcome:
    """Fit with the rescaled background counts ``B_i / t_B`` held fixed.

    Solves the score equation ``sum_i T_i S_i / (theta T_i + B_i/t_B) = t_S sum_i T_i``
    (``T_i = 1`` for the constant model). The left side is strictly
    decreasing in ``theta``, so the root is bracketed and unique.

    By default ``theta`` is restricted to ``theta >= 0``; when the score is
    already negative at zero the fit lands on that boundary. With
    ``allow_negative=True`` the search extends down to the smallest ``theta``
    that keeps every model mean non-negative.
    """
    validate(dataset)
    S = dataset.S.astype(float)
    c = dataset.B.astype(float) / dataset.t_B
    tS = dataset.t_S
    T = source_model.template(dataset.x)
    dead = (T == 0) & (c == 0) & (S > 0)
    if np.any(dead):
        raise InfiniteDevianceError("bin with counts but zero model mean for every theta",
                                    int(np.flatnonzero(dead)[0]))
    live = T > 0
    if not np.any(live):
        raise ValidationError("source shape is zero in every bin")
    edge = 0.0
    if allow_negative:
        edge = min(0.0, float(-np.min(c[live] / T[live])))
    calls = 0

    def neg_score(t: float) -> float:
        nonlocal calls
        calls += 1
        m = t * T + c
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(S > 0, T * S / m, 0.0)
        return float(tS * T.sum() - terms.sum())

    hi = S.sum() / (tS * T.sum()) + 1.0
    theta, on_edge = _increasing_root(neg_score, edge, hi, settings.abs_tol_theta * 1e-3,
                                      settings.max_evaluations)
    warnings = ("negative source estimate",) if theta < 0 else ()
    return FitOutcome(
        method=Method.FIXED,
        theta_hat=theta,
        background_hat=c,
        statistic=cmin_fixed(dataset, theta, source_model),
        at_boundary=bool(on_edge),
        converged=True,
        evaluations=calls,
        n_source=dataset.n_S,
        n_background=dataset.n_B,
        warnings=warnings,
    )


def fit_wstat(dataset: PairedDataset, source_model: LinearSource = CONSTANT,
              settings: OptimizerSettings = DEFAULT_SETTINGS, empty_bins: EmptyBins = "profile") -> FitOutcome:
    """Minimize the profile-likelihood statistic over ``theta >= 0``.

    Uses bounded Brent minimization on ``[0, theta_max]``. If the objective
    at ``theta = 0`` is within ``abs_tol_theta`` of the interior optimum the
    fit is reported on the boundary.

    ``empty_bins`` selects how bins with ``B_i = 0`` enter the objective
    (see :func:`poisbkg.stats.profile_background`). The reported
    ``background_hat`` is always the constrained maximizer at ``theta_hat``.
    """
    validate(dataset)
    S = dataset.S.astype(float)
    B = dataset.B.astype(float)
    tS, tB = dataset.t_S, dataset.t_B
    T = source_model.template(dataset.x)
    if not np.any(T > 0):
        raise ValidationError("source shape is zero in every bin")

    def objective(t: float) -> float:
        try:
            return _wmin(S, B, t * T, tS, tB, empty_bins)
        except InfiniteDevianceError:
            return math.inf

    f = _Counter(objective)
    theta_max = settings.theta_upper_factor * max(1.0, S.max() / tS) / T[T > 0].min()
    for _ in range(60):
        res = minimize_scalar(f, bounds=(0.0, theta_max), method="bounded",
                              options={"xatol": settings.abs_tol_theta, "maxiter": settings.max_evaluations})
        if res.x < theta_max * (1 - 1e-6):
            break
        theta_max *= 2.0
    if not res.success:
        raise ConvergenceError(f"wstat fit did not converge: {res.message}", best=float(res.x))
    theta, best = float(res.x), float(res.fun)
    at_zero = f(0.0)
    at_boundary = at_zero <= best + settings.abs_tol_theta
    if at_boundary:
        theta, best = 0.0, at_zero
    if not math.isfinite(best):
        raise InfiniteDevianceError("wstat objective is infinite at the optimum")
    return FitOutcome(
        method=Method.WSTAT,
        theta_hat=theta,
        background_hat=profile_background(dataset, theta, source_model).b_hat,
        statistic=best,
        at_boundary=bool(at_boundary),
        converged=True,
        evaluations=f.calls,
        n_source=dataset.n_S,
        n_background=dataset.n_B,
    )


def fit(dataset: PairedDataset, method: Method | str, source_model: LinearSource = CONSTANT,
        settings: OptimizerSettings = DEFAULT_SETTINGS, empty_bins: EmptyBins = "profile",
        allow_negative: bool = False) -> FitOutcome:
    """Dispatch to the fitter for ``method``."""
    method = Method.parse(method)
    if method is Method.JOINT:
        if is_constant(source_model):
            return fit_joint_constant(dataset)
        return fit_joint_numeric(dataset, source_model, settings)
    if method is Method.WSTAT:
        return fit_wstat(dataset, source_model, settings, empty_bins=empty_bins)
    return fit_fixed(dataset, source_model, settings, allow_negative=allow_negative)


def predicted_counts(dataset: PairedDataset, outcome: FitOutcome,
                     source_model: LinearSource = CONSTANT) -> tuple[np.ndarray, np.ndarray | None]:
    """Fitted mean counts ``(source_region, background_region)``.

    The background-region prediction is None for the fixed-background fit,
    which has no model for those counts.
    """
    mu = source_model.mean(dataset.x, outcome.theta_hat)
    bhat = outcome.background_hat
    if outcome.method is Method.JOINT:
        phi = float(bhat[0])
        return (mu + phi) * dataset.t_S, np.full(dataset.N, phi * dataset.t_B)
    if outcome.method is Method.WSTAT:
        return (mu + bhat) * dataset.t_S, bhat * dataset.t_B
    return (mu + bhat) * dataset.t_S, None


# -- low-source approximations ---------------------------------------------


def approx_fixed_theta(dataset: PairedDataset) -> float:
    """First-order solution of the fixed-background score for ``theta << B_i/t_B``.

    ``(sum S_i/c_i - N t_S) / sum S_i/c_i^2`` with ``c_i = B_i/t_B``; only
    bins with ``B_i > 0`` contribute.
    """
    S = dataset.S.astype(float)
    c = dataset.B.astype(float) / dataset.t_B
    keep = c > 0
    return float((np.sum(S[keep] / c[keep]) - keep.sum() * dataset.t_S) / np.sum(S[keep] / c[keep] ** 2))


def approx_wstat_theta(dataset: PairedDataset, b_hat: np.ndarray) -> float:
    """First-order wstat solution for background-dominated data (``t_S = t_B = 1``).

    With ``d b_hat/d theta ~ -1/2`` the score reduces to
    ``theta ~ (sum S_i/b_i - sum B_i/b_i) / sum S_i/b_i^2``.
    """
    S = dataset.S.astype(float)
    B = dataset.B.astype(float)
    b = np.asarray(b_hat, dtype=float)
    keep = b > 0
    return float((np.sum(S[keep] / b[keep]) - np.sum(B[keep] / b[keep])) / np.sum(S[keep] / b[keep] ** 2))
