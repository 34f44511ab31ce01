"""Poisson regression with a Poisson background.

Three ways to fit a source intensity when the background is only known
through a separate count measurement: a joint fit with a parametric
background, the profile-likelihood (wstat) fit, and a fit that treats the
rescaled background counts as exact. Also provides deviance moments,
Monte Carlo effective degrees of freedom and a seeded simulation harness.
"""

__version__ = "0.1.0"

from .data import (
    FitOutcome,
    Method,
    MethodSummary,
    MomentPair,
    PairedDataset,
    ParentModel,
    SimCellSummary,
    read_csv,
    totals,
    validate,
    write_csv,
)
from .efron import DfEstimate, estimate_df, optimism, verify_optimism
from .errors import ConvergenceError, InfiniteDevianceError, ReplicateError, ValidationError
from .fitting import (
    OptimizerSettings,
    fit,
    fit_fixed,
    fit_joint_constant,
    fit_joint_numeric,
    fit_wstat,
    predicted_counts,
)
from .models import CONSTANT, LinearSource
from .moments import chi2_reference, expected_statistic, gof_zscore, kb_bin_moments
from .sampling import sample_dataset
from .simulate import EcdfSeries, GridConfig, ecdf, run_cell, run_grid
from .stats import cmin_fixed, cmin_joint, deviance, deviance_term, profile_background, wmin

__all__ = [name for name in dir() if not name.startswith("_")]
