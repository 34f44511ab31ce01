"""Command-line interface: ``poisbkg {fit,simulate,moments,df}``.

Every command prints a JSON document with a ``schema_version`` field.
Exit codes: 0 success, 2 invalid input, 3 fit failure (no convergence or
infinite deviance), 4 file I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .data import Method, ParentModel, read_csv
from .efron import estimate_df, optimism
from .errors import ConvergenceError, InfiniteDevianceError, ReplicateError, ValidationError
from .fitting import OptimizerSettings, fit
from .moments import chi2_reference, expected_statistic, gof_zscore
from .parallel import JOBS_ENV, default_jobs
from .simulate import (
    SCHEMA_VERSION,
    GridConfig,
    ecdf,
    load_sample,
    run_grid_detailed,
    write_ecdf_csv,
    write_ecdf_svg,
    write_grid_csv,
    write_samples_json,
)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_CONVERGENCE = 3
EXIT_IO = 4


def _emit(doc: dict, output: str | None) -> None:
    text = json.dumps({"schema_version": SCHEMA_VERSION, **doc}, indent=2, sort_keys=True) + "\n"
    if output:
        Path(output).write_text(text)
    else:
        sys.stdout.write(text)


def _settings(args: argparse.Namespace) -> OptimizerSettings:
    return OptimizerSettings(abs_tol_theta=args.abs_tol, max_evaluations=args.max_evaluations)


def cmd_fit(args: argparse.Namespace) -> int:
    empty_bins = args.empty_bins
    recorded = None
    if args.samples:
        ds, fits, stored_mode = load_sample(args.samples, args.cell, args.realization)
        empty_bins = empty_bins or stored_mode
        recorded = fits.get(Method.parse(args.method).value)
    elif args.dataset:
        ds = read_csv(args.dataset, t_S=args.ts, t_B=args.tb)
    else:
        raise ValidationError("a dataset file or --samples is required")
    outcome = fit(ds, args.method, settings=_settings(args), empty_bins=empty_bins or "profile",
                  allow_negative=args.allow_negative)
    doc = {"command": "fit", "N": ds.N, "t_S": ds.t_S, "t_B": ds.t_B, **outcome.to_dict()}
    if recorded is not None:
        doc["matches_recorded"] = recorded == json.loads(json.dumps(outcome.to_dict()))
    _emit(doc, args.output)
    return EXIT_OK


def _resolve_config(name: str) -> Path:
    """A config path, falling back to the configs shipped with the package."""
    path = Path(name)
    if path.exists():
        return path
    shipped = Path(__file__).parent / "configs" / path.name
    for candidate in (shipped, shipped.with_suffix(".toml")):
        if candidate.exists():
            return candidate
    raise FileNotFoundError(f"config not found: {name}")


def cmd_simulate(args: argparse.Namespace) -> int:
    config_path = _resolve_config(args.config)
    config = GridConfig.from_file(config_path)
    changes = {}
    if args.seed is not None:
        changes["master_seed"] = args.seed
    if args.M is not None:
        changes["M"] = args.M
    if args.df_replicates is not None:
        changes["df_replicates"] = args.df_replicates
    if args.empty_bins is not None:
        changes["empty_bins"] = args.empty_bins
    if changes:
        config = config.replace(**changes)
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    keep = args.keep_samples
    runs = run_grid_detailed(config, jobs=args.jobs, settings=_settings(args), keep_samples=keep)
    stem = config_path.stem
    grid_path = out / f"{stem}.csv"
    write_grid_csv([r.summary for r in runs], grid_path, config.methods)
    written = [str(grid_path)]
    if keep:
        samples = out / f"{stem}_samples.json"
        write_samples_json(runs, config, samples)
        written.append(str(samples))
    if args.ecdf or args.svg:
        for k, run in enumerate(runs):
            s = run.summary
            for m, values in run.theta_hat.items():
                for kind, data in (("theta_hat", values), ("statistic", run.statistic[m])):
                    data = data[~np.isnan(data)]
                    if data.size == 0:
                        continue
                    label = f"{kind} {m.value} theta={s.theta:g} beta={s.beta:g} N={s.N}"
                    series = ecdf(data, label)
                    base = out / f"ecdf_cell{k:02d}_{m.value}_{kind}"
                    if args.ecdf:
                        write_ecdf_csv(series, base.with_suffix(".csv"))
                        written.append(str(base.with_suffix(".csv")))
                    if args.svg:
                        write_ecdf_svg(series, base.with_suffix(".svg"))
                        written.append(str(base.with_suffix(".svg")))
    failed = [r.summary.error for r in runs if r.summary.error]
    _emit({"command": "simulate", "cells": len(runs), "failed_cells": len(failed), "errors": failed,
           "files": written, "config": config.to_dict()}, None)
    return EXIT_OK


def cmd_moments(args: argparse.Namespace) -> int:
    if args.bins < 1:
        raise ValidationError("bins must be >= 1")
    means = [mu for mu in args.mu for _ in range(args.bins)]
    kb = expected_statistic(means, args.df)
    doc = {"command": "moments", "mu": args.mu, "bins": args.bins, "n_bins": len(means), "df": args.df,
           "kb": {"expectation": kb.expectation, "variance": kb.variance}}
    if len(means) > args.df:
        chi = chi2_reference(len(means), args.df)
        doc["chi_squared"] = {"expectation": chi.expectation, "variance": chi.variance}
    if args.observed is not None:
        doc["observed"] = args.observed
        doc["z_kb"] = gof_zscore(args.observed, kb)
        if "chi_squared" in doc:
            doc["z_chi_squared"] = gof_zscore(args.observed, chi)
    _emit(doc, args.output)
    return EXIT_OK


def cmd_df(args: argparse.Namespace) -> int:
    if args.r < 2:
        raise ValidationError("replicates must be ≥ 2")
    parent = ParentModel(args.theta, args.beta)
    est = estimate_df(args.method, parent, args.n, args.ts, args.tb, args.r, args.seed, _settings(args),
                      args.empty_bins or "pegged", not args.no_control_variate, jobs=args.jobs)
    _emit({"command": "df", "method": Method.parse(args.method).value, "theta": parent.theta,
           "beta": parent.beta, "N": args.n, "replicates": est.replicates, "seed": args.seed,
           "df": est.df, "standard_error": est.standard_error, "source": est.source,
           "background": est.background, "optimism": optimism(est.df, args.n)}, args.output)
    return EXIT_OK


def _add_settings(p: argparse.ArgumentParser) -> None:
    p.add_argument("--abs-tol", type=float, default=1e-9, help="absolute tolerance on theta")
    p.add_argument("--max-evaluations", type=int, default=500, help="iteration cap per scalar search")


def _add_empty_bins(p: argparse.ArgumentParser) -> None:
    p.add_argument("--empty-bins", choices=("profile", "pegged"), default=None,
                   help="wstat treatment of bins with no background counts")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="poisbkg", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit one dataset")
    p.add_argument("dataset", nargs="?", help="CSV file with columns x,S,B")
    p.add_argument("--method", required=True, help="joint, wstat or fixed")
    p.add_argument("--ts", type=float, default=None, help="source exposure (default: sidecar or 1)")
    p.add_argument("--tb", type=float, default=None, help="background exposure (default: sidecar or 1)")
    p.add_argument("--allow-negative", action="store_true", help="fixed fit: let theta go below zero")
    p.add_argument("--samples", help="samples JSON written by 'simulate --keep-samples'")
    p.add_argument("--cell", type=int, default=0)
    p.add_argument("--realization", type=int, default=0)
    p.add_argument("-o", "--output", help="write JSON here instead of stdout")
    _add_empty_bins(p)
    _add_settings(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("simulate", help="run a Monte Carlo grid")
    p.add_argument("config", help="grid config (.toml or .json), or the name of a shipped config")
    p.add_argument("-o", "--output-dir", default=".", help="directory for output files")
    p.add_argument("--seed", type=int, default=None, help="override master_seed")
    p.add_argument("--M", type=int, default=None, help="override realizations per cell")
    p.add_argument("--df-replicates", type=int, default=None, help="separate df simulation size")
    p.add_argument("--jobs", type=int, default=None, help=f"worker processes (default ${JOBS_ENV} or 1)")
    p.add_argument("--keep-samples", action="store_true", help="write every realization to JSON")
    p.add_argument("--ecdf", action="store_true", help="write per-cell eCDF CSV files")
    p.add_argument("--svg", action="store_true", help="write per-cell eCDF SVG plots")
    _add_empty_bins(p)
    _add_settings(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("moments", help="expected statistic under the KB and chi-squared references")
    p.add_argument("--mu", type=float, nargs="+", required=True, help="parent mean per bin")
    p.add_argument("--bins", type=int, default=1, help="repeat each mean this many times")
    p.add_argument("--df", type=float, default=0.0, help="fitted (or effective) degrees of freedom")
    p.add_argument("--observed", type=float, default=None, help="observed statistic for a z-score")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_moments)

    p = sub.add_parser("df", help="Monte Carlo effective degrees of freedom")
    p.add_argument("--method", required=True)
    p.add_argument("--theta", type=float, required=True)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--n", type=int, default=100, help="bins per dataset")
    p.add_argument("--r", type=int, default=1000, help="replicates")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ts", type=float, default=1.0)
    p.add_argument("--tb", type=float, default=1.0)
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--no-control-variate", action="store_true", help="plain covariance estimator")
    p.add_argument("-o", "--output")
    _add_empty_bins(p)
    _add_settings(p)
    p.set_defaults(func=cmd_df)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "jobs", None) is None and hasattr(args, "jobs"):
        try:
            args.jobs = default_jobs()
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_VALIDATION
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ConvergenceError, InfiniteDevianceError, ReplicateError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
