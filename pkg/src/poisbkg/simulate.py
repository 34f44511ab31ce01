"""Seeded Monte Carlo grids over constant source and background intensities.

A grid is the product of source intensities, background intensities and
bin counts. Each cell draws ``M`` paired datasets, fits every requested
method, and reduces the results to medians with central-68% offsets. Cell
seeds are derived from the cell's own parameters, so a cell's output does
not depend on which other cells are in the grid or on the order they run.
"""

from __future__ import annotations

import csv
import json
import math
import re
from dataclasses import dataclass, field, fields
from functools import partial
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .data import FitOutcome, Method, MethodSummary, PairedDataset, ParentModel, SimCellSummary
from .efron import df_from_fits, estimate_df
from .errors import ValidationError
from .fitting import DEFAULT_SETTINGS, OptimizerSettings, fit
from .parallel import ordered_map
from .sampling import sample_dataset, stream

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

SCHEMA_VERSION = 1
METHOD_ORDER = (Method.WSTAT, Method.JOINT, Method.FIXED)
UPPER_PCT = 84.1
LOWER_PCT = 15.9

__all__ = [
    "CellRun",
    "EcdfSeries",
    "GridConfig",
    "ecdf",
    "run_cell",
    "run_cell_detailed",
    "run_grid",
    "run_grid_detailed",
    "sample_dataset",
    "write_ecdf_csv",
    "write_ecdf_svg",
    "write_grid_csv",
    "write_samples_json",
]


# -- configuration ----------------------------------------------------------


def _positive_floats(name: str, values: Any) -> tuple[float, ...]:
    if isinstance(values, (int, float)):
        values = [values]
    try:
        out = tuple(float(v) for v in values)
    except (TypeError, ValueError):
        raise ValidationError(f"{name} must be a list of numbers") from None
    if not all(math.isfinite(v) and v > 0 for v in out):
        raise ValidationError(f"{name} must all be > 0")
    return out


@dataclass(frozen=True)
class GridConfig:
    """Monte Carlo grid definition.

    ``df_replicates`` of None (or equal to ``M``) reuses the cell's own
    realizations for the df estimate; any other value runs a separate df
    simulation of that size with the same seed.
    """

    theta_values: tuple[float, ...]
    beta_values: tuple[float, ...]
    N_values: tuple[int, ...] = (100,)
    M: int = 1000
    t_S: float = 1.0
    t_B: float = 1.0
    master_seed: int = 0
    methods: tuple[Method, ...] = METHOD_ORDER
    df_replicates: int | None = None
    empty_bins: str = "pegged"
    control_variate: bool = True

    def __post_init__(self):
        set_ = partial(object.__setattr__, self)
        set_("theta_values", _positive_floats("theta_values", self.theta_values))
        set_("beta_values", _positive_floats("beta_values", self.beta_values))
        Ns = (self.N_values,) if isinstance(self.N_values, int) else tuple(self.N_values)
        if not all(isinstance(n, (int, np.integer)) and not isinstance(n, bool) and n >= 1 for n in Ns):
            raise ValidationError("N_values must be integers >= 1")
        set_("N_values", tuple(int(n) for n in Ns))
        if isinstance(self.M, bool) or not isinstance(self.M, (int, np.integer)) or self.M < 1:
            raise ValidationError("M must be an integer >= 1")
        for name in ("t_S", "t_B"):
            v = float(getattr(self, name))
            if not (math.isfinite(v) and v > 0):
                raise ValidationError(f"exposure must be positive: {name}={v}")
            set_(name, v)
        if not isinstance(self.master_seed, (int, np.integer)) or not 0 <= self.master_seed < 2**64:
            raise ValidationError("master_seed must be a 64-bit non-negative integer")
        set_("methods", tuple(Method.parse(m) for m in self.methods))
        if self.df_replicates is not None and self.df_replicates < 2:
            raise ValidationError("replicates must be ≥ 2")
        if self.empty_bins not in ("profile", "pegged"):
            raise ValidationError(f"empty_bins must be 'profile' or 'pegged', got {self.empty_bins!r}")

    def cells(self) -> list[tuple[float, float, int]]:
        """``(theta, beta, N)`` in table order: N, then background, then source."""
        return [(th, be, n) for n in self.N_values for be in self.beta_values for th in self.theta_values]

    def replace(self, **changes) -> "GridConfig":
        data = {f.name: getattr(self, f.name) for f in fields(self)}
        data.update(changes)
        return GridConfig(**data)

    def to_dict(self) -> dict:
        return {
            "theta_values": list(self.theta_values),
            "beta_values": list(self.beta_values),
            "N_values": list(self.N_values),
            "M": self.M,
            "t_S": self.t_S,
            "t_B": self.t_B,
            "master_seed": self.master_seed,
            "methods": [m.value for m in self.methods],
            "df_replicates": self.df_replicates,
            "empty_bins": self.empty_bins,
            "control_variate": self.control_variate,
        }

    @classmethod
    def from_mapping(cls, data: dict, text: str | None = None, origin: str = "<config>") -> "GridConfig":
        aliases = {"theta": "theta_values", "beta": "beta_values", "N": "N_values", "n_values": "N_values",
                   "seed": "master_seed", "R": "df_replicates", "replicates": "df_replicates"}
        names = {f.name for f in fields(cls)}
        kwargs = {}
        for key, value in data.items():
            name = aliases.get(key, key)
            if name not in names:
                raise ValidationError(f"{origin}{_where(text, key)}: unknown key {key!r}")
            kwargs[name] = value
        for required in ("theta_values", "beta_values"):
            if required not in kwargs:
                raise ValidationError(f"{origin}: missing required key {required!r}")
        try:
            return cls(**kwargs)
        except ValidationError as exc:
            key = _guess_key(str(exc), kwargs)
            raise ValidationError(f"{origin}{_where(text, key, aliases)}: {exc}") from None
        except TypeError as exc:
            raise ValidationError(f"{origin}: {exc}") from None

    @classmethod
    def from_file(cls, path: str | Path) -> "GridConfig":
        """Load a TOML (``.toml``) or JSON file; errors carry line numbers."""
        path = Path(path)
        text = path.read_text()
        if path.suffix.lower() == ".json":
            try:
                data = json.loads(text)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{path}:{exc.lineno}: {exc.msg}") from None
        else:
            try:
                data = tomllib.loads(text)
            except tomllib.TOMLDecodeError as exc:
                line = re.search(r"line (\d+)", str(exc))
                where = f":{line.group(1)}" if line else ""
                raise ValidationError(f"{path}{where}: {exc}") from None
        if "grid" in data and isinstance(data["grid"], dict) and len(data) == 1:
            data = data["grid"]
        return cls.from_mapping(data, text, str(path))


def _guess_key(message: str, kwargs: dict) -> str | None:
    for key in kwargs:
        if key in message:
            return key
    return None


def _where(text: str | None, key: str | None, aliases: dict | None = None) -> str:
    if text is None or key is None:
        return ""
    candidates = [key] + [a for a, k in (aliases or {}).items() if k == key]
    for lineno, line in enumerate(text.splitlines(), start=1):
        for cand in candidates:
            if re.match(rf'\s*"?{re.escape(cand)}"?\s*[=:]', line):
                return f":{lineno}"
    return ""


# -- per-cell simulation ----------------------------------------------------


@dataclass
class CellRun:
    """Full per-realization results of one cell."""

    summary: SimCellSummary
    theta_hat: dict[Method, np.ndarray]
    statistic: dict[Method, np.ndarray]
    at_boundary: dict[Method, np.ndarray]
    datasets: list[PairedDataset] = field(default_factory=list)
    outcomes: dict[Method, list[FitOutcome | str]] = field(default_factory=dict)


def _band(values: np.ndarray) -> tuple[float, float, float]:
    if values.size == 0:
        return math.nan, math.nan, math.nan
    med = float(np.median(values))
    hi, lo = np.percentile(values, [UPPER_PCT, LOWER_PCT])
    return med, float(hi) - med, med - float(lo)


def run_cell_detailed(theta: float, beta: float, N: int, M: int, t_S: float = 1.0, t_B: float = 1.0,
                      methods: Sequence[Method | str] = METHOD_ORDER, seed: int = 0,
                      df_replicates: int | None = None, empty_bins: str = "pegged",
                      control_variate: bool = True, settings: OptimizerSettings = DEFAULT_SETTINGS,
                      keep_samples: bool = False) -> CellRun:
    """Simulate one cell and keep every realization's estimates."""
    parent = ParentModel(theta, beta)
    methods = tuple(Method.parse(m) for m in methods)
    if M < 1:
        raise ValidationError("M must be >= 1")
    datasets = [sample_dataset(parent, N, t_S, t_B, stream(seed, theta, beta, N, r)) for r in range(M)]
    outcomes: dict[Method, list[FitOutcome | str]] = {m: [] for m in methods}
    for ds in datasets:
        for m in methods:
            try:
                outcomes[m].append(fit(ds, m, settings=settings, empty_bins=empty_bins))
            except Exception as exc:  # noqa: BLE001 - recorded per realization
                outcomes[m].append(f"{type(exc).__name__}: {exc}")

    summaries: dict[Method, MethodSummary] = {}
    theta_hat, stat, boundary = {}, {}, {}
    errors = []
    for m in methods:
        ok = [(d, o) for d, o in zip(datasets, outcomes[m]) if isinstance(o, FitOutcome)]
        failed = M - len(ok)
        th = np.array([o.theta_hat if isinstance(o, FitOutcome) else math.nan for o in outcomes[m]])
        st = np.array([o.statistic if isinstance(o, FitOutcome) else math.nan for o in outcomes[m]])
        bd = np.array([isinstance(o, FitOutcome) and o.at_boundary for o in outcomes[m]])
        theta_hat[m], stat[m], boundary[m] = th, st, bd
        if failed > 0.01 * M:
            first = next(o for o in outcomes[m] if isinstance(o, str))
            errors.append(f"{m.value}: {failed} of {M} fits failed ({first})")
        good = ~np.isnan(th)
        s_med, s_hi, s_lo = _band(st[good])
        b_med, b_hi, b_lo = _band((th[good] - theta) / theta)
        df, df_se = math.nan, math.nan
        if df_replicates is None or df_replicates == M:
            if len(ok) >= 2:
                est = df_from_fits([d for d, _ in ok], [o for _, o in ok], parent, control_variate)
                df, df_se = est.df, est.standard_error
        else:
            est = estimate_df(m, parent, N, t_S, t_B, df_replicates, seed, settings, empty_bins,
                              control_variate, jobs=1)
            df, df_se = est.df, est.standard_error
        summaries[m] = MethodSummary(s_med, s_hi, s_lo, b_med, b_hi, b_lo, df, df_se,
                                     n_failed=failed, boundary_fraction=float(bd.mean()))
    summary = SimCellSummary(theta=float(theta), beta=float(beta), N=int(N), M=int(M), seed=int(seed),
                             methods=summaries, error="; ".join(errors) or None)
    return CellRun(summary, theta_hat, stat, boundary,
                   datasets if keep_samples else [], outcomes if keep_samples else {})


def run_cell(theta: float, beta: float, N: int, M: int, t_S: float = 1.0, t_B: float = 1.0,
             methods: Sequence[Method | str] = METHOD_ORDER, seed: int = 0,
             df_replicates: int | None = None, empty_bins: str = "pegged",
             control_variate: bool = True, settings: OptimizerSettings = DEFAULT_SETTINGS) -> SimCellSummary:
    """Table-row summary of one cell: medians, 68% offsets and df per method."""
    return run_cell_detailed(theta, beta, N, M, t_S, t_B, methods, seed, df_replicates, empty_bins,
                             control_variate, settings).summary


def _grid_cell(cell: tuple[float, float, int], config: GridConfig, settings: OptimizerSettings,
               keep_samples: bool) -> CellRun:
    theta, beta, N = cell
    try:
        return run_cell_detailed(theta, beta, N, config.M, config.t_S, config.t_B, config.methods,
                                 config.master_seed, config.df_replicates, config.empty_bins,
                                 config.control_variate, settings, keep_samples)
    except Exception as exc:  # noqa: BLE001 - the grid continues past a failed cell
        summary = SimCellSummary(theta=theta, beta=beta, N=N, M=config.M, seed=config.master_seed,
                                 methods={}, error=f"{type(exc).__name__}: {exc}")
        return CellRun(summary, {}, {}, {})


def run_grid_detailed(config: GridConfig, jobs: int | None = None, settings: OptimizerSettings = DEFAULT_SETTINGS,
                      keep_samples: bool = False) -> list[CellRun]:
    work = partial(_grid_cell, config=config, settings=settings, keep_samples=keep_samples)
    return ordered_map(work, config.cells(), jobs)


def run_grid(config: GridConfig, jobs: int | None = None,
             settings: OptimizerSettings = DEFAULT_SETTINGS) -> list[SimCellSummary]:
    """One summary per cell, in table order."""
    return [run.summary for run in run_grid_detailed(config, jobs, settings)]


# -- empirical CDF ----------------------------------------------------------


@dataclass(frozen=True)
class EcdfSeries:
    values: np.ndarray
    probabilities: np.ndarray
    label: str = ""

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        p = np.array(self.probabilities, dtype=float)
        if v.shape != p.shape or v.size == 0:
            raise ValidationError("ecdf needs matching, non-empty value and probability arrays")
        if np.any(np.diff(v) < 0):
            raise ValidationError("ecdf values must be non-decreasing")
        if np.any(np.diff(p) <= 0) or p[-1] != 1.0:
            raise ValidationError("ecdf probabilities must increase strictly to 1")
        v.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "probabilities", p)

    def __call__(self, x: float | np.ndarray) -> float | np.ndarray:
        """Right-continuous ``F(x) = #{values <= x} / M``."""
        out = np.searchsorted(self.values, x, side="right") / self.values.size
        return float(out) if np.ndim(out) == 0 else out

    def jump(self, x: float) -> float:
        """Probability mass at ``x``."""
        return float(np.count_nonzero(self.values == x) / self.values.size)


def ecdf(samples: Iterable[float], label: str = "") -> EcdfSeries:
    """Empirical CDF with the k-th order statistic at probability ``k/M``."""
    v = np.sort(np.asarray(list(samples), dtype=float))
    if v.size == 0:
        raise ValidationError("ecdf needs at least one sample")
    if np.any(np.isnan(v)):
        raise ValidationError("ecdf samples must not be NaN")
    p = np.arange(1, v.size + 1) / v.size
    return EcdfSeries(v, p, label)


# -- writers ----------------------------------------------------------------


def _fmt(value: float) -> str:
    return format(value, ".10g")


def grid_columns(methods: Sequence[Method]) -> list[str]:
    cols = ["theta", "beta", "N", "M"]
    for m in METHOD_ORDER:
        if m in methods:
            p = m.value
            cols += [f"{p}_stat", f"{p}_stat_plus", f"{p}_stat_minus", f"{p}_bias", f"{p}_bias_plus",
                     f"{p}_bias_minus", f"{p}_df", f"{p}_df_se", f"{p}_failed", f"{p}_boundary_fraction"]
    return cols + ["error"]


def write_grid_csv(summaries: Sequence[SimCellSummary], path: str | Path,
                   methods: Sequence[Method] = METHOD_ORDER) -> None:
    """One row per cell; per method: statistic band, bias band and df."""
    methods = [Method.parse(m) for m in methods]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(grid_columns(methods))
        for s in summaries:
            row = [_fmt(s.theta), _fmt(s.beta), s.N, s.M]
            for m in METHOD_ORDER:
                if m not in methods:
                    continue
                ms = s.methods.get(m)
                if ms is None:
                    row += [""] * 10
                    continue
                row += [_fmt(v) for v in (ms.stat_median, ms.stat_plus, ms.stat_minus, ms.bias_median,
                                          ms.bias_plus, ms.bias_minus, ms.df, ms.df_se)]
                row += [ms.n_failed, _fmt(ms.boundary_fraction)]
            row.append(s.error or "")
            w.writerow(row)


def write_ecdf_csv(series: EcdfSeries, path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["value", "probability"])
        for v, p in zip(series.values, series.probabilities):
            w.writerow([_fmt(v), _fmt(p)])


def write_ecdf_svg(series: EcdfSeries, path: str | Path, width: int = 480, height: int = 320) -> None:
    """Standalone SVG step plot of the eCDF."""
    pad = 40
    v, p = series.values, series.probabilities
    lo, hi = float(v[0]), float(v[-1])
    span = hi - lo or 1.0

    def sx(x: float) -> float:
        return pad + (x - lo) / span * (width - 2 * pad)

    def sy(y: float) -> float:
        return height - pad - y * (height - 2 * pad)

    points = [(sx(lo), sy(0.0))]
    prev = 0.0
    for x, y in zip(v, p):
        points.append((sx(x), sy(prev)))
        points.append((sx(x), sy(y)))
        prev = y
    path_d = " ".join(f"{x:.2f},{y:.2f}" for x, y in points)
    label = (series.label or "eCDF").replace("&", "&amp;").replace("<", "&lt;")
    svg = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">\n'
        f'<rect width="100%" height="100%" fill="white"/>\n'
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>\n'
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>\n'
        f'<polyline fill="none" stroke="steelblue" stroke-width="1.5" points="{path_d}"/>\n'
        f'<text x="{width / 2:.0f}" y="{pad / 2:.0f}" text-anchor="middle" font-size="14">{label}</text>\n'
        f'<text x="{pad}" y="{height - pad / 3:.0f}" font-size="11">{_fmt(lo)}</text>\n'
        f'<text x="{width - pad}" y="{height - pad / 3:.0f}" text-anchor="end" font-size="11">{_fmt(hi)}</text>\n'
        "</svg>\n"
    )
    Path(path).write_text(svg)


def write_samples_json(runs: Sequence[CellRun], config: GridConfig, path: str | Path) -> None:
    """Per-realization datasets and fit records for every cell."""
    cells = []
    for run in runs:
        s = run.summary
        reals = []
        for r, ds in enumerate(run.datasets):
            fits = {}
            for m, outs in run.outcomes.items():
                o = outs[r]
                fits[m.value] = o.to_dict() if isinstance(o, FitOutcome) else {"error": o}
            reals.append({"index": r, "S": ds.S.tolist(), "B": ds.B.tolist(), "fits": fits})
        cells.append({"theta": s.theta, "beta": s.beta, "N": s.N, "seed": s.seed, "error": s.error,
                      "realizations": reals})
    doc = {"schema_version": SCHEMA_VERSION, "config": config.to_dict(), "cells": cells}
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def load_sample(path: str | Path, cell: int, realization: int) -> tuple[PairedDataset, dict, str]:
    """Dataset, recorded fits and wstat ``empty_bins`` setting of one stored realization."""
    doc = json.loads(Path(path).read_text())
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ValidationError(f"{path}: unsupported schema_version {doc.get('schema_version')!r}")
    try:
        rec = doc["cells"][cell]["realizations"][realization]
    except (IndexError, KeyError):
        raise ValidationError(f"{path}: no realization {realization} in cell {cell}") from None
    cfg = doc["config"]
    ds = PairedDataset(S=rec["S"], B=rec["B"], t_S=cfg["t_S"], t_B=cfg["t_B"])
    return ds, rec["fits"], cfg["empty_bins"]
