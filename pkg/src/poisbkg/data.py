"""Datasets, parent models and result records.

Everything here is immutable once built. Arrays held by the dataclasses are
flagged read-only so instances can be shared across worker processes.
"""

from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ValidationError


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


def _as_counts(values) -> np.ndarray:
    a = np.asarray(values)
    if a.dtype.kind in "iu":
        return a.astype(np.int64)
    if a.dtype.kind in "fb" and a.size and np.all(np.isfinite(a)) and np.all(a == np.round(a)):
        return a.astype(np.int64)
    if a.size == 0:
        return a.astype(np.int64)
    return a


class Method(str, enum.Enum):
    JOINT = "joint"
    WSTAT = "wstat"
    FIXED = "fixed"

    @classmethod
    def parse(cls, value: "Method | str") -> "Method":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        aliases = {
            "joint": cls.JOINT,
            "wstat": cls.WSTAT,
            "w": cls.WSTAT,
            "fixed": cls.FIXED,
            "fixedbackground": cls.FIXED,
            "fixed_background": cls.FIXED,
            "fb": cls.FIXED,
        }
        try:
            return aliases[key]
        except KeyError:
            raise ValidationError(f"unknown method {value!r}") from None


@dataclass(frozen=True)
class PairedDataset:
    """Source and background counts on a common grid.

    ``S`` are the source-region counts, ``B`` the background-region counts,
    ``t_S``/``t_B`` the area-times-exposure products of the two regions.
    """

    S: np.ndarray
    B: np.ndarray
    t_S: float = 1.0
    t_B: float = 1.0
    x: np.ndarray | None = None

    def __post_init__(self):
        S = _as_counts(self.S)
        B = _as_counts(self.B)
        x = np.arange(S.shape[0], dtype=float) if self.x is None else np.asarray(self.x, dtype=float)
        object.__setattr__(self, "S", _frozen(S))
        object.__setattr__(self, "B", _frozen(B))
        object.__setattr__(self, "x", _frozen(x))
        object.__setattr__(self, "t_S", float(self.t_S))
        object.__setattr__(self, "t_B", float(self.t_B))

    @property
    def N(self) -> int:
        return int(self.S.shape[0])

    @property
    def n_S(self) -> int:
        return int(self.S.sum())

    @property
    def n_B(self) -> int:
        return int(self.B.sum())

    def __eq__(self, other):
        if not isinstance(other, PairedDataset):
            return NotImplemented
        return (
            self.t_S == other.t_S
            and self.t_B == other.t_B
            and np.array_equal(self.S, other.S)
            and np.array_equal(self.B, other.B)
            and np.array_equal(self.x, other.x)
        )

    __hash__ = None  # type: ignore[assignment]


def _check_counts(name: str, a: np.ndarray) -> None:
    if a.ndim != 1:
        raise ValidationError(f"{name} must be one-dimensional")
    if a.dtype.kind not in "iu":
        bad = np.flatnonzero(~np.isfinite(a) | (a != np.round(a)))
        raise ValidationError(f"{name} counts must be integers", int(bad[0]) if bad.size else None)
    neg = np.flatnonzero(a < 0)
    if neg.size:
        raise ValidationError(f"{name} counts must be non-negative", int(neg[0]))


def validate(dataset: PairedDataset) -> PairedDataset:
    """Return ``dataset`` unchanged if every structural invariant holds.

    Raises :class:`ValidationError` naming the offending index otherwise.
    """
    S, B, x = dataset.S, dataset.B, dataset.x
    if S.ndim != 1 or B.ndim != 1 or x.ndim != 1:
        raise ValidationError("x, S and B must be one-dimensional")
    if not (S.shape == B.shape == x.shape):
        raise ValidationError(f"length mismatch: x={x.size}, S={S.size}, B={B.size}")
    if S.size < 1:
        raise ValidationError("dataset must have at least one bin")
    _check_counts("S", S)
    _check_counts("B", B)
    for name, t in (("t_S", dataset.t_S), ("t_B", dataset.t_B)):
        if not (math.isfinite(t) and t > 0):
            raise ValidationError(f"exposure must be positive: {name}={t}")
    if not np.all(np.isfinite(x)):
        raise ValidationError("x must be finite", int(np.flatnonzero(~np.isfinite(x))[0]))
    steps = np.flatnonzero(np.diff(x) <= 0)
    if steps.size:
        raise ValidationError("x values must be strictly increasing", int(steps[0]) + 1)
    return dataset


def totals(dataset: PairedDataset) -> tuple[int, int]:
    """Total source and background counts ``(n_S, n_B)``."""
    return dataset.n_S, dataset.n_B


@dataclass(frozen=True)
class ParentModel:
    """Parent intensities for a constant source ``theta`` on a constant background ``beta``.

    Intensities are per unit exposure; ``lambda_i = (theta + beta) * t_S``
    and ``beta_i = beta * t_B``.
    """

    theta: float
    beta: float

    def __post_init__(self):
        for name in ("theta", "beta"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValidationError(f"{name} must be finite and >= 0, got {v}")
        object.__setattr__(self, "theta", float(self.theta))
        object.__setattr__(self, "beta", float(self.beta))

    def source_mean(self, t_S: float = 1.0) -> float:
        return (self.theta + self.beta) * t_S

    def background_mean(self, t_B: float = 1.0) -> float:
        return self.beta * t_B


@dataclass(frozen=True)
class FitOutcome:
    method: Method
    theta_hat: float
    background_hat: np.ndarray
    statistic: float
    at_boundary: bool = False
    converged: bool = True
    evaluations: int = 0
    n_source: int = 0
    n_background: int = 0
    warnings: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "method", Method.parse(self.method))
        object.__setattr__(self, "background_hat", _frozen(np.atleast_1d(np.asarray(self.background_hat, dtype=float))))
        object.__setattr__(self, "theta_hat", float(self.theta_hat))
        object.__setattr__(self, "statistic", float(self.statistic))

    @property
    def n_S(self) -> int:
        return self.n_source

    @property
    def n_B(self) -> int:
        return self.n_background

    def to_dict(self) -> dict:
        return {
            "method": self.method.value,
            "theta_hat": self.theta_hat,
            "background_hat": self.background_hat.tolist(),
            "statistic": self.statistic,
            "at_boundary": self.at_boundary,
            "converged": self.converged,
            "evaluations": self.evaluations,
            "n_S": self.n_source,
            "n_B": self.n_background,
            "warnings": list(self.warnings),
        }


@dataclass(frozen=True)
class MomentPair:
    expectation: float
    variance: float
    kind: str = "KB"

    def __post_init__(self):
        if not self.variance >= 0:
            raise ValidationError(f"variance must be >= 0, got {self.variance}")
        if self.kind not in ("KB", "ChiSquared"):
            raise ValidationError(f"unknown moment kind {self.kind!r}")

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)


@dataclass(frozen=True)
class MethodSummary:
    """One method's columns of a grid summary row."""

    stat_median: float
    stat_plus: float
    stat_minus: float
    bias_median: float
    bias_plus: float
    bias_minus: float
    df: float
    df_se: float
    n_failed: int = 0
    boundary_fraction: float = 0.0


@dataclass(frozen=True)
class SimCellSummary:
    theta: float
    beta: float
    N: int
    M: int
    seed: int
    methods: dict = field(default_factory=dict)
    error: str | None = None

    def __post_init__(self):
        if self.M < 1:
            raise ValidationError("M must be >= 1")

    def __getitem__(self, method: Method | str) -> MethodSummary:
        return self.methods[Method.parse(method)]


# -- file formats -----------------------------------------------------------


def read_csv(path: str | Path, t_S: float | None = None, t_B: float | None = None,
             sidecar: str | Path | None = None) -> PairedDataset:
    """Load a dataset from a ``x,S,B`` CSV file.

    Exposures come from the explicit arguments, else from a JSON sidecar
    ``{"t_S": ..., "t_B": ...}``, else default to 1. When ``sidecar`` is None
    a file next to ``path`` with suffix ``.json`` is used if present.
    """
    path = Path(path)
    xs: list[float] = []
    ss: list[float] = []
    bs: list[float] = []
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        fields = [f.strip() for f in (reader.fieldnames or [])]
        if fields[:3] != ["x", "S", "B"]:
            raise ValidationError(f"{path}: expected header 'x,S,B', got {','.join(fields)!r}")
        for lineno, row in enumerate(reader, start=2):
            row = {k.strip(): v for k, v in row.items() if k is not None}
            try:
                xs.append(float(row["x"]))
                ss.append(float(row["S"]))
                bs.append(float(row["B"]))
            except (TypeError, ValueError):
                raise ValidationError(f"{path}:{lineno}: malformed row {row!r}") from None
    exposures = {}
    side = Path(sidecar) if sidecar is not None else path.with_suffix(".json")
    if sidecar is not None or side.exists():
        exposures = json.loads(side.read_text())
    ts = t_S if t_S is not None else exposures.get("t_S", 1.0)
    tb = t_B if t_B is not None else exposures.get("t_B", 1.0)
    return validate(PairedDataset(S=ss, B=bs, t_S=ts, t_B=tb, x=xs))


def write_csv(dataset: PairedDataset, path: str | Path, sidecar: bool = True) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "S", "B"])
        for xi, si, bi in zip(dataset.x, dataset.S, dataset.B):
            w.writerow([repr(float(xi)), int(si), int(bi)])
    if sidecar:
        path.with_suffix(".json").write_text(json.dumps({"t_S": dataset.t_S, "t_B": dataset.t_B}) + "\n")

