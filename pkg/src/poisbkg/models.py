"""Parametric source models ``mu(x; theta)``.

Only single-parameter models that are linear in ``theta`` ship: the source
intensity in bin ``i`` is ``theta * shape(x_i)`` with a non-negative shape.
Linearity keeps every fitting objective convex in ``theta``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class LinearSource:
    """``mu(x; theta) = theta * shape(x)`` with ``shape >= 0``."""

    shape: Callable[[np.ndarray], np.ndarray]
    name: str = "linear"

    n_params = 1

    def template(self, x: np.ndarray) -> np.ndarray:
        t = np.broadcast_to(np.asarray(self.shape(np.asarray(x, dtype=float)), dtype=float), np.shape(x))
        if np.any(~np.isfinite(t)) or np.any(t < 0):
            raise ValidationError(f"{self.name} source shape must be finite and non-negative")
        return t

    def mean(self, x: np.ndarray, theta: float) -> np.ndarray:
        return theta * self.template(x)

    def gradient(self, x: np.ndarray, theta: float) -> np.ndarray:
        return self.template(x)


def _ones(x: np.ndarray) -> np.ndarray:
    return np.ones_like(x, dtype=float)


CONSTANT = LinearSource(shape=_ones, name="constant")


def is_constant(model: LinearSource) -> bool:
    return model.shape is _ones
