"""Sinusoidal fringe fitting for four-fold coincidence scans."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import FitError


@dataclass(frozen=True)
class FringePoint:
    phi_A: float
    fourfold_count: int
    total_heralds: int

    @property
    def poisson_sigma(self) -> float:
        return math.sqrt(self.fourfold_count)


class FringeFit(NamedTuple):
    V: float
    dV: float
    phi0: float
    C0: float


def fit_visibility(points: Sequence[FringePoint], iterations: int = 5) -> FringeFit:
    """Fit ``C0 * (1 + V cos(phi_A + phi0))`` to the four-fold counts.

    The model is linear in ``(C0, C0 V cos phi0, -C0 V sin phi0)``, so this is
    weighted linear least squares. Weights are Poisson variances taken from
    the current model (floored at one count) and refined a few times. ``dV``
    comes from the parameter covariance by first-order propagation.
    """
    if len(points) < 4:
        raise FitError(f"need at least 4 points, got {len(points)}")
    phi = np.array([p.phi_A for p in points], dtype=float)
    y = np.array([p.fourfold_count for p in points], dtype=float)
    if np.ptp(phi) < math.pi - 1e-9:
        raise FitError("phase grid must span at least half a period")
    X = np.column_stack([np.ones_like(phi), np.cos(phi), np.sin(phi)])
    if np.linalg.matrix_rank(X) < 3:
        raise FitError("phase grid is degenerate")

    var = np.maximum(y, 1.0)
    for _ in range(iterations):
        w = 1.0 / var
        A = X.T @ (X * w[:, None])
        cov = np.linalg.inv(A)
        beta = cov @ (X.T @ (w * y))
        var = np.maximum(X @ beta, 1.0)

    a, b, d = beta
    if a <= 0:
        raise FitError("fitted mean count is not positive")
    r = math.hypot(b, d)
    V = r / a
    if r > 0:
        grad = np.array([-r / a**2, b / (r * a), d / (r * a)])
        dV = math.sqrt(max(grad @ cov @ grad, 0.0))
    else:
        dV = math.sqrt((cov[1, 1] + cov[2, 2]) / 2.0) / a
    phi0 = math.atan2(-d, b)
    return FringeFit(V=min(max(V, 0.0), 1.0), dV=dV, phi0=phi0, C0=a)
