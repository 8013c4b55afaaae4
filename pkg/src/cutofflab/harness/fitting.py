"""Power-law fits ``value ~ C L^-rho`` by least squares in log-log space."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..config import get_tolerances
from ..errors import InsufficientPoints

__all__ = ["RateFit", "fit_rate"]


@dataclass(frozen=True)
class RateFit:
    rho: float
    C: float
    r2: float
    points: int

    def as_tuple(self) -> tuple[float, float, float]:
        return self.rho, self.C, self.r2


def fit_rate(L: Sequence[float], values: Sequence[float], min_points: int = 4) -> RateFit:
    """Fit ``log v = log C - rho log L`` on the points with ``v > tol.floor``.

    Raises
    ------
    InsufficientPoints
        If fewer than ``min_points`` usable points remain.
    """
    L = np.asarray(L, dtype=float)
    v = np.asarray(values, dtype=float)
    if L.shape != v.shape:
        raise ValueError("L and values must have the same length")
    keep = np.isfinite(v) & (v > get_tolerances().floor) & (L > 0)
    if keep.sum() < min_points:
        raise InsufficientPoints(f"{int(keep.sum())} usable points, need {min_points}")
    x, y = np.log(L[keep]), np.log(v[keep])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - float(np.sum(resid**2)) / ss_tot
    return RateFit(float(-slope), float(np.exp(intercept)), r2, int(keep.sum()))
