"""Richardson-type extrapolation for geometric parameter sequences."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["RichardsonResult", "richardson_limit", "fit_rate"]


@dataclass(frozen=True)
class RichardsonResult:
    limit: float
    rate: float
    error_estimate: float
    monotone: bool


def richardson_limit(values, ratio: float = 2.0) -> RichardsonResult:
    """Extrapolate a sequence y(t_k) with t_{k+1} = t_k / ratio to t -> 0.

    Fits y = y_inf + c t^p through the last three entries (Aitken form).
    Falls back to the last value when the differences do not behave
    geometrically, reporting rate = nan.
    """
    y = np.asarray(values, dtype=float)
    if y.size < 2:
        return RichardsonResult(float(y[-1]), np.nan, np.inf, True)
    d = np.diff(y)
    scale = max(1.0, np.abs(y).max())
    if abs(d[-1]) < 1e-14 * scale:
        # sequence already flat to roundoff
        return RichardsonResult(float(y[-1]), np.inf, abs(d[-1]), True)
    monotone = bool(np.all(d > 0) or np.all(d < 0))
    if y.size == 2 or abs(d[-2]) <= abs(d[-1]) or d[-2] * d[-1] <= 0:
        return RichardsonResult(float(y[-1]), np.nan, abs(d[-1]), monotone)
    q = d[-1] / d[-2]  # = ratio^-p
    p = -np.log(q) / np.log(ratio)
    limit = y[-1] + d[-1] * q / (1.0 - q)
    return RichardsonResult(float(limit), float(p), abs(d[-1] * q / (1.0 - q)), monotone)


def fit_rate(params, deviations) -> float:
    """Least-squares slope of log|deviation| against log(param)."""
    t = np.asarray(params, dtype=float)
    d = np.abs(np.asarray(deviations, dtype=float))
    keep = d > 0
    if keep.sum() < 2:
        return np.inf
    slope, _ = np.polyfit(np.log(t[keep]), np.log(d[keep]), 1)
    return float(slope)
