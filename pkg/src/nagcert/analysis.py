"""Empirical linear-rate fits and r-independence comparison."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, asdict
from typing import Sequence

import numpy as np

from .errors import InsufficientDataError, InvalidInputError

MIN_POINTS = 10


@dataclass(frozen=True)
class RateFit:
    """OLS fit of ln(value) against k.

    ``slope`` is the per-iteration log contraction factor; ``k_power`` records
    a polynomial prefactor k^(-k_power) removed before fitting.
    """

    slope: float
    intercept: float
    r_squared: float
    burn_in: int
    n_points: int
    k_power: float = 0.0

    @property
    def rate(self) -> float:
        return math.exp(self.slope)

    def to_dict(self) -> dict:
        return asdict(self)


def fit_linear_rate(ks: Sequence[float], values: Sequence[float], burn_in: int = 0,
                    floor: float | None = None, k_power: float = 0.0, k_max: float | None = None) -> RateFit:
    """Fit ln(value_k) ~ intercept + slope k over burn_in <= k (<= k_max).

    Values at or below ``floor`` are dropped; the default floor is
    1e2 * eps * values[0].  A nonzero ``k_power`` fits ln(value_k k^k_power)
    instead, removing an algebraic prefactor k^(-k_power).
    """
    k = np.asarray(ks, dtype=float)
    v = np.asarray(values, dtype=float)
    if k.shape != v.shape:
        raise InvalidInputError("ks and values must have equal length")
    if k.size == 0:
        raise InsufficientDataError("empty trace")
    if floor is None:
        floor = 1e2 * np.finfo(float).eps * abs(v[0])
    keep = (k >= burn_in) & np.isfinite(v) & (v > floor)
    if k_max is not None:
        keep &= k <= k_max
    if k_power:
        keep &= k > 0
    kk, vv = k[keep], v[keep]
    if kk.size < MIN_POINTS:
        raise InsufficientDataError(f"need >= {MIN_POINTS} admissible points, got {kk.size}")
    y = np.log(vv)
    if k_power:
        y = y + k_power * np.log(kk)
    km, ym = kk.mean(), y.mean()
    dk = kk - km
    sxx = float(dk @ dk)
    if sxx == 0.0:
        raise InsufficientDataError("all admissible points share the same k")
    slope = float(dk @ (y - ym)) / sxx
    intercept = float(ym - slope * km)
    resid = y - (intercept + slope * kk)
    sst = float((y - ym) @ (y - ym))
    r2 = 1.0 if sst == 0.0 else max(0.0, min(1.0, 1.0 - float(resid @ resid) / sst))
    return RateFit(slope, intercept, r2, int(burn_in), int(kk.size), float(k_power))


def compare_rates(fits: Sequence[RateFit | float]) -> float:
    """max over pairs |slope_i - slope_j| / max |slope|."""
    slopes = [f.slope if isinstance(f, RateFit) else float(f) for f in fits]
    if len(slopes) < 2:
        raise InsufficientDataError("need at least two fits to compare")
    scale = max(abs(x) for x in slopes)
    if scale == 0.0:
        return 0.0
    return max(abs(a - b) for a, b in itertools.combinations(slopes, 2)) / scale


def predicted_slope(mu_s: float, k_power: float = 0.0, k_lo: float = 1.0, k_hi: float = 2.0, n: int = 1000) -> float:
    """OLS slope of ln((1 - mu s)^k k^(-k_power)) over a uniform grid on [k_lo, k_hi]."""
    k = np.linspace(k_lo, k_hi, n)
    y = k * math.log1p(-mu_s) - k_power * np.log(k)
    dk = k - k.mean()
    return float(dk @ (y - y.mean()) / (dk @ dk))
