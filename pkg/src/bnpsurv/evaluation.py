"""Scoring of fitted survival curves: lppd, credible-band width and coverage."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import optimize
from scipy.special import logsumexp

from .data_model import Dataset, Observation

DEFAULT_PERCENTILES = tuple(round(0.05 * i, 2) for i in range(1, 20))


@dataclass(frozen=True)
class SurvivalCurve:
    """Survival values on an increasing grid.

    ``step=True`` marks a right-continuous step function (Kaplan-Meier);
    otherwise values are linearly interpolated between grid points.
    """

    grid: np.ndarray
    values: np.ndarray
    step: bool = False

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if grid.shape != values.shape or grid.ndim != 1:
            raise ValueError("grid and values must be 1-d arrays of equal length")
        if np.any(np.diff(grid) <= 0) or np.any(grid < 0):
            raise ValueError("grid must be strictly increasing and nonnegative")
        if np.any((values < 0) | (values > 1)) or np.any(np.diff(values) > 1e-12):
            raise ValueError("survival values must lie in [0, 1] and be nonincreasing")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.step:
            idx = np.searchsorted(self.grid, t, side="right") - 1
            return np.where(idx >= 0, self.values[np.maximum(idx, 0)], 1.0)
        return np.interp(t, self.grid, self.values)


@dataclass(frozen=True)
class CredibleBand:
    grid: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    level: float = 0.95

    @property
    def mean_width(self) -> float:
        return float(np.mean(self.upper - self.lower))

    def at(self, t):
        """Band limits linearly interpolated at ``t``."""
        return np.interp(t, self.grid, self.lower), np.interp(t, self.grid, self.upper)


def mean_lppd(trace, data: Dataset) -> float:
    """Mean over observations of log(mean over draws of the censoring-aware score).

    ``trace`` is any object with ``log_score_matrix(data)`` returning a
    ``(draws, observations)`` array of log scores.
    """
    if len(trace) == 0:
        raise ValueError("empty trace")
    return float(pointwise_lppd(trace.log_score_matrix(data)).mean())


def pointwise_lppd(log_scores: np.ndarray) -> np.ndarray:
    log_scores = np.atleast_2d(log_scores)
    return logsumexp(log_scores, axis=0) - math.log(log_scores.shape[0])


def credible_band(curve_draws, level: float = 0.95, grid=None) -> CredibleBand:
    """Pointwise equal-tailed band from a ``(draws, grid)`` matrix."""
    draws = np.asarray(curve_draws, dtype=float)
    if draws.ndim != 2 or draws.shape[0] < 2:
        raise ValueError("need at least 2 curve draws")
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    tail = 0.5 * (1.0 - level)
    lower, upper = np.quantile(draws, [tail, 1.0 - tail], axis=0)
    if grid is None:
        grid = np.arange(draws.shape[1], dtype=float)
    return CredibleBand(np.asarray(grid, dtype=float), lower, upper, level)


def survival_quantile(survival: Callable, p: float) -> float:
    """Time at which a survival function drops to ``1 - p``."""
    if hasattr(survival, "quantile"):
        return float(survival.quantile(p))
    target = 1.0 - p

    def f(logt):
        return float(survival(math.exp(logt))) - target

    lo, hi = -5.0, 5.0
    while f(lo) < 0 and lo > -700:
        lo -= 5.0
    while f(hi) > 0 and hi < 700:
        hi += 5.0
    return math.exp(optimize.brentq(f, lo, hi, xtol=1e-12, rtol=1e-12))


def coverage_at_percentiles(band: CredibleBand, truth: Callable,
                            percentiles: Sequence[float] = DEFAULT_PERCENTILES,
                            points=None) -> float:
    """Fraction of evaluation points where the band contains the true survival.

    Evaluation points are the quantiles of ``truth`` at ``percentiles``
    unless given explicitly; band limits are linearly interpolated there.
    """
    if points is None:
        if any(not 0.0 < p < 1.0 for p in percentiles):
            raise ValueError("percentiles must lie in (0, 1)")
        points = np.array([survival_quantile(truth, p) for p in percentiles])
    points = np.asarray(points, dtype=float)
    lo, hi = band.at(points)
    s = np.asarray(truth(points), dtype=float)
    return float(np.mean((lo <= s) & (s <= hi)))


def kaplan_meier(group_obs: Sequence[Observation] | Dataset) -> SurvivalCurve:
    """Product-limit estimate as a step curve with a node at each event time."""
    if isinstance(group_obs, Dataset):
        t, e = group_obs.times, group_obs.events
    else:
        t = np.array([o.time for o in group_obs], dtype=float)
        e = np.array([o.event for o in group_obs], dtype=bool)
    if t.size == 0:
        raise ValueError("no observations")
    event_times = np.unique(t[e])
    at_risk = np.array([(t >= s).sum() for s in event_times])
    deaths = np.array([((t == s) & e).sum() for s in event_times])
    values = np.cumprod(1.0 - deaths / at_risk)
    grid = np.concatenate([[0.0], event_times])
    return SurvivalCurve(grid, np.concatenate([[1.0], values]), step=True)


def default_grid(data: Dataset, n: int = 100) -> np.ndarray:
    """``n`` equally spaced times from 0 to the 99th percentile of recorded times."""
    return np.linspace(0.0, float(np.quantile(data.times, 0.99)), n)
