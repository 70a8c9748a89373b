"""Grouped survival data from frailty-tilted mixtures with independent censoring.

Each group ``j`` gets a generating mixture and a frailty ``u_j`` drawn from
Gamma(1, 1). Frailty multiplies the hazard of the sampled component, so the
component survival becomes ``S_c(t) ** u_j``. Censoring times are exponential
and independent of the event times, with the rate calibrated by bisection to
hit a target censored fraction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import optimize, special

from .data_model import Dataset, validate
from .kernels import KernelParams, LogNormal, Weibull

TOTAL_SIZE = 600
SCENARIO_GRID = ((10, 60), (20, 30), (30, 20), (60, 10), (100, 6))


@dataclass(frozen=True)
class MixtureSpec:
    weights: tuple
    components: tuple

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if len(self.components) == 0 or w.size != len(self.components):
            raise ValueError("need one weight per component and at least one component")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("mixture weights must be nonnegative and sum to 1")

    @classmethod
    def of(cls, *pairs) -> "MixtureSpec":
        return cls(tuple(float(w) for w, _ in pairs), tuple(p for _, p in pairs))

    def log_survival_components(self, t, frailty: float = 1.0) -> np.ndarray:
        """``u * log S_c(t)`` for every component; shape ``t.shape + (C,)``."""
        t = np.asarray(t, dtype=float)[..., None]
        out = np.empty(t.shape[:-1] + (len(self.components),))
        with np.errstate(divide="ignore"):
            for c, p in enumerate(self.components):
                if isinstance(p, LogNormal):
                    out[..., c] = special.log_ndtr(-(np.log(t[..., 0]) - p.mu) / p.sigma)
                else:
                    out[..., c] = -((t[..., 0] / p.scale) ** p.shape)
        return frailty * out

    def survival(self, t, frailty: float = 1.0) -> np.ndarray:
        """Mixture survival; with ``frailty`` each component hazard is scaled by it."""
        return np.exp(self.log_survival_components(t, frailty)) @ np.asarray(self.weights)

    def density(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for w, p in zip(self.weights, self.components):
            if isinstance(p, LogNormal):
                z = (np.log(t) - p.mu) / p.sigma
                out = out + w * np.exp(-0.5 * z * z) / (t * p.sigma * math.sqrt(2 * math.pi))
            else:
                x = t / p.scale
                out = out + w * p.shape / p.scale * x ** (p.shape - 1) * np.exp(-x ** p.shape)
        return out

    def quantile(self, p: float, frailty: float = 1.0) -> float:
        """Time at which the (tilted) mixture CDF reaches ``p``."""
        if not 0.0 < p < 1.0:
            raise ValueError("p must lie in (0, 1)")
        target = 1.0 - p

        def f(logt):
            return float(self.survival(math.exp(logt), frailty)) - target

        lo, hi = -5.0, 5.0
        while f(lo) < 0:
            lo -= 5.0
        while f(hi) > 0:
            hi += 5.0
        return math.exp(optimize.brentq(f, lo, hi, xtol=1e-13, rtol=1e-13))

    def mean(self) -> float:
        total = 0.0
        for w, p in zip(self.weights, self.components):
            if isinstance(p, LogNormal):
                total += w * math.exp(p.mu + 0.5 * p.sigma ** 2)
            else:
                total += w * p.scale * math.gamma(1.0 + 1.0 / p.shape)
        return total


def default_mixtures() -> list[MixtureSpec]:
    """Three generating mixtures.

    Mixtures 1 and 2 share a shape and differ in location; mixture 3 is a
    Weibull with the mean of mixture 1 and a decreasing hazard.
    """
    m1 = MixtureSpec.of((0.6, LogNormal(0.0, 0.5)), (0.4, LogNormal(1.2, 0.4)))
    m2 = MixtureSpec.of((0.6, LogNormal(0.8, 0.5)), (0.4, LogNormal(2.0, 0.4)))
    shape = 0.8
    m3 = MixtureSpec.of((1.0, Weibull(shape, m1.mean() / math.gamma(1.0 + 1.0 / shape))))
    return [m1, m2, m3]


def separated_mixtures() -> list[MixtureSpec]:
    """Three mixtures with little overlap, for checking group-cluster recovery."""
    return [
        MixtureSpec.of((0.5, LogNormal(-2.0, 0.3)), (0.5, LogNormal(-1.2, 0.3))),
        MixtureSpec.of((1.0, Weibull(4.0, 2.0))),
        MixtureSpec.of((0.5, LogNormal(3.0, 0.3)), (0.5, LogNormal(3.8, 0.3))),
    ]


# ---------------------------------------------------------------------------


def _component_times(params: KernelParams, log_s: np.ndarray) -> np.ndarray:
    """Invert ``log S(t) = log_s`` for one component."""
    if isinstance(params, LogNormal):
        # tiny frailties can push t past float range; inf is censored whenever rate > 0
        with np.errstate(over="ignore"):
            return np.exp(params.mu - params.sigma * special.ndtri_exp(log_s))
    return params.scale * (-log_s) ** (1.0 / params.shape)


def draw_event_times(mix: MixtureSpec, frailty, rng: np.random.Generator, size=None) -> np.ndarray:
    """Event times from the mixture with component hazards scaled by ``frailty``.

    A component is picked by weight, then ``S_c(t) ** frailty = U`` is solved
    for ``t``. ``frailty`` may be an array broadcasting against ``size``.
    """
    frailty = np.asarray(frailty, dtype=float)
    if np.any(frailty <= 0):
        raise ValueError("frailty must be positive")
    if size is None:
        shape = frailty.shape
    else:
        shape = (size,) if np.ndim(size) == 0 else tuple(size)
    comp = rng.choice(len(mix.components), size=shape, p=np.asarray(mix.weights))
    u = rng.random(shape)
    u = np.where(u == 0.0, 2.0 ** -54, u)
    log_s = np.log(u) / np.broadcast_to(frailty, shape)
    out = np.empty(shape)
    for c, p in enumerate(mix.components):
        sel = comp == c
        out[sel] = _component_times(p, log_s[sel])
    return out


def draw_event_time(mix: MixtureSpec, frailty: float, rng: np.random.Generator) -> float:
    return float(draw_event_times(mix, frailty, rng, size=()))


def _draw_frailty(shape, rate, n, rng) -> np.ndarray:
    if shape is None:
        return np.ones(n)
    return rng.gamma(shape, 1.0 / rate, size=n)


def calibrate_censoring_rate(specs: Sequence[MixtureSpec], target: float, rng: np.random.Generator,
                             mixture_weights=None, frailty_shape: float = 1.0,
                             frailty_rate: float = 1.0, n: int = 100_000) -> float:
    """Exponential censoring rate giving a censored fraction near ``target``.

    Event times are simulated once (mixture chosen by ``mixture_weights``,
    frailty from Gamma(shape, rate)) and paired with common Exp(1) draws, so
    the censored fraction is monotone in the rate and bisection on the log
    rate converges. Returns 0.0 (no censoring) for ``target == 0``.
    """
    if not 0.0 <= target < 1.0:
        raise ValueError("target censoring must lie in [0, 1)")
    if target == 0.0:
        return 0.0
    k = len(specs)
    mw = np.full(k, 1.0 / k) if mixture_weights is None else np.asarray(mixture_weights, float)
    which = rng.choice(k, size=n, p=mw / mw.sum())
    frail = _draw_frailty(frailty_shape, frailty_rate, n, rng)
    x = np.empty(n)
    for m, spec in enumerate(specs):
        sel = which == m
        x[sel] = draw_event_times(spec, frail[sel], rng, size=int(sel.sum()))
    e = rng.exponential(1.0, size=n)
    ratio = e / x  # censored iff rate > e / x

    def frac(log_rate):
        return float(np.mean(ratio < math.exp(log_rate)))

    lo, hi = math.log(np.quantile(ratio, 1e-4)) - 1.0, math.log(np.quantile(ratio, 1 - 1e-4)) + 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        f = frac(mid)
        if abs(f - target) < 1e-3:
            break
        if f < target:
            lo = mid
        else:
            hi = mid
    return math.exp(mid)


@dataclass(frozen=True)
class SurvivalTruth:
    """Callable survival function of a (frailty-tilted) mixture."""

    spec: MixtureSpec
    frailty: float = 1.0

    def __call__(self, t):
        return self.spec.survival(t, self.frailty)

    def quantile(self, p: float) -> float:
        return self.spec.quantile(p, self.frailty)


@dataclass(frozen=True)
class ScenarioConfig:
    J: int = 30
    n_j: int = 20
    mixture_assignment: tuple | None = None
    target_censoring: float = 0.5
    frailty_shape: float | None = 1.0  # None disables frailty (u = 1 for every group)
    frailty_rate: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.J < 1 or self.n_j < 1:
            raise ValueError("J and n_j must be positive")
        if not 0.0 <= self.target_censoring < 1.0:
            raise ValueError("target censoring must lie in [0, 1)")
        if self.mixture_assignment is not None and len(self.mixture_assignment) != self.J:
            raise ValueError("mixture_assignment needs one entry per group")

    @property
    def total(self) -> int:
        return self.J * self.n_j

    def assignment(self, n_mixtures: int) -> np.ndarray:
        if self.mixture_assignment is not None:
            a = np.asarray(self.mixture_assignment, dtype=np.int64)
            if np.any((a < 0) | (a >= n_mixtures)):
                raise ValueError("mixture index out of range")
            return a
        return np.arange(self.J) % n_mixtures


@dataclass(frozen=True, eq=False)
class SimulatedDataset:
    dataset: Dataset
    true_mixture_per_group: np.ndarray
    true_frailty_per_group: np.ndarray
    specs: tuple
    censoring_rate: float
    config: ScenarioConfig = field(default_factory=ScenarioConfig)

    def true_survival(self, mixture: int) -> "SurvivalTruth":
        """Closed-form survival function of generating mixture ``mixture``."""
        return SurvivalTruth(self.specs[mixture])

    def group_survival(self, group: int) -> "SurvivalTruth":
        """Survival law of group ``group``: its mixture tilted by its frailty."""
        return SurvivalTruth(self.specs[self.true_mixture_per_group[group]],
                             float(self.true_frailty_per_group[group]))

    def replicate(self, rng: np.random.Generator) -> Dataset:
        """Fresh observations for the same groups, frailties and censoring law."""
        return _draw_observations(self.config, self.specs, self.true_mixture_per_group,
                                  self.true_frailty_per_group, self.censoring_rate, rng)


def _draw_observations(config, specs, mixture, frailty, rate, rng) -> Dataset:
    times, events, groups = [], [], []
    for j in range(config.J):
        x = draw_event_times(specs[mixture[j]], frailty[j], rng, size=config.n_j)
        c = rng.exponential(1.0 / rate, size=config.n_j) if rate > 0 else np.full(config.n_j, np.inf)
        times.append(np.minimum(x, c))
        events.append(x <= c)
        groups.append(np.full(config.n_j, j))
    return validate(Dataset(np.concatenate(times), np.concatenate(events), np.concatenate(groups),
                            labels=tuple(f"g{j}" for j in range(config.J))))


def generate_dataset(config: ScenarioConfig, specs: Sequence[MixtureSpec] | None = None,
                     rng: np.random.Generator | None = None) -> SimulatedDataset:
    """Simulate ``config.J`` groups of ``config.n_j`` observations."""
    specs = tuple(default_mixtures() if specs is None else specs)
    rng = np.random.default_rng(config.seed) if rng is None else rng
    mixture = config.assignment(len(specs))
    props = np.bincount(mixture, minlength=len(specs)) / config.J
    rate = calibrate_censoring_rate(specs, config.target_censoring, rng, props,
                                    config.frailty_shape, config.frailty_rate)
    frailty = _draw_frailty(config.frailty_shape, config.frailty_rate, config.J, rng)
    data = _draw_observations(config, specs, mixture, frailty, rate, rng)
    return SimulatedDataset(data, mixture, frailty, specs, rate, config)
