"""Chain driver, posterior traces and survival-curve extraction."""
from __future__ import annotations

from dataclasses import dataclass, field, asdict
from typing import Union

import numpy as np
from scipy import special

from ..data_model import Dataset, validate
from ..kernels import BaseMeasure, KernelParams, kernel_survival
from ..sticks import GammaPrior, break_sticks
from .models import (
    MODELS, DpState, HdpState, NdpState, SweepData, init_dp, init_hdp, init_ndp,
    sweep_dp, sweep_hdp, sweep_ndp,
)

State = Union[DpState, HdpState, NdpState]


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class McmcConfig:
    iterations: int = 4000
    burn_in: int = 2000
    thin: int = 2
    seed: int = 0
    L: int = 40
    K: int = 15
    L_ndp: int = 25
    concentration_shape: float = 1.0
    concentration_rate: float = 1.0

    def __post_init__(self):
        if not self.iterations > self.burn_in >= 0:
            raise ConfigError("need iterations > burn_in >= 0")
        if self.thin < 1:
            raise ConfigError("thin must be >= 1")
        if self.L < 1 or self.K < 1 or self.L_ndp < 1:
            raise ConfigError("truncation levels must be >= 1")

    @property
    def n_draws(self) -> int:
        return (self.iterations - self.burn_in) // self.thin

    @property
    def prior(self) -> GammaPrior:
        return GammaPrior(self.concentration_shape, self.concentration_rate)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class PosteriorTrace:
    """Thinned post-burn-in parameter snapshots of one chain.

    Each draw is a dict of arrays holding the mixture parameters of the
    state (weights, atoms, concentrations and, for the NDP, the group
    clusters). Per-observation assignments and augmented values are not
    retained.
    """

    model: str
    config: McmcConfig
    group_count: int
    draws: list = field(default_factory=list)
    base: BaseMeasure | None = None
    final_state: object = field(default=None, repr=False, compare=False)

    def __len__(self) -> int:
        return len(self.draws)

    def group_mixture(self, i: int):
        """Weights, locations and scales of every group's mixture in draw ``i``.

        Each returned array has shape ``(J, L)``.
        """
        return group_mixture(self.model, self.draws[i], self.group_count)

    def stacked_mixtures(self):
        ws, mus, sigmas = zip(*(self.group_mixture(i) for i in range(len(self))))
        return np.stack(ws), np.stack(mus), np.stack(sigmas)

    def log_score_matrix(self, data: Dataset) -> np.ndarray:
        """Log censoring-aware predictive score of each observation, per draw."""
        W, MU, SIG = self.stacked_mixtures()
        g = data.groups
        logt = np.log(data.times)[:, None]
        ev = data.events[:, None]
        out = np.empty((len(self), len(data)))
        for d in range(len(self)):
            w, mu, sig = W[d][g], MU[d][g], SIG[d][g]
            z = (logt - mu) / sig
            logf = -logt - np.log(sig) - 0.5 * np.log(2 * np.pi) - 0.5 * z * z
            comp = np.where(ev, logf, special.log_ndtr(-z))
            with np.errstate(divide="ignore"):
                out[d] = special.logsumexp(comp + np.log(w), axis=1)
        return out

    def survival_draws(self, group: int, grid) -> np.ndarray:
        return posterior_survival_draws(self, group, grid)


def group_mixture(model: str, draw: dict, J: int):
    if model == "dp":
        return tuple(np.broadcast_to(draw[k], (J, draw[k].size)) for k in ("w", "mu", "sigma"))
    if model == "idp":
        return draw["w"], draw["mu"], draw["sigma"]
    if model == "hdp":
        L = draw["mu"].size
        return draw["pi"], np.broadcast_to(draw["mu"], (J, L)), np.broadcast_to(draw["sigma"], (J, L))
    if model == "ndp":
        zeta = draw["zeta"]
        return draw["w"][zeta], draw["mu"][zeta], draw["sigma"][zeta]
    raise ConfigError(f"unknown model {model!r}")


def summarize(model: str, state: State) -> dict:
    if model in ("dp", "idp"):
        w = break_sticks(state.v)
        d = {"w": w, "mu": state.mu, "sigma": state.sigma, "alpha": state.alpha}
        if model == "dp":
            d = {k: v[0] for k, v in d.items()}
        return {k: np.array(v) for k, v in d.items()}
    if model == "hdp":
        return {"beta": state.beta, "pi": state.pi.copy(), "mu": state.mu.copy(),
                "sigma": state.sigma.copy(), "gamma": np.array(state.gamma),
                "alpha0": np.array(state.alpha0)}
    if model == "ndp":
        return {"pi": break_sticks(state.top_v), "w": break_sticks(state.v), "mu": state.mu.copy(),
                "sigma": state.sigma.copy(), "zeta": state.zeta.copy(),
                "alpha": np.array(state.alpha), "beta": np.array(state.beta)}
    raise ConfigError(f"unknown model {model!r}")


def init_state(model: str, sd: SweepData, base: BaseMeasure, config: McmcConfig,
               rng: np.random.Generator) -> State:
    if model == "dp":
        return init_dp(sd, base, config.L, rng)
    if model == "idp":
        return init_dp(sd, base, config.L, rng, per_group=True)
    if model == "hdp":
        return init_hdp(sd, base, config.L, rng)
    if model == "ndp":
        return init_ndp(sd, base, config.K, config.L_ndp, rng)
    raise ConfigError(f"unknown model {model!r}; choose from {MODELS}")


def gibbs_sweep(state: State, data: Dataset | SweepData, base: BaseMeasure,
                rng: np.random.Generator, prior: GammaPrior = GammaPrior()) -> State:
    """One full blocked-Gibbs pass; returns a new state of the same type."""
    sd = data if isinstance(data, SweepData) else SweepData(data)
    if isinstance(state, DpState):
        return sweep_dp(state, sd, base, prior, rng)
    if isinstance(state, HdpState):
        return sweep_hdp(state, sd, base, prior, rng)
    if isinstance(state, NdpState):
        return sweep_ndp(state, sd, base, prior, rng)
    raise TypeError(f"not a sampler state: {type(state).__name__}")


def run_chain(model: str, data: Dataset, config: McmcConfig = McmcConfig(),
              base: BaseMeasure | None = None, callback=None) -> PosteriorTrace:
    """Run ``config.iterations`` sweeps and keep every ``thin``-th post-burn-in state.

    ``model`` is one of ``dp`` (groups pooled), ``hdp``, ``ndp`` or ``idp``
    (an independent DP per group). ``base`` defaults to the empirical
    normal-inverse-gamma prior centred on the recorded log-times.
    """
    if model not in MODELS:
        raise ConfigError(f"unknown model {model!r}; choose from {MODELS}")
    validate(data)
    if base is None:
        base = BaseMeasure.empirical(data.times)
    rng = np.random.default_rng(config.seed)
    sd = SweepData(data)
    state = init_state(model, sd, base, config, rng)
    trace = PosteriorTrace(model, config, data.group_count, base=base)
    prior = config.prior
    for it in range(1, config.iterations + 1):
        state = gibbs_sweep(state, sd, base, rng, prior)
        if it > config.burn_in and (it - config.burn_in) % config.thin == 0:
            trace.draws.append(summarize(model, state))
        if callback is not None:
            callback(it, state)
    trace.final_state = state
    return trace


def posterior_survival_draws(trace: PosteriorTrace, group: int, grid) -> np.ndarray:
    """``S_j(t) = sum_l w_jl S(t | theta_jl)`` per retained draw (rows) and grid point."""
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or np.any(grid < 0) or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing and nonnegative")
    if not 0 <= group < trace.group_count:
        raise ValueError(f"group {group} out of range")
    out = np.empty((len(trace), grid.size))
    with np.errstate(divide="ignore"):
        logt = np.log(grid)[:, None]
    for d in range(len(trace)):
        w, mu, sig = (a[group] for a in trace.group_mixture(d))
        out[d] = special.ndtr(-(logt - mu) / sig) @ w
    # guard monotonicity against summation rounding
    return np.minimum.accumulate(np.clip(out, 0.0, 1.0), axis=1)


def mixture_survival(weights, atoms: list[KernelParams], grid) -> np.ndarray:
    """Survival of a finite mixture of arbitrary kernels on ``grid``."""
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (len(atoms),):
        raise ValueError("one weight per atom required")
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    comp = np.array([[kernel_survival(a, t) for t in grid] for a in atoms])
    return weights @ comp
