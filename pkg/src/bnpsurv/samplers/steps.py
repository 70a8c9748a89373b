"""Single-observation and single-group conditional draws.

These are the readable scalar forms of the updates performed inside a sweep.
The sweeps in :mod:`bnpsurv.samplers.models` apply the same formulas to
whole arrays at once.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from ..data_model import Observation
from ..kernels import KernelParams, kernel_density, kernel_survival, log_density, log_survival, sample_truncated
from ..sticks import Sticks


def _weights(weights) -> np.ndarray:
    if isinstance(weights, Sticks):
        return weights.w
    return np.asarray(weights, dtype=float)


def censored_component_score(obs: Observation, atom: KernelParams) -> float:
    """f(y | atom) for an observed event, S(y | atom) for a censored one."""
    if obs.event:
        return kernel_density(atom, obs.time)
    return kernel_survival(atom, obs.time)


def log_component_score(obs: Observation, atom: KernelParams) -> float:
    if obs.event:
        return log_density(atom, obs.time)
    return log_survival(atom, obs.time)


def sample_log_categorical(logp: np.ndarray, rng: np.random.Generator,
                           fallback: np.ndarray | None = None) -> np.ndarray:
    """Row-wise categorical draws from unnormalized log-probabilities.

    Rows whose entries are all ``-inf`` are drawn from ``fallback`` (log-weights,
    broadcastable to ``logp``) when given.
    """
    logp = np.atleast_2d(logp)
    m = logp.max(axis=1)
    dead = ~np.isfinite(m)
    if dead.any() and fallback is not None:
        logp = np.where(dead[:, None], np.broadcast_to(fallback, logp.shape), logp)
        m = logp.max(axis=1)
    p = np.exp(logp - m[:, None])
    cum = np.cumsum(p, axis=1)
    u = rng.random(logp.shape[0]) * cum[:, -1]
    idx = (cum <= u[:, None]).sum(axis=1)
    return np.minimum(idx, logp.shape[1] - 1)


def assignment_probabilities(obs: Observation, weights, atoms: Sequence[KernelParams]) -> np.ndarray:
    """Normalized ``w_l * score(obs | atom_l)`` over the atoms."""
    w = _weights(weights)
    if len(w) != len(atoms):
        raise ValueError("weights and atoms differ in length")
    with np.errstate(divide="ignore"):
        logw = np.log(w)
        logp = logw + np.array([log_component_score(obs, a) for a in atoms])
    if not np.isfinite(logp.max()):
        # every score underflowed: fall back to the prior weights
        logp = logw
    p = np.exp(logp - logp.max())
    return p / p.sum()


def assign_observation(obs: Observation, weights, atoms: Sequence[KernelParams],
                       rng: np.random.Generator) -> int:
    p = assignment_probabilities(obs, weights, atoms)
    return int(sample_log_categorical(np.log(p)[None, :], rng)[0])


def augment_censored(obs: Observation, atom: KernelParams, rng: np.random.Generator) -> float:
    """Impute the latent event time of a censored record assigned to ``atom``.

    Raises :class:`bnpsurv.kernels.TruncationError` if the censoring time is
    beyond the atom's numerical support.
    """
    if obs.event:
        raise ValueError("only censored observations are augmented")
    return sample_truncated(atom, obs.time, rng)


def group_log_likelihoods(group_obs: Sequence[Observation], clusters) -> np.ndarray:
    """``sum_i log sum_l w_lk score(y_i | theta_lk)`` for each cluster ``k``."""
    out = np.empty(len(clusters))
    for k, (weights, atoms) in enumerate(clusters):
        with np.errstate(divide="ignore"):
            logw = np.log(_weights(weights))
        total = 0.0
        for obs in group_obs:
            scores = np.array([log_component_score(obs, a) for a in atoms])
            total += logsumexp(logw + scores)
        out[k] = total
    return out


def group_assignment_probabilities(group_obs: Sequence[Observation], top_weights, clusters) -> np.ndarray:
    with np.errstate(divide="ignore"):
        logp = np.log(_weights(top_weights)) + group_log_likelihoods(group_obs, clusters)
    if not np.isfinite(logp.max()):
        with np.errstate(divide="ignore"):
            logp = np.log(_weights(top_weights))
    p = np.exp(logp - logp.max())
    return p / p.sum()


def assign_group_ndp(group_obs: Sequence[Observation], top_sticks, clusters,
                     rng: np.random.Generator) -> int:
    """Draw a cluster for a whole group.

    ``clusters`` is a sequence of ``(weights, atoms)`` pairs, one per cluster.
    """
    p = group_assignment_probabilities(group_obs, top_sticks, clusters)
    with np.errstate(divide="ignore"):
        return int(sample_log_categorical(np.log(p)[None, :], rng)[0])
