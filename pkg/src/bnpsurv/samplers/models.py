"""Blocked-Gibbs states and sweeps for the DP, HDP and NDP mixtures.

Every sweep runs the same stages in order:

1. resample component assignments (for the NDP the group-level cluster
   labels first, then observations within the chosen cluster), scoring
   censored records by the kernel survival function;
2. augment censored records with draws from their component truncated at
   the censoring time;
3. resample stick proportions from occupancy counts;
4. resample atoms from event times plus augmented values;
5. resample concentration parameters.

Atoms are log-normal with a normal-inverse-gamma base measure. A censored
record whose censoring time lies beyond its atom's numerical support keeps
``nan`` as its augmented value and is left out of that sweep's atom update.
"""
from __future__ import annotations

from dataclasses import dataclass, fields, replace

import numpy as np
from scipy import special

from ..data_model import Dataset
from ..kernels import LOG_SQRT_2PI, BaseMeasure, draw_atoms, draw_nig, lognormal_sample_truncated
from ..sticks import GammaPrior, break_sticks, update_concentration, update_sticks
from .steps import sample_log_categorical

MODELS = ("dp", "hdp", "ndp", "idp")


class SweepData:
    """Per-dataset arrays reused by every sweep."""

    def __init__(self, data: Dataset):
        self.t = data.times
        self.logt = np.log(data.times)
        self.event = data.events
        self.g = data.groups
        self.J = data.group_count
        self.N = len(data)
        self.ev_idx = np.flatnonzero(data.events)
        self.cens_idx = np.flatnonzero(~data.events)
        self.order = np.argsort(self.g, kind="stable")
        sizes = np.bincount(self.g, minlength=self.J)
        self.group_starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
        self.group_sizes = sizes

    def group_sum(self, x: np.ndarray) -> np.ndarray:
        """Sum rows of ``x`` (indexed by observation) within each group."""
        return np.add.reduceat(x[self.order], self.group_starts, axis=0)


def log_score_matrix(sd: SweepData, mu: np.ndarray, sigma: np.ndarray, per_obs: bool = False) -> np.ndarray:
    """Censoring-aware log scores of every observation against atoms.

    With ``per_obs`` the leading axis of ``mu``/``sigma`` indexes observations;
    otherwise the atoms are shared by all observations. The result has shape
    ``(N,) + atom shape``.
    """
    atom_shape = mu.shape[1:] if per_obs else mu.shape
    extra = (1,) * len(atom_shape)
    out = np.empty((sd.N,) + atom_shape)
    logsig = np.log(sigma)
    for idx, is_event in ((sd.ev_idx, True), (sd.cens_idx, False)):
        if idx.size == 0:
            continue
        lt = sd.logt[idx].reshape((-1,) + extra)
        m, s, ls = (mu[idx], sigma[idx], logsig[idx]) if per_obs else (mu, sigma, logsig)
        z = (lt - m) / s
        if is_event:
            out[idx] = -lt - ls - LOG_SQRT_2PI - 0.5 * z * z
        else:
            out[idx] = log_ndtr_fast(-z)
    return out


def log_ndtr_fast(x: np.ndarray) -> np.ndarray:
    """``log Phi(x)``; plain ``log(ndtr)`` except in the far lower tail."""
    with np.errstate(divide="ignore"):
        out = np.log(special.ndtr(x))
    tail = x < -20.0
    if tail.any():
        out[tail] = special.log_ndtr(x[tail])
    return out


def _logsumexp_last(x: np.ndarray) -> np.ndarray:
    m = x.max(axis=-1)
    safe = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        return np.log(np.exp(x - safe[..., None]).sum(axis=-1)) + safe


def _logw(w):
    with np.errstate(divide="ignore"):
        return np.log(w)


def _augment(sd: SweepData, yhat: np.ndarray, mu_c: np.ndarray, sigma_c: np.ndarray, rng) -> None:
    if sd.cens_idx.size:
        x, _ = lognormal_sample_truncated(mu_c, sigma_c, sd.t[sd.cens_idx], rng)
        yhat[sd.cens_idx] = x


def _atom_update(base: BaseMeasure, yhat: np.ndarray, atom_idx: np.ndarray, n_atoms: int, rng):
    keep = np.isfinite(yhat)
    return draw_atoms(base, np.log(yhat[keep]), atom_idx[keep], n_atoms, rng)


def _update_concentrations(v: np.ndarray, prior: GammaPrior, rng) -> np.ndarray:
    """Row-wise concentration draws, one per stick sequence in ``v``."""
    shape = prior.shape + v.shape[-1]
    rate = prior.rate - np.log1p(-v).sum(axis=-1)
    return rng.gamma(shape, 1.0 / rate)


def _initial_yhat(sd: SweepData, mu_c, sigma_c, rng) -> np.ndarray:
    yhat = sd.t.astype(float).copy()
    _augment(sd, yhat, mu_c, sigma_c, rng)
    return yhat


class _State:
    def copy(self):
        return replace(self, **{f.name: np.copy(getattr(self, f.name))
                                for f in fields(self) if isinstance(getattr(self, f.name), np.ndarray)})

    def check(self, sd: SweepData) -> None:
        cens = sd.cens_idx
        ok = np.isfinite(self.yhat[cens])
        if np.any(self.yhat[cens][ok] <= sd.t[cens][ok]):
            raise AssertionError("augmented value does not exceed its censoring time")
        if np.any(self.yhat[sd.ev_idx] != sd.t[sd.ev_idx]):
            raise AssertionError("event times must not be augmented")


# ---------------------------------------------------------------------------
# DP: one pooled mixture; IDP: an independent DP per group


@dataclass
class DpState(_State):
    """Pooled DP mixture (``blocks == 1``) or one DP per group.

    ``v`` has shape ``(B, L-1)``, ``alpha`` shape ``(B,)`` and the atoms
    ``(B, L)``, where ``B`` is 1 for the pooled model and ``J`` otherwise.
    """

    v: np.ndarray
    alpha: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    z: np.ndarray
    yhat: np.ndarray
    per_group: bool = False

    @property
    def weights(self) -> np.ndarray:
        return break_sticks(self.v)

    def block(self, sd: SweepData) -> np.ndarray:
        return sd.g if self.per_group else np.zeros(sd.N, dtype=np.int64)

    def check(self, sd: SweepData) -> None:
        super().check(sd)
        L = self.mu.shape[-1]
        if np.any((self.z < 0) | (self.z >= L)):
            raise AssertionError("assignment outside the atom table")
        if not np.allclose(self.weights.sum(axis=-1), 1.0, atol=1e-12):
            raise AssertionError("weights do not sum to 1")


def init_dp(sd: SweepData, base: BaseMeasure, L: int, rng, per_group: bool = False) -> DpState:
    B = sd.J if per_group else 1
    alpha = np.ones(B)
    v = np.clip(rng.beta(1.0, alpha[:, None], size=(B, L - 1)), 1e-300, 1 - 2.0 ** -53)
    mu, sigma = draw_nig(np.full((B, L), base.m0), np.full((B, L), base.kappa0),
                         np.full((B, L), base.a0), np.full((B, L), base.b0), rng)
    z = rng.integers(0, L, size=sd.N)
    state = DpState(v, alpha, mu, sigma, z, np.empty(0), per_group)
    b = state.block(sd)[sd.cens_idx]
    zc = z[sd.cens_idx]
    state.yhat = _initial_yhat(sd, mu[b, zc], sigma[b, zc], rng)
    return state


def sweep_dp(state: DpState, sd: SweepData, base: BaseMeasure, prior: GammaPrior, rng) -> DpState:
    s = state.copy()
    B, L = s.mu.shape
    blk = s.block(sd)
    logw = _logw(break_sticks(s.v))
    if B == 1:
        logp = log_score_matrix(sd, s.mu[0], s.sigma[0]) + logw[0]
        s.z = sample_log_categorical(logp, rng, fallback=logw[0])
    else:
        logp = log_score_matrix(sd, s.mu[blk], s.sigma[blk], per_obs=True) + logw[blk]
        s.z = sample_log_categorical(logp, rng, fallback=logw[blk])
    cb, cz = blk[sd.cens_idx], s.z[sd.cens_idx]
    _augment(sd, s.yhat, s.mu[cb, cz], s.sigma[cb, cz], rng)
    cell = blk * L + s.z
    counts = np.bincount(cell, minlength=B * L).reshape(B, L)
    s.v = update_sticks(counts, s.alpha, rng)
    mu, sigma = _atom_update(base, s.yhat, cell, B * L, rng)
    s.mu, s.sigma = mu.reshape(B, L), sigma.reshape(B, L)
    s.alpha = _update_concentrations(s.v, prior, rng)
    return s


# ---------------------------------------------------------------------------
# HDP: shared atoms, group-specific weights tied through global sticks


@dataclass
class HdpState(_State):
    """Truncated direct-assignment HDP.

    ``beta_v`` are the global stick proportions (``L - 1``), ``pi`` the
    per-group weights ``(J, L)``, ``tables`` the auxiliary table counts
    ``(J, L)``; ``gamma`` and ``alpha0`` are the top and group concentrations.
    """

    beta_v: np.ndarray
    gamma: float
    alpha0: float
    pi: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    z: np.ndarray
    yhat: np.ndarray
    tables: np.ndarray

    @property
    def beta(self) -> np.ndarray:
        return break_sticks(self.beta_v)

    def check(self, sd: SweepData) -> None:
        super().check(sd)
        if not np.allclose(self.pi.sum(axis=1), 1.0, atol=1e-12):
            raise AssertionError("group weights do not sum to 1")
        L = self.mu.size
        occ = np.bincount(sd.g * L + self.z, minlength=sd.J * L).reshape(sd.J, L)
        if np.any(self.tables > occ):
            raise AssertionError("more tables than customers")


def _dirichlet_rows(shape_params: np.ndarray, rng) -> np.ndarray:
    g = rng.gamma(np.maximum(shape_params, 1e-300))
    return g / g.sum(axis=1, keepdims=True)


def _table_counts(sd: SweepData, z: np.ndarray, L: int, alpha0: float, beta: np.ndarray, rng) -> np.ndarray:
    """Auxiliary table counts: customer ``i`` (1-based) within cell ``(j, l)``
    opens a new table with probability ``alpha0 beta_l / (alpha0 beta_l + i - 1)``."""
    cell = sd.g * L + z
    order = np.argsort(cell, kind="stable")
    sc = cell[order]
    first = np.searchsorted(sc, sc, side="left")
    rank = np.arange(sd.N) - first
    ab = alpha0 * beta[sc % L]
    with np.errstate(invalid="ignore"):
        p = np.where(rank == 0, 1.0, ab / (ab + rank))
    new = rng.random(sd.N) < p
    return np.bincount(sc, weights=new, minlength=sd.J * L).reshape(sd.J, L)


def init_hdp(sd: SweepData, base: BaseMeasure, L: int, rng) -> HdpState:
    gamma, alpha0 = 1.0, 1.0
    beta_v = np.clip(rng.beta(1.0, gamma, size=L - 1), 1e-300, 1 - 2.0 ** -53)
    pi = _dirichlet_rows(np.tile(alpha0 * break_sticks(beta_v), (sd.J, 1)), rng)
    mu, sigma = draw_nig(np.full(L, base.m0), np.full(L, base.kappa0),
                         np.full(L, base.a0), np.full(L, base.b0), rng)
    z = rng.integers(0, L, size=sd.N)
    zc = z[sd.cens_idx]
    yhat = _initial_yhat(sd, mu[zc], sigma[zc], rng)
    tables = np.zeros((sd.J, L))
    return HdpState(beta_v, gamma, alpha0, pi, mu, sigma, z, yhat, tables)


def sweep_hdp(state: HdpState, sd: SweepData, base: BaseMeasure, prior: GammaPrior, rng) -> HdpState:
    s = state.copy()
    L = s.mu.size
    logpi = _logw(s.pi)[sd.g]
    logp = log_score_matrix(sd, s.mu, s.sigma) + logpi
    s.z = sample_log_categorical(logp, rng, fallback=logpi)
    zc = s.z[sd.cens_idx]
    _augment(sd, s.yhat, s.mu[zc], s.sigma[zc], rng)

    counts = np.bincount(sd.g * L + s.z, minlength=sd.J * L).reshape(sd.J, L)
    s.tables = _table_counts(sd, s.z, L, s.alpha0, s.beta, rng)
    s.beta_v = update_sticks(s.tables.sum(axis=0), s.gamma, rng)
    s.pi = _dirichlet_rows(s.alpha0 * s.beta + counts, rng)
    s.mu, s.sigma = _atom_update(base, s.yhat, s.z, L, rng)

    s.gamma = update_concentration(s.beta_v, prior, rng)
    # group-level concentration via the auxiliary-variable update of Escobar & West
    n_j = sd.group_sizes.astype(float)
    w = rng.beta(s.alpha0 + 1.0, n_j)
    sflag = rng.random(sd.J) < n_j / (n_j + s.alpha0)
    shape = prior.shape + s.tables.sum() - sflag.sum()
    rate = prior.rate - np.log(w).sum()
    s.alpha0 = float(rng.gamma(shape, 1.0 / rate))
    return s


# ---------------------------------------------------------------------------
# NDP: groups clustered into K distributions, each a truncated DP over L atoms


@dataclass
class NdpState(_State):
    """Truncated nested DP.

    ``zeta`` is the cluster of each group; ``top_v`` (``K - 1``) and ``alpha``
    give the cluster weights; ``v`` ``(K, L-1)`` and the shared ``beta`` give
    the within-cluster weights over atoms ``mu``/``sigma`` ``(K, L)``.
    ``z`` indexes the atom table of the observation's cluster.
    """

    zeta: np.ndarray
    top_v: np.ndarray
    alpha: float
    v: np.ndarray
    beta: float
    mu: np.ndarray
    sigma: np.ndarray
    z: np.ndarray
    yhat: np.ndarray

    def check(self, sd: SweepData) -> None:
        super().check(sd)
        K, L = self.mu.shape
        if np.any((self.zeta < 0) | (self.zeta >= K)) or np.any((self.z < 0) | (self.z >= L)):
            raise AssertionError("index outside the cluster/atom tables")


def init_ndp(sd: SweepData, base: BaseMeasure, K: int, L: int, rng) -> NdpState:
    alpha, beta = 1.0, 1.0
    top_v = np.clip(rng.beta(1.0, alpha, size=K - 1), 1e-300, 1 - 2.0 ** -53)
    v = np.clip(rng.beta(1.0, beta, size=(K, L - 1)), 1e-300, 1 - 2.0 ** -53)
    mu, sigma = draw_nig(np.full((K, L), base.m0), np.full((K, L), base.kappa0),
                         np.full((K, L), base.a0), np.full((K, L), base.b0), rng)
    zeta = rng.integers(0, K, size=sd.J)
    z = rng.integers(0, L, size=sd.N)
    kc, zc = zeta[sd.g[sd.cens_idx]], z[sd.cens_idx]
    yhat = _initial_yhat(sd, mu[kc, zc], sigma[kc, zc], rng)
    return NdpState(zeta, top_v, alpha, v, beta, mu, sigma, z, yhat)


def sweep_ndp(state: NdpState, sd: SweepData, base: BaseMeasure, prior: GammaPrior, rng) -> NdpState:
    s = state.copy()
    K, L = s.mu.shape
    logw = _logw(break_sticks(s.v))                         # (K, L)
    logpi = _logw(break_sticks(s.top_v))                    # (K,)
    scores = log_score_matrix(sd, s.mu, s.sigma) + logw     # (N, K, L)
    obs_k = _logsumexp_last(scores)                         # (N, K)
    group_ll = sd.group_sum(obs_k)                          # (J, K)
    s.zeta = sample_log_categorical(logpi + group_ll, rng, fallback=logpi)

    k_obs = s.zeta[sd.g]
    within = scores[np.arange(sd.N), k_obs]                 # (N, L)
    s.z = sample_log_categorical(within, rng, fallback=logw[k_obs])
    kc, zc = k_obs[sd.cens_idx], s.z[sd.cens_idx]
    _augment(sd, s.yhat, s.mu[kc, zc], s.sigma[kc, zc], rng)

    s.top_v = update_sticks(np.bincount(s.zeta, minlength=K), s.alpha, rng)
    cell = k_obs * L + s.z
    counts = np.bincount(cell, minlength=K * L).reshape(K, L)
    s.v = update_sticks(counts, s.beta, rng)
    mu, sigma = _atom_update(base, s.yhat, cell, K * L, rng)
    s.mu, s.sigma = mu.reshape(K, L), sigma.reshape(K, L)

    s.alpha = update_concentration(s.top_v, prior, rng)
    s.beta = update_concentration(s.v, prior, rng)
    return s
