"""Parametric mixture kernels and the normal-inverse-gamma base measure.

Two kernel families are supported. :class:`LogNormal` is the mixture kernel
used by the samplers (its base measure is conjugate); :class:`Weibull` is used
for data generation and the frailty baseline.

Scalar functions (``kernel_density`` and friends) take a params object. The
``lognormal_*`` array functions are the vectorized versions used inside Gibbs
sweeps.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy import special

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
# smallest survival mass beyond a truncation point that still supports sampling
MIN_TAIL_MASS = 1e-300


class TruncationError(ValueError):
    """The truncation point lies beyond the kernel's numerical support."""


@dataclass(frozen=True)
class LogNormal:
    mu: float
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")


@dataclass(frozen=True)
class Weibull:
    shape: float
    scale: float

    def __post_init__(self):
        if not (self.shape > 0 and self.scale > 0):
            raise ValueError(f"shape and scale must be positive, got {self.shape}, {self.scale}")


KernelParams = Union[LogNormal, Weibull]


@dataclass(frozen=True)
class BaseMeasure:
    """Normal-inverse-gamma prior on (mu, sigma^2) of log-time."""

    m0: float
    kappa0: float
    a0: float
    b0: float

    def __post_init__(self):
        if not (self.kappa0 > 0 and self.a0 > 0 and self.b0 > 0):
            raise ValueError("kappa0, a0 and b0 must be positive")

    @classmethod
    def empirical(cls, times, kappa0: float = 0.1, a0: float = 2.0) -> "BaseMeasure":
        """Center the prior on the recorded log-times."""
        logt = np.log(np.asarray(times, dtype=float))
        b0 = float(np.var(logt, ddof=1)) if logt.size > 1 else 1.0
        if not b0 > 0:
            b0 = 1.0
        return cls(m0=float(logt.mean()), kappa0=kappa0, a0=a0, b0=b0)


# ---------------------------------------------------------------------------
# vectorized log-normal kernel


def lognormal_logpdf(t, mu, sigma):
    logt = np.log(t)
    z = (logt - mu) / sigma
    return -logt - np.log(sigma) - LOG_SQRT_2PI - 0.5 * z * z


def lognormal_logsf(t, mu, sigma):
    with np.errstate(divide="ignore"):
        z = (np.log(t) - mu) / sigma
    return special.log_ndtr(-z)


def lognormal_log_score(t, event, mu, sigma):
    """log f(t) for events, log S(t) for censored records (broadcasting)."""
    logt = np.log(t)
    z = (logt - mu) / sigma
    logf = -logt - np.log(sigma) - LOG_SQRT_2PI - 0.5 * z * z
    return np.where(event, logf, special.log_ndtr(-z))


def _open_uniform(rng: np.random.Generator, size=None):
    u = rng.random(size)
    return np.where(u == 0.0, 2.0 ** -54, u)


def lognormal_sample_truncated(mu, sigma, lower, rng: np.random.Generator):
    """Draw from LogNormal(mu, sigma) conditioned on exceeding ``lower``.

    Inverse-CDF on the upper tail: ``S(x) = S(lower) * v`` with ``v ~ U(0, 1)``,
    solved in log space where ``S(lower)`` is below :data:`MIN_TAIL_MASS`.
    Returns ``(values, ok)``; ``ok`` is False (and the value ``nan``) only
    where even the log tail mass is not finite.
    """
    mu, sigma, lower = np.broadcast_arrays(
        np.asarray(mu, float), np.asarray(sigma, float), np.asarray(lower, float)
    )
    with np.errstate(divide="ignore"):
        zc = (np.log(lower) - mu) / sigma
    tail = special.ndtr(-zc)
    v = _open_uniform(rng, mu.shape)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        z = np.asarray(-special.ndtri(tail * v), dtype=float)
        far = tail <= MIN_TAIL_MASS
        if np.any(far):
            log_tail = special.log_ndtr(-zc[far])
            z[far] = -special.ndtri_exp(log_tail + np.log(v[far]))
        x = np.exp(mu + sigma * z)
        ok = np.isfinite(x)
        x = np.maximum(x, np.nextafter(lower, np.inf))
    return np.where(ok, x, np.nan), ok


def weibull_sample_truncated(shape, scale, lower, rng: np.random.Generator):
    """Weibull analogue of :func:`lognormal_sample_truncated`.

    Uses the cumulative hazard: ``H(x) = H(lower) + E`` with ``E ~ Exp(1)``,
    which stays exact however far out ``lower`` lies.
    """
    shape, scale, lower = np.broadcast_arrays(
        np.asarray(shape, float), np.asarray(scale, float), np.asarray(lower, float)
    )
    hc = (lower / scale) ** shape
    e = -np.log(_open_uniform(rng, shape.shape))
    with np.errstate(over="ignore"):
        x = scale * (hc + e) ** (1.0 / shape)
        ok = np.isfinite(x)
        x = np.maximum(x, np.nextafter(lower, np.inf))
    return np.where(ok, x, np.nan), ok


# ---------------------------------------------------------------------------
# scalar interface


def _check_t(t, allow_zero: bool):
    if not np.isfinite(t) or t < 0 or (t == 0 and not allow_zero):
        raise ValueError(f"time must be {'nonnegative' if allow_zero else 'positive'}, got {t}")


def _cumhaz(x: float, k: float) -> float:
    # float ** raises instead of returning inf
    try:
        return x ** k
    except OverflowError:
        return math.inf


def log_density(params: KernelParams, t: float) -> float:
    _check_t(t, allow_zero=False)
    if isinstance(params, LogNormal):
        return float(lognormal_logpdf(t, params.mu, params.sigma))
    k, lam = params.shape, params.scale
    x = t / lam
    return math.log(k / lam) + (k - 1.0) * math.log(x) - _cumhaz(x, k)


def log_survival(params: KernelParams, t: float) -> float:
    _check_t(t, allow_zero=True)
    if t == 0:
        return 0.0
    if isinstance(params, LogNormal):
        return float(lognormal_logsf(t, params.mu, params.sigma))
    return -_cumhaz(t / params.scale, params.shape)


def kernel_density(params: KernelParams, t: float) -> float:
    """Density f(t | params) for t > 0."""
    return math.exp(log_density(params, t))


def kernel_survival(params: KernelParams, t: float) -> float:
    """Survival function S(t | params) = 1 - CDF(t) for t >= 0."""
    return math.exp(log_survival(params, t))


def kernel_quantile(params: KernelParams, p: float) -> float:
    """Inverse CDF at ``p`` in [0, 1)."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"p must lie in [0, 1), got {p}")
    if p == 0.0:
        return 0.0
    if isinstance(params, LogNormal):
        z = -special.ndtri(1.0 - p) if p > 0.5 else special.ndtri(p)
        return math.exp(params.mu + params.sigma * z)
    return params.scale * (-math.log1p(-p)) ** (1.0 / params.shape)


def sample_truncated(params: KernelParams, lower: float, rng: np.random.Generator, size=None):
    """Draw from the kernel conditioned on exceeding ``lower``.

    Raises :class:`TruncationError` when no finite value beyond ``lower``
    can be represented.
    """
    _check_t(lower, allow_zero=True)
    if isinstance(params, LogNormal):
        x, ok = lognormal_sample_truncated(
            np.full(size or (), params.mu), params.sigma, lower, rng)
    else:
        x, ok = weibull_sample_truncated(
            np.full(size or (), params.shape), params.scale, lower, rng)
    if not np.all(ok):
        raise TruncationError(f"no numerical support beyond {lower} for {params}")
    return x if size is not None else float(x)


def sample(params: KernelParams, rng: np.random.Generator, size=None):
    """Untruncated draws."""
    if isinstance(params, LogNormal):
        return rng.lognormal(params.mu, params.sigma, size)
    return params.scale * rng.weibull(params.shape, size)


# ---------------------------------------------------------------------------
# conjugate updates


def nig_posterior(base: BaseMeasure, values) -> BaseMeasure:
    """Normal-inverse-gamma posterior given positive ``values`` (log-normal data)."""
    x = np.log(_check_values(values))
    n = x.size
    if n == 0:
        return base
    xbar = x.mean()
    ss = float(np.sum((x - xbar) ** 2))
    kappa_n = base.kappa0 + n
    m_n = (base.kappa0 * base.m0 + n * xbar) / kappa_n
    a_n = base.a0 + 0.5 * n
    b_n = base.b0 + 0.5 * ss + base.kappa0 * n * (xbar - base.m0) ** 2 / (2.0 * kappa_n)
    return BaseMeasure(float(m_n), float(kappa_n), float(a_n), float(b_n))


def _check_values(values) -> np.ndarray:
    v = np.asarray(values, dtype=float).ravel()
    if np.any(~(v > 0)):
        raise ValueError("atom values must be positive")
    return v


def draw_atom_posterior(base: BaseMeasure, values, rng: np.random.Generator) -> LogNormal:
    """Draw a log-normal atom from the posterior given the values assigned to it."""
    post = nig_posterior(base, values)
    mu, sigma = draw_nig(np.array([post.m0]), np.array([post.kappa0]), np.array([post.a0]),
                         np.array([post.b0]), rng)
    return LogNormal(float(mu[0]), float(sigma[0]))


def draw_nig(m, kappa, a, b, rng: np.random.Generator):
    """Vectorized (mu, sigma) draws from NIG(m, kappa, a, b)."""
    sigma2 = b / rng.gamma(a)
    mu = m + np.sqrt(sigma2 / kappa) * rng.standard_normal(np.shape(m))
    return mu, np.sqrt(sigma2)


def draw_atoms(base: BaseMeasure, log_values: np.ndarray, atom_index: np.ndarray,
               n_atoms: int, rng: np.random.Generator):
    """Posterior draws for ``n_atoms`` log-normal atoms at once.

    ``log_values[i]`` is assigned to atom ``atom_index[i]``; atoms with no
    values are drawn from the base measure.
    """
    n = np.bincount(atom_index, minlength=n_atoms).astype(float)
    s = np.bincount(atom_index, weights=log_values, minlength=n_atoms)
    xbar = np.divide(s, n, out=np.zeros(n_atoms), where=n > 0)
    ss = np.bincount(atom_index, weights=(log_values - xbar[atom_index]) ** 2, minlength=n_atoms)
    kappa_n = base.kappa0 + n
    m_n = (base.kappa0 * base.m0 + s) / kappa_n
    a_n = base.a0 + 0.5 * n
    b_n = base.b0 + 0.5 * ss + base.kappa0 * n * (xbar - base.m0) ** 2 / (2.0 * kappa_n)
    return draw_nig(m_n, kappa_n, a_n, b_n, rng)
