"""Weibull shared gamma-frailty model fitted by maximum likelihood.

Group ``j`` has hazard ``u_j * h(t)`` with ``h(t) = k t^(k-1) / lam^k`` and a
mean-one gamma frailty ``u_j`` of variance ``theta``. The frailty integrates
out in closed form, giving the marginal group likelihood used here.
Parameters are optimized on the log scale and the covariance of the
log-parameters is the inverse of the finite-difference hessian of the
negative log-likelihood at the optimum.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize
from scipy.special import gammaln

from .data_model import Dataset

THETA_MIN = 1e-8


@dataclass(frozen=True)
class GfmParams:
    shape: float
    scale: float
    frailty_var: float

    def __post_init__(self):
        if not (self.shape > 0 and self.scale > 0 and self.frailty_var > 0):
            raise ValueError("GFM parameters must be positive")

    @property
    def log(self) -> np.ndarray:
        return np.log([self.shape, self.scale, self.frailty_var])

    @classmethod
    def from_log(cls, x) -> "GfmParams":
        k, lam, theta = np.exp(np.asarray(x, dtype=float))
        return cls(float(k), float(lam), float(theta))


@dataclass(frozen=True)
class GfmFit:
    params: GfmParams
    covariance: np.ndarray | None
    neg_loglik_at_mle: float
    hessian_ok: bool = True

    @property
    def std_errors(self) -> np.ndarray | None:
        if self.covariance is None:
            return None
        return np.sqrt(np.diag(self.covariance))


def _group_terms(k, lam, data: Dataset):
    t = data.times
    cumhaz = (t / lam) ** k
    logh = math.log(k) - k * math.log(lam) + (k - 1.0) * np.log(t)
    J = data.group_count
    d = np.bincount(data.groups, weights=data.events, minlength=J)
    H = np.bincount(data.groups, weights=cumhaz, minlength=J)
    sum_logh = float(logh[data.events].sum())
    return sum_logh, d, H


def gfm_neg_loglik(params: GfmParams, data: Dataset) -> float:
    """Negative marginal log-likelihood with the group frailties integrated out."""
    k, lam, theta = params.shape, params.scale, params.frailty_var
    sum_logh, d, H = _group_terms(k, lam, data)
    if theta < THETA_MIN:
        return float(-(sum_logh - H.sum()))
    a = 1.0 / theta
    # a log a + lgamma(a + d) - lgamma(a) - (a + d) log(a + H), regrouped to avoid
    # cancellation when a is large
    per_group = gammaln(a + d) - gammaln(a) - d * math.log(a) - (a + d) * np.log1p(H / a)
    return float(-(sum_logh + per_group.sum()))


def _objective(x, data):
    try:
        val = gfm_neg_loglik(GfmParams.from_log(x), data)
    except (ValueError, OverflowError, FloatingPointError):
        return np.inf
    return val if np.isfinite(val) else np.inf


def _start(data: Dataset) -> np.ndarray:
    events = max(int(data.events.sum()), 1)
    return np.log([1.0, data.times.sum() / events, 1.0])


def finite_difference_hessian(f, x, step: float = 1e-4) -> np.ndarray:
    """Central-difference hessian of scalar ``f`` at ``x``."""
    x = np.asarray(x, dtype=float)
    n = x.size
    hess = np.empty((n, n))
    f0 = f(x)
    e = np.eye(n) * step
    for i in range(n):
        hess[i, i] = (f(x + e[i]) - 2.0 * f0 + f(x - e[i])) / step ** 2
        for j in range(i + 1, n):
            hess[i, j] = hess[j, i] = (
                f(x + e[i] + e[j]) - f(x + e[i] - e[j]) - f(x - e[i] + e[j]) + f(x - e[i] - e[j])
            ) / (4.0 * step ** 2)
    return hess


def fit_gfm(data: Dataset, restarts: int = 3, seed: int = 0) -> GfmFit:
    """Maximum-likelihood fit by Nelder-Mead on the log-parameters.

    The search starts from a moment-based guess and ``restarts`` perturbed
    copies of it (perturbations are seeded, so refits are identical); the
    best optimum is kept.
    """
    if not data.events.any():
        raise ValueError("cannot fit a frailty model without events")
    rng = np.random.default_rng(seed)
    x0 = _start(data)
    starts = [x0] + [x0 + rng.normal(0.0, 0.5, size=3) for _ in range(restarts)]
    best = None
    for s in starts:
        res = optimize.minimize(_objective, s, args=(data,), method="Nelder-Mead",
                                options={"xatol": 1e-8, "fatol": 1e-10, "maxiter": 20000,
                                         "maxfev": 40000})
        # polish from the optimum to shake off a collapsed simplex
        res = optimize.minimize(_objective, res.x, args=(data,), method="Nelder-Mead",
                                options={"xatol": 1e-9, "fatol": 1e-12, "maxiter": 20000,
                                         "maxfev": 40000})
        if best is None or res.fun < best.fun:
            best = res
    x = best.x
    hess = finite_difference_hessian(lambda z: _objective(z, data), x)
    cov, ok = None, False
    if np.all(np.isfinite(hess)):
        try:
            cov = np.linalg.inv(hess)
            cov = 0.5 * (cov + cov.T)
            ok = bool(np.all(np.diag(cov) > 0))
        except np.linalg.LinAlgError:
            cov = None
    if not ok:
        cov = None
    return GfmFit(GfmParams.from_log(x), cov, float(best.fun), ok)


def gfm_marginal_survival(params: GfmParams, t) -> np.ndarray | float:
    """Population survival ``(1 + theta H(t))^(-1/theta)``; ``exp(-H)`` as theta -> 0."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("time must be nonnegative")
    H = (t / params.scale) ** params.shape
    theta = params.frailty_var
    out = np.exp(-H) if theta < THETA_MIN else np.exp(-np.log1p(theta * H) / theta)
    return float(out) if out.ndim == 0 else out


@dataclass
class GfmTrace:
    """Parameter draws from the asymptotic normal of a fit, in trace form.

    Exposes the same scoring interface as the MCMC traces so the frailty
    baseline can be evaluated alongside them. Every group receives the
    population-marginal curve.
    """

    fit: GfmFit
    draws: list
    group_count: int
    model: str = "gfm"

    @classmethod
    def from_fit(cls, fit: GfmFit, group_count: int, n_draws: int = 1000, seed: int = 0) -> "GfmTrace":
        rng = np.random.default_rng(seed)
        mean = fit.params.log
        if fit.covariance is None:
            xs = np.tile(mean, (n_draws, 1))
        else:
            xs = rng.multivariate_normal(mean, fit.covariance, size=n_draws, method="eigh")
        return cls(fit, [{"log_params": x} for x in xs], group_count)

    def __len__(self) -> int:
        return len(self.draws)

    def _params(self) -> np.ndarray:
        return np.exp(np.array([d["log_params"] for d in self.draws]))

    def log_score_matrix(self, data: Dataset) -> np.ndarray:
        p = self._params()
        k, lam, theta = p[:, :1], p[:, 1:2], p[:, 2:3]
        t = data.times[None, :]
        H = (t / lam) ** k
        logh = np.log(k) - k * np.log(lam) + (k - 1.0) * np.log(t)
        small = theta < THETA_MIN
        th = np.where(small, 1.0, theta)
        log1p_term = np.where(small, H, np.log1p(th * H) / th)
        logS = -log1p_term
        logf = logh - log1p_term - np.where(small, 0.0, np.log1p(th * H))
        return np.where(data.events[None, :], logf, logS)

    def survival_draws(self, group: int, grid) -> np.ndarray:
        grid = np.asarray(grid, dtype=float)
        return np.array([gfm_marginal_survival(GfmParams(*row), grid) for row in self._params()])
