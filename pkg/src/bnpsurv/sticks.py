"""Truncated stick-breaking weights and their blocked-Gibbs conditionals.

Proportions ``v`` have length ``L - 1``; the last weight is the leftover
stick, so the weights are normalized by construction. All functions accept
a trailing axis of sticks and broadcast over leading axes (one row per
group or cluster).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Beta draws can round to exactly 0 or 1; keep proportions strictly inside (0, 1)
_V_MIN = 1e-300
_V_MAX = 1.0 - 2.0 ** -53


@dataclass(frozen=True)
class GammaPrior:
    shape: float = 1.0
    rate: float = 1.0


@dataclass
class Sticks:
    v: np.ndarray
    alpha: float

    @property
    def w(self) -> np.ndarray:
        return break_sticks(self.v)

    @property
    def size(self) -> int:
        return self.v.shape[-1] + 1


def break_sticks(v) -> np.ndarray:
    """Weights ``w_l = v_l * prod_{m<l} (1 - v_m)``; the final weight is the remainder."""
    v = np.asarray(v, dtype=float)
    if np.any((v <= 0) | (v >= 1)):
        raise ValueError("stick proportions must lie strictly inside (0, 1)")
    shape = v.shape[:-1] + (v.shape[-1] + 1,)
    remaining = np.ones(shape)
    remaining[..., 1:] = np.cumprod(1.0 - v, axis=-1)
    w = np.empty(shape)
    w[..., :-1] = v * remaining[..., :-1]
    # remainder closes the sum to 1 without accumulating rounding in the last weight
    w[..., -1] = 1.0 - w[..., :-1].sum(axis=-1)
    w[..., -1] = np.maximum(w[..., -1], 0.0)
    return w


def update_sticks(counts, alpha, rng: np.random.Generator) -> np.ndarray:
    """Draw ``v_l ~ Beta(1 + n_l, alpha + sum_{m>l} n_m)`` for ``l < L``.

    ``alpha`` broadcasts against the leading axes of ``counts``.
    """
    counts = np.asarray(counts)
    if np.any(counts < 0):
        raise ValueError("occupancy counts must be nonnegative")
    counts = counts.astype(float)
    tail = np.cumsum(counts[..., ::-1], axis=-1)[..., ::-1]
    a = 1.0 + counts[..., :-1]
    b = np.asarray(alpha, dtype=float)[..., None] + tail[..., 1:]
    v = rng.beta(a, b)
    return np.clip(v, _V_MIN, _V_MAX)


def update_concentration(v, prior: GammaPrior, rng: np.random.Generator) -> float:
    """Draw alpha from ``Gamma(a + #sticks, b - sum log(1 - v))`` (rate form).

    All proportions in ``v`` are pooled, so one concentration shared by
    several stick sequences is updated with every stick at once.
    """
    v = np.asarray(v, dtype=float)
    if np.any((v <= 0) | (v >= 1)):
        raise ValueError("stick proportions must lie strictly inside (0, 1)")
    shape = prior.shape + v.size
    rate = prior.rate - np.log1p(-v).sum()
    return float(rng.gamma(shape, 1.0 / rate))
