"""Grouped right-censored survival data."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


class DataError(ValueError):
    """Raised when a dataset violates its invariants."""


@dataclass(frozen=True)
class Observation:
    time: float
    event: bool
    group: int


@dataclass(frozen=True, eq=False)
class Dataset:
    """Column-oriented collection of observations.

    ``times`` holds the recorded time ``min(event time, censoring time)``,
    ``events`` is True where the event was observed and ``groups`` holds dense
    group indices ``0..J-1``. ``labels`` maps each dense index back to the
    original group label.
    """

    times: np.ndarray
    events: np.ndarray
    groups: np.ndarray
    labels: tuple = field(default=())

    def __post_init__(self):
        times = np.array(self.times, dtype=float)
        events = np.array(self.events, dtype=bool)
        groups = np.array(self.groups, dtype=np.int64)
        for arr in (times, events, groups):
            arr.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "events", events)
        object.__setattr__(self, "groups", groups)
        if not self.labels and groups.size:
            object.__setattr__(self, "labels", tuple(str(g) for g in range(int(groups.max()) + 1)))

    @classmethod
    def from_observations(cls, observations: Iterable[Observation], labels: Sequence = ()) -> "Dataset":
        obs = list(observations)
        return cls(
            times=[o.time for o in obs],
            events=[o.event for o in obs],
            groups=[o.group for o in obs],
            labels=tuple(labels),
        )

    def __len__(self) -> int:
        return int(self.times.size)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            np.array_equal(self.times, other.times)
            and np.array_equal(self.events, other.events)
            and np.array_equal(self.groups, other.groups)
            and tuple(self.labels) == tuple(other.labels)
        )

    @property
    def observations(self) -> list[Observation]:
        return [
            Observation(float(t), bool(e), int(g))
            for t, e, g in zip(self.times, self.events, self.groups)
        ]

    @property
    def group_count(self) -> int:
        return len(self.labels)

    @property
    def group_sizes(self) -> np.ndarray:
        return np.bincount(self.groups, minlength=self.group_count)

    @property
    def censored_fraction(self) -> float:
        return float(1.0 - self.events.mean())

    def group(self, j: int) -> "Dataset":
        """Observations of group ``j`` as a single-group dataset."""
        mask = self.groups == j
        return Dataset(self.times[mask], self.events[mask], np.zeros(mask.sum(), dtype=np.int64),
                       labels=(self.labels[j],))

    def relabel(self, permutation: Sequence[int]) -> "Dataset":
        """Dataset with group ``j`` renamed to ``permutation[j]``."""
        perm = np.asarray(permutation, dtype=np.int64)
        labels = [None] * len(perm)
        for old, new in enumerate(perm):
            labels[new] = self.labels[old]
        return Dataset(self.times, self.events, perm[self.groups], labels=tuple(labels))


def validate(dataset: Dataset) -> Dataset:
    """Return ``dataset`` unchanged, or raise :class:`DataError`."""
    n = len(dataset)
    if n == 0:
        raise DataError("empty dataset")
    if not (dataset.events.size == n and dataset.groups.size == n):
        raise DataError("column lengths differ")
    t = dataset.times
    if not np.all(np.isfinite(t)):
        raise DataError(f"nonfinite time at row {int(np.argmin(np.isfinite(t)))}")
    if np.any(t <= 0):
        raise DataError(f"nonpositive time at row {int(np.argmax(t <= 0))}")
    J = dataset.group_count
    g = dataset.groups
    if np.any(g < 0) or np.any(g >= J):
        bad = int(np.argmax((g < 0) | (g >= J)))
        raise DataError(f"unknown group index {int(g[bad])} at row {bad}")
    if np.any(dataset.group_sizes == 0):
        raise DataError(f"empty group {int(np.argmin(dataset.group_sizes))}")
    return dataset
