"""Fitting and scoring across simulated scenarios."""
from __future__ import annotations

import logging
from collections import Counter
from dataclasses import replace
from typing import Iterable, Sequence

import numpy as np
from sklearn.metrics import adjusted_rand_score

from .data_model import Dataset
from .evaluation import (
    DEFAULT_PERCENTILES, coverage_at_percentiles, credible_band, default_grid, mean_lppd,
    survival_quantile,
)
from .frailty import GfmTrace, fit_gfm
from .kernels import BaseMeasure
from .samplers import McmcConfig, run_chain
from .simgen import SCENARIO_GRID, ScenarioConfig, SimulatedDataset, generate_dataset

log = logging.getLogger(__name__)

COMPARE_MODELS = ("dp", "hdp", "ndp", "gfm")
GFM_DRAWS = 1000


def fit_model(model: str, data: Dataset, config: McmcConfig = McmcConfig(),
              base: BaseMeasure | None = None):
    """Fit ``model`` and return a trace exposing ``log_score_matrix``/``survival_draws``."""
    if model == "gfm":
        fit = fit_gfm(data, seed=config.seed)
        return GfmTrace.from_fit(fit, data.group_count, n_draws=GFM_DRAWS, seed=config.seed)
    return run_chain(model, data, config, base)


def group_curve_table(trace, grid, level: float = 0.95):
    """Posterior mean and band of every group's survival curve on ``grid``."""
    for j in range(trace.group_count):
        draws = trace.survival_draws(j, grid)
        band = credible_band(draws, level, grid)
        yield j, grid, draws.mean(axis=0), band.lower, band.upper


def group_coverage(trace, group: int, truth, percentiles=DEFAULT_PERCENTILES,
                   level: float = 0.95) -> float:
    points = np.array([survival_quantile(truth, p) for p in percentiles])
    order = np.argsort(points)
    grid = points[order]
    band = credible_band(trace.survival_draws(group, grid), level, grid)
    return coverage_at_percentiles(band, truth, points=points)


def score(trace, sim: SimulatedDataset, scoring_data: Dataset | None = None, grid=None,
          percentiles: Sequence[float] = DEFAULT_PERCENTILES, level: float = 0.95,
          truth: str = "group") -> dict:
    """The three comparison metrics for one fitted trace.

    ``mean_lppd`` is computed on ``scoring_data`` (the fitting data by
    default); ``mean_width`` averages each group's band width over ``grid``;
    ``coverage`` averages, over groups, the fraction of percentile points at
    which the band contains the true curve. ``truth="group"`` scores each
    group against its frailty-tilted generating law, ``"mixture"`` against
    the untilted mixture.
    """
    data = sim.dataset
    scoring_data = data if scoring_data is None else scoring_data
    grid = default_grid(data) if grid is None else np.asarray(grid, dtype=float)
    widths, covs = [], []
    for j in range(trace.group_count):
        draws = trace.survival_draws(j, grid)
        widths.append(credible_band(draws, level, grid).mean_width)
        curve = (sim.group_survival(j) if truth == "group"
                 else sim.true_survival(int(sim.true_mixture_per_group[j])))
        covs.append(group_coverage(trace, j, curve, percentiles, level))
    return {
        "mean_lppd": mean_lppd(trace, scoring_data),
        "mean_width": float(np.mean(widths)),
        "coverage": float(np.mean(covs)),
    }


def canonical_partition(labels) -> tuple:
    """Relabel cluster ids by order of first appearance."""
    seen: dict[int, int] = {}
    return tuple(seen.setdefault(int(x), len(seen)) for x in labels)


def modal_partition(trace) -> tuple:
    """Most frequent group partition among the retained NDP draws."""
    if trace.model != "ndp":
        raise ValueError("group partitions exist only for the ndp model")
    counts = Counter(canonical_partition(d["zeta"]) for d in trace.draws)
    return counts.most_common(1)[0][0]


def partition_ari(trace, true_labels) -> float:
    """Adjusted Rand index between the modal NDP partition and ``true_labels``."""
    return float(adjusted_rand_score(np.asarray(true_labels), np.asarray(modal_partition(trace))))


def scenario_name(J: int, n_j: int) -> str:
    return f"J{J}_n{n_j}"


def compare(scenarios: Iterable[tuple[int, int]] = SCENARIO_GRID,
            models: Sequence[str] = COMPARE_MODELS, replicates: int = 3,
            config: McmcConfig = McmcConfig(), seed: int = 0, holdout: bool = False,
            target_censoring: float = 0.5, truth: str = "group", specs=None) -> list[dict]:
    """Fit every model to every replicate of every scenario and score it.

    Replicate ``r`` of a scenario is simulated with seed ``seed + r`` and all
    models are fitted to the same dataset with that seed. With ``holdout``,
    lppd is scored on a fresh replicate of the same groups.
    """
    rows = []
    for J, n_j in scenarios:
        for r in range(replicates):
            s = seed + r
            sim = generate_dataset(ScenarioConfig(J=J, n_j=n_j, target_censoring=target_censoring,
                                                  seed=s), specs)
            held = sim.replicate(np.random.default_rng([s, 1])) if holdout else None
            for model in models:
                log.info("fitting %s on %s replicate %d", model, scenario_name(J, n_j), r)
                trace = fit_model(model, sim.dataset, replace(config, seed=s))
                metrics = score(trace, sim, held, truth=truth)
                rows.append({"model": model, "scenario": scenario_name(J, n_j), "replicate": r,
                             **metrics})
    return rows


def summarize_rows(rows: list[dict]) -> list[dict]:
    """Mean of each metric over replicates, per model and scenario."""
    keyed: dict[tuple, list[dict]] = {}
    for r in rows:
        keyed.setdefault((r["model"], r["scenario"]), []).append(r)
    return [
        {"model": m, "scenario": s, "replicate": "mean",
         **{k: float(np.mean([r[k] for r in rs])) for k in ("mean_lppd", "mean_width", "coverage")}}
        for (m, s), rs in keyed.items()
    ]
