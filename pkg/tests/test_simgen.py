import math

import numpy as np
import pytest
from scipy import stats

from bnpsurv.kernels import LogNormal, Weibull, kernel_survival
from bnpsurv.simgen import (
    SCENARIO_GRID, MixtureSpec, ScenarioConfig, calibrate_censoring_rate, default_mixtures,
    draw_event_times, generate_dataset, separated_mixtures,
)


def direct_mixture_sample(mix, n, rng):
    comp = rng.choice(len(mix.components), size=n, p=mix.weights)
    out = np.empty(n)
    for c, k in enumerate(mix.components):
        sel = comp == c
        out[sel] = (rng.lognormal(k.mu, k.sigma, sel.sum()) if isinstance(k, LogNormal)
                    else k.scale * rng.weibull(k.shape, sel.sum()))
    return out


@pytest.mark.parametrize("mix", default_mixtures())
def test_unit_frailty_is_plain_mixture(mix, rng):
    x = draw_event_times(mix, 1.0, rng, size=10_000)
    assert stats.ks_2samp(x, direct_mixture_sample(mix, 10_000, rng)).pvalue > 0.01


def test_frailty_scales_exponential_rate(rng):
    x = draw_event_times(MixtureSpec.of((1.0, Weibull(1, 1))), 2.0, rng, size=10_000)
    assert abs(x.mean() - 0.5) < 0.015


def test_degenerate_weights(rng):
    mix = MixtureSpec.of((1.0, LogNormal(-5, 0.1)), (0.0, LogNormal(5, 0.1)))
    assert draw_event_times(mix, 1.0, rng, size=2000).max() < 1.0


def test_frailty_tilts_survival():
    mix = default_mixtures()[0]
    t = np.array([0.3, 1.0, 4.0])
    # each component's hazard is scaled, so the tilt acts inside the mixture
    per_comp = np.array([[kernel_survival(k, x) ** 2.5 for k in mix.components] for x in t])
    np.testing.assert_allclose(mix.survival(t, 2.5), per_comp @ np.array(mix.weights), rtol=1e-12)
    for p in (0.1, 0.5, 0.9):
        assert 1 - mix.survival(mix.quantile(p, 1.7), 1.7) == pytest.approx(p, abs=1e-9)


def test_zero_target_means_no_censoring():
    assert calibrate_censoring_rate(default_mixtures(), 0.0, np.random.default_rng(0)) == 0.0
    sim = generate_dataset(ScenarioConfig(J=5, n_j=10, target_censoring=0.0, seed=1))
    assert sim.dataset.events.all()


def test_calibrated_rate_hits_target():
    specs = default_mixtures()
    rate = calibrate_censoring_rate(specs, 0.5, np.random.default_rng(0))
    # independent Monte-Carlo check with fresh draws
    r = np.random.default_rng(99)
    n = 100_000
    which = r.integers(0, 3, n)
    u = r.gamma(1.0, 1.0, n)
    x = np.empty(n)
    for m in range(3):
        sel = which == m
        x[sel] = draw_event_times(specs[m], u[sel], r, size=int(sel.sum()))
    c = r.exponential(1 / rate, n)
    assert abs(np.mean(c < x) - 0.5) < 0.02


def test_more_censoring_needs_faster_censoring():
    specs = default_mixtures()
    lo = calibrate_censoring_rate(specs, 0.4, np.random.default_rng(0))
    hi = calibrate_censoring_rate(specs, 0.6, np.random.default_rng(0))
    assert hi > lo


def test_default_scenario_shape():
    sim = generate_dataset(ScenarioConfig(J=30, n_j=20, seed=3))
    d = sim.dataset
    assert len(d) == 600 and d.group_count == 30
    assert abs(d.censored_fraction - 0.5) < 0.05
    assert list(np.bincount(sim.true_mixture_per_group)) == [10, 10, 10]


def test_frailty_mean_over_groups():
    sim = generate_dataset(ScenarioConfig(J=200, n_j=2, seed=8))
    assert abs(sim.true_frailty_per_group.mean() - 1.0) < 0.2


def test_frailty_can_be_disabled():
    sim = generate_dataset(ScenarioConfig(J=4, n_j=3, frailty_shape=None, seed=0))
    assert np.all(sim.true_frailty_per_group == 1.0)


def test_generation_is_deterministic():
    cfg = ScenarioConfig(J=10, n_j=5, seed=12)
    a, b = generate_dataset(cfg), generate_dataset(cfg)
    assert a.dataset == b.dataset
    assert a.censoring_rate == b.censoring_rate
    np.testing.assert_array_equal(a.true_frailty_per_group, b.true_frailty_per_group)


def test_replicate_keeps_groups():
    sim = generate_dataset(ScenarioConfig(J=6, n_j=4, seed=2))
    rep = sim.replicate(np.random.default_rng(0))
    assert rep.labels == sim.dataset.labels
    np.testing.assert_array_equal(rep.group_sizes, sim.dataset.group_sizes)
    assert not np.array_equal(rep.times, sim.dataset.times)


def test_truth_curves():
    sim = generate_dataset(ScenarioConfig(J=3, n_j=4, seed=2))
    j = 1
    m, u = sim.true_mixture_per_group[j], sim.true_frailty_per_group[j]
    spec = sim.specs[m]
    tilted = sum(w * kernel_survival(k, 1.3) ** u for w, k in zip(spec.weights, spec.components))
    assert sim.group_survival(j)(1.3) == pytest.approx(tilted, rel=1e-12)
    assert sim.true_survival(m)(1.3) == pytest.approx(sim.specs[m].survival(1.3))


def test_scenario_grid_totals():
    assert all(J * n == 600 for J, n in SCENARIO_GRID)
    assert len(separated_mixtures()) == 3


def test_invalid_scenarios():
    with pytest.raises(ValueError):
        ScenarioConfig(J=0)
    with pytest.raises(ValueError):
        ScenarioConfig(target_censoring=1.0)
    with pytest.raises(ValueError):
        MixtureSpec.of((0.5, LogNormal(0, 1)), (0.2, LogNormal(1, 1)))
