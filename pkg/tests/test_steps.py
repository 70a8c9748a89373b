import math

import numpy as np
import pytest

from bnpsurv.data_model import Observation
from bnpsurv.kernels import LogNormal, Weibull, kernel_density, kernel_survival
from bnpsurv.samplers import (
    assign_group_ndp, assign_observation, assignment_probabilities, augment_censored,
    censored_component_score, group_assignment_probabilities, sample_log_categorical,
)
from bnpsurv.samplers.steps import group_log_likelihoods
from scipy import stats

# one group of 20 events and the two clusters of tests/oracles/generate.py
NDP_GROUP = [0.6137, 1.0842, 2.9310, 0.8126, 1.4475, 3.8201, 0.5534, 0.9902, 4.1167, 1.2090,
             0.7741, 2.4503, 1.6018, 0.4402, 3.3089, 1.0313, 0.6920, 2.7765, 1.3358, 0.9127]
TRUE_CLUSTER = ([0.6, 0.4], [LogNormal(0.0, 0.5), LogNormal(1.2, 0.4)])
SHIFTED_CLUSTER = ([0.6, 0.4], [LogNormal(3.0, 0.5), LogNormal(4.2, 0.4)])
ORACLE_GROUP_LOGLIK = (-24.845759293681156, -334.22334593527734)


def test_score_branches():
    atom = Weibull(1, 1)
    assert censored_component_score(Observation(1.0, True, 0), atom) == pytest.approx(math.exp(-1))
    assert censored_component_score(Observation(1.0, False, 0), atom) == pytest.approx(math.exp(-1))
    assert censored_component_score(Observation(0.0, False, 0), LogNormal(2, 0.1)) == 1.0


def test_assignment_probability_examples():
    w, atoms = [0.6, 0.4], [Weibull(1, 1), Weibull(1, 0.5)]
    p_c = assignment_probabilities(Observation(1.0, False, 0), w, atoms)
    a, b = 0.6 * math.exp(-1), 0.4 * math.exp(-2)
    np.testing.assert_allclose(p_c, [a / (a + b), b / (a + b)], rtol=1e-12)
    np.testing.assert_allclose(p_c, [0.8031, 0.1969], atol=1e-4)
    p_e = assignment_probabilities(Observation(1.0, True, 0), w, atoms)
    a, b = 0.6 * math.exp(-1), 0.4 * 2 * math.exp(-2)
    np.testing.assert_allclose(p_e, [a / (a + b), b / (a + b)], rtol=1e-12)
    np.testing.assert_allclose(p_e, [0.6709, 0.3291], atol=1e-4)


def test_single_atom_always_zero(rng):
    for t in (0.1, 1.0, 50.0):
        assert assign_observation(Observation(t, False, 0), [1.0], [LogNormal(0, 1)], rng) == 0


def test_underflowing_scores_fall_back_to_weights():
    # cumulative hazard overflows, so both log-survivals are -inf
    p = assignment_probabilities(Observation(1e10, False, 0), [0.3, 0.7],
                                 [Weibull(50, 1e-10), Weibull(60, 1e-10)])
    np.testing.assert_allclose(p, [0.3, 0.7])


def test_log_categorical_frequencies(rng):
    logp = np.log(np.tile([0.2, 0.5, 0.3], (20_000, 1))) + 7.0
    idx = sample_log_categorical(logp, rng)
    freq = np.bincount(idx, minlength=3) / idx.size
    np.testing.assert_allclose(freq, [0.2, 0.5, 0.3], atol=0.015)


def test_log_categorical_fallback(rng):
    logp = np.full((5, 2), -np.inf)
    idx = sample_log_categorical(logp, rng, fallback=np.log([0.0 + 1e-300, 1.0]))
    assert np.all(idx == 1)


def test_augment_memoryless(rng):
    obs = Observation(2.0, False, 0)
    x = np.array([augment_censored(obs, Weibull(1, 1), rng) for _ in range(10_000)])
    assert x.min() > 2.0
    assert abs(x.mean() - 3.0) < 0.05


def test_augment_matches_rejection_oracle(rng):
    obs = Observation(1.5, False, 0)
    x = np.array([augment_censored(obs, LogNormal(0, 1), rng) for _ in range(10_000)])
    ref = []
    while len(ref) < 10_000:
        z = rng.lognormal(0.0, 1.0, 50_000)
        ref.extend(z[z > 1.5])
    assert stats.ks_2samp(x, np.array(ref[:10_000])).pvalue > 0.01


def test_augment_rejects_events(rng):
    with pytest.raises(ValueError):
        augment_censored(Observation(1.0, True, 0), LogNormal(0, 1), rng)


def test_group_loglik_matches_extended_precision_oracle():
    obs = [Observation(t, True, 0) for t in NDP_GROUP]
    ll = group_log_likelihoods(obs, [TRUE_CLUSTER, SHIFTED_CLUSTER])
    np.testing.assert_allclose(ll, ORACLE_GROUP_LOGLIK, rtol=1e-12)


def test_true_cluster_chosen(rng):
    obs = [Observation(t, True, 0) for t in NDP_GROUP]
    picks = [assign_group_ndp(obs, [0.5, 0.5], [TRUE_CLUSTER, SHIFTED_CLUSTER], rng) for _ in range(500)]
    assert np.mean(np.array(picks) == 0) > 0.95


def test_degenerate_top_weights(rng):
    obs = [Observation(t, True, 0) for t in NDP_GROUP[:5]]
    picks = {assign_group_ndp(obs, [1.0, 0.0], [SHIFTED_CLUSTER, TRUE_CLUSTER], rng) for _ in range(200)}
    assert picks == {0}


def test_identical_clusters_are_equiprobable():
    obs = [Observation(t, e, 0) for t, e in [(0.3, True), (2.0, False), (5.0, True)]]
    p = group_assignment_probabilities(obs, [0.5, 0.5], [TRUE_CLUSTER, TRUE_CLUSTER])
    np.testing.assert_allclose(p, [0.5, 0.5])


def test_censored_group_uses_survival():
    obs = [Observation(2.0, False, 0)]
    cluster = ([1.0], [Weibull(1, 1)])
    assert group_log_likelihoods(obs, [cluster])[0] == pytest.approx(-2.0)
    assert kernel_survival(Weibull(1, 1), 2.0) == pytest.approx(math.exp(-2.0))
    assert kernel_density(Weibull(1, 1), 2.0) == pytest.approx(math.exp(-2.0))


def test_categorical_draws_ignore_a_common_score_factor():
    # multiplying every score by a constant shifts log-scores uniformly
    logp = np.log(np.random.default_rng(0).random((200, 5)))
    a = sample_log_categorical(logp, np.random.default_rng(4))
    b = sample_log_categorical(logp + 123.0, np.random.default_rng(4))
    np.testing.assert_array_equal(a, b)
    obs = Observation(0.8, False, 0)
    np.testing.assert_allclose(assignment_probabilities(obs, [0.2, 0.8], TRUE_CLUSTER[1]),
                               assignment_probabilities(obs, [2.0, 8.0], TRUE_CLUSTER[1]))
