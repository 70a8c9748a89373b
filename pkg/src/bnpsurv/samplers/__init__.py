"""Blocked-Gibbs samplers for DP, HDP and NDP survival mixtures."""
from .chain import (
    ConfigError, McmcConfig, PosteriorTrace, gibbs_sweep, group_mixture, init_state,
    mixture_survival, posterior_survival_draws, run_chain,
)
from .models import MODELS, DpState, HdpState, NdpState, SweepData
from .steps import (
    assign_group_ndp, assign_observation, assignment_probabilities, augment_censored,
    censored_component_score, group_assignment_probabilities, sample_log_categorical,
)

__all__ = [
    "ConfigError", "McmcConfig", "PosteriorTrace", "gibbs_sweep", "group_mixture", "init_state",
    "mixture_survival", "posterior_survival_draws", "run_chain", "MODELS", "DpState", "HdpState", "NdpState",
    "SweepData", "assign_group_ndp", "assign_observation", "assignment_probabilities",
    "augment_censored", "censored_component_score", "group_assignment_probabilities",
    "sample_log_categorical",
]
