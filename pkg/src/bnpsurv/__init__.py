"""Bayesian nonparametric mixtures for grouped right-censored survival data."""

__version__ = "0.1.0"
