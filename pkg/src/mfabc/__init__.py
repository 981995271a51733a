"""Multifidelity approximate Bayesian computation with low-fidelity pre-filtering."""

__version__ = "0.1.0"
