"""Discrete model with closed-form acceptance probabilities.

``theta`` lives on 11 equally spaced points in [0, 1]. A dataset is a
Binomial(20, p(theta)) count and the discrepancy is ``|x - y|``, so the
probability that one simulation lands within tolerance is a finite sum of
binomial masses. The low-fidelity success probability is a distorted copy of
the high-fidelity one.
"""

from __future__ import annotations

import numpy as np
from scipy.stats import binom

from mfabc.models.base import FidelityPair, GridPrior, Simulator

GRID = np.round(np.linspace(0.0, 1.0, 11), 10)
N_TRIALS = 20
Y_OBS = 14


def hf_success(theta):
    return 0.05 + 0.9 * np.asarray(theta, dtype=float)


def lf_success(theta):
    t = np.asarray(theta, dtype=float)
    return np.clip(0.05 + 0.9 * t + 0.12 * np.sin(2 * np.pi * t), 0.01, 0.99)


class BinomialSimulator(Simulator):
    n_params = 1

    def __init__(self, success_fn, n_trials: int = N_TRIALS, name: str = "binomial"):
        self.success_fn = success_fn
        self.n_trials = n_trials
        self.name = name

    def sample(self, theta, rng, n=1):
        return rng.binomial(self.n_trials, self.success_fn(np.ravel(theta)[0]), size=n).astype(float)

    def discrepancy(self, summary, observed_summary):
        return np.abs(np.asarray(summary) - observed_summary)[..., 0]

    def accept_probability(self, theta, y, eps):
        """P(|X - y| < eps) for X ~ Binomial(n_trials, success(theta))."""
        x = np.arange(self.n_trials + 1)
        inside = np.abs(x - y) < eps
        pmf = binom.pmf(x[None, :], self.n_trials, self.success_fn(np.atleast_1d(theta))[:, None])
        return (pmf * inside).sum(axis=1)


def grid_pair(y_obs: int = Y_OBS, threads: int = 1) -> FidelityPair:
    y = np.array([float(y_obs)])
    return FidelityPair(BinomialSimulator(hf_success, name="grid-hf"),
                        BinomialSimulator(lf_success, name="grid-lf"), y, y, threads=threads)


def grid_prior() -> GridPrior:
    return GridPrior(GRID)


def exact_target(eps, eps_lf, n_lf, y_obs: int = Y_OBS) -> np.ndarray:
    """Normalized pi(theta) p_eps(theta) [1 - (1 - p~_eps~(theta))^n_L] on GRID."""
    hf = BinomialSimulator(hf_success)
    lf = BinomialSimulator(lf_success)
    p = hf.accept_probability(GRID, y_obs, eps)
    q = 1.0 - (1.0 - lf.accept_probability(GRID, y_obs, eps_lf)) ** n_lf
    mass = p * q
    return mass / mass.sum()
