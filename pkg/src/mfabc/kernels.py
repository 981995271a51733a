"""Metropolis-Hastings proposal kernels used to rejuvenate particles."""

from __future__ import annotations

import numpy as np


class GaussianRandomWalk:
    """Symmetric Gaussian random walk.

    :meth:`adapt` sets the covariance to ``scale`` times the weighted sample
    covariance of the current ensemble.
    """

    symmetric = True

    def __init__(self, scale: float = 2.0, jitter: float = 1e-12):
        self.scale = scale
        self.jitter = jitter
        self.chol = None

    def adapt(self, theta, weights):
        theta = np.asarray(theta, dtype=float)
        w = np.asarray(weights, dtype=float)
        w = w / w.sum()
        centred = theta - w @ theta
        cov = self.scale * (centred * w[:, None]).T @ centred
        cov += self.jitter * np.eye(cov.shape[0]) * max(1.0, np.trace(cov))
        self.chol = np.linalg.cholesky(cov)
        return self

    def draw(self, rng: np.random.Generator, dim: int) -> np.ndarray:
        return rng.standard_normal(dim)

    def apply(self, theta, steps) -> np.ndarray:
        """Map per-particle standard draws to proposals, vectorized."""
        return np.asarray(theta) + np.asarray(steps) @ self.chol.T

    def propose(self, theta, rng: np.random.Generator) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        return self.apply(theta[None, :], self.draw(rng, theta.size)[None, :])[0]

    def log_ratio(self, theta, theta_star):
        """``log q(theta | theta*) - log q(theta* | theta)``; zero when symmetric."""
        return np.zeros(np.shape(theta)[:-1])


class GridRandomWalk:
    """Symmetric jumps of +-1..max_jump grid cells on a one-dimensional lattice."""

    symmetric = True

    def __init__(self, spacing: float, max_jump: int = 2):
        self.spacing = spacing
        self.jumps = np.array([j for j in range(-max_jump, max_jump + 1) if j != 0], dtype=float)

    def adapt(self, theta, weights):
        return self

    def draw(self, rng, dim):
        return np.array([self.jumps[rng.integers(self.jumps.size)]])

    def apply(self, theta, steps):
        return np.round(np.asarray(theta) + self.spacing * np.asarray(steps), 10)

    def propose(self, theta, rng):
        theta = np.asarray(theta, dtype=float)
        return self.apply(theta[None, :], self.draw(rng, theta.size)[None, :])[0]

    def log_ratio(self, theta, theta_star):
        return np.zeros(np.shape(theta)[:-1])
