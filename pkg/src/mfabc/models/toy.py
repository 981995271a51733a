"""Scalar nonlinear Gaussian model with a cosine-free low-fidelity twin.

HF: ``x | theta ~ N(4 theta^2 + 0.3 cos(5 pi theta), 0.2^2)``
LF: ``x | theta ~ N(4 theta^2, 0.2^2)``
Both use the squared-error discrepancy ``(x - y)^2`` and a U[-2, 2] prior.
"""

from __future__ import annotations

import numpy as np

from mfabc.models.base import FidelityPair, Simulator, UniformPrior

NOISE_SD = 0.2
PRIOR_BOUNDS = (-2.0, 2.0)


def hf_mean(theta):
    theta = np.asarray(theta, dtype=float)
    return 4.0 * theta**2 + 0.3 * np.cos(5.0 * np.pi * theta)


def lf_mean(theta):
    theta = np.asarray(theta, dtype=float)
    return 4.0 * theta**2


def toy_hf_sample(theta: float, rng: np.random.Generator) -> float:
    return float(hf_mean(theta) + NOISE_SD * rng.standard_normal())


def toy_lf_sample(theta: float, rng: np.random.Generator) -> float:
    return float(lf_mean(theta) + NOISE_SD * rng.standard_normal())


class ToySimulator(Simulator):
    """Gaussian location model around ``mean_fn(theta)``.

    ``sd=0`` gives a deterministic variant, used as an exactly reproducible
    stand-in when a low-fidelity model must coincide with the high-fidelity one.
    """

    n_params = 1

    def __init__(self, mean_fn, sd: float = NOISE_SD, name: str = "toy"):
        self.mean_fn = mean_fn
        self.sd = float(sd)
        self.name = name

    def sample(self, theta, rng, n=1):
        return self.mean_fn(np.ravel(theta)[0]) + self.sd * rng.standard_normal(n)

    def sample_batch(self, thetas, gens, n):
        noise = np.stack([g.standard_normal(n) for g in gens]) if len(gens) else np.empty((0, n))
        return self.mean_fn(np.asarray(thetas, dtype=float)[:, :1]) + self.sd * noise


def toy_pair(y_obs: float, threads: int = 1, lf_sd: float = NOISE_SD, hf_sd: float = NOISE_SD) -> FidelityPair:
    y = np.array([float(y_obs)])
    return FidelityPair(ToySimulator(hf_mean, hf_sd, "toy-hf"), ToySimulator(lf_mean, lf_sd, "toy-lf"),
                        y, y, threads=threads)


def toy_prior() -> UniformPrior:
    return UniformPrior([PRIOR_BOUNDS[0]], [PRIOR_BOUNDS[1]])


def hf_modes(y_obs: float, grid=None) -> np.ndarray:
    """Parameters where the HF mean crosses ``y_obs`` (the likelihood ridges)."""
    if grid is None:
        grid = np.linspace(*PRIOR_BOUNDS, 40001)
    f = hf_mean(grid) - y_obs
    idx = np.nonzero(np.sign(f[:-1]) * np.sign(f[1:]) <= 0)[0]
    roots = grid[idx] - f[idx] * (grid[idx + 1] - grid[idx]) / (f[idx + 1] - f[idx])
    return np.unique(np.round(roots, 6))
