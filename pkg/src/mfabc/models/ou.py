"""Ornstein-Uhlenbeck process with a stationary-Gaussian low-fidelity model.

Parameters are ``(mu, sigma, gamma, mu_offset)``. The HF model integrates
``dX = gamma (mu - X) dt + sigma dW`` by Euler-Maruyama with step 0.01 on
[0, 30] and records every 0.1 time units (301 points, the first at t=0). The
LF model draws 200 iid points from ``N(mu, (sigma / (2.5 gamma))^2)``.
"""

from __future__ import annotations

import numpy as np

from mfabc.core import OBSERVED, stream
from mfabc.errors import LengthMismatch
from mfabc.models.base import FidelityPair, Simulator, UniformPrior

PRIOR_LOWS = (0.1, 0.1, 0.1, 2.0)
PRIOR_HIGHS = (3.0, 1.0, 2.0, 6.0)
TRUE_THETA = (2.0, 0.5, 1.0, 3.0)

DT = 0.01
T_END = 30.0
RECORD_EVERY = 10
N_STEPS = int(round(T_END / DT))
N_RECORDED = N_STEPS // RECORD_EVERY + 1
INIT_SD = 0.1
N_LF_POINTS = 200


def euler_maruyama(theta, noise, dt=DT, record_every=RECORD_EVERY):
    """Integrate a batch of OU paths.

    ``theta`` has shape ``(..., 4)``; ``noise`` has shape ``(..., 1 + n_steps)``,
    the first column driving the initial condition. Returns the recorded
    states, shape ``(..., n_steps // record_every + 1)``.
    """
    theta = np.asarray(theta, dtype=float)
    mu, sigma, gamma, offset = (theta[..., j] for j in range(4))
    n_steps = noise.shape[-1] - 1
    x = mu + offset + INIT_SD * noise[..., 0]
    out = np.empty(noise.shape[:-1] + (n_steps // record_every + 1,))
    out[..., 0] = x
    drift = gamma * dt
    diff = sigma * np.sqrt(dt)
    for step in range(1, n_steps + 1):
        x = x + drift * (mu - x) + diff * noise[..., step]
        if step % record_every == 0:
            out[..., step // record_every] = x
    return out


def ou_hf_sample(theta, rng: np.random.Generator) -> np.ndarray:
    """One HF trajectory of 301 recorded states."""
    return euler_maruyama(np.asarray(theta, dtype=float), rng.standard_normal(1 + N_STEPS))


def ou_lf_sample(theta, rng: np.random.Generator) -> np.ndarray:
    mu, sigma, gamma = float(theta[0]), float(theta[1]), float(theta[2])
    return mu + sigma / (2.5 * gamma) * rng.standard_normal(N_LF_POINTS)


def ou_hf_summary(trajectory, divisor: int = 150) -> np.ndarray:
    """Four summaries of a recorded trajectory (last axis of length 301).

    ``S1`` sums points 151..301 (one-based) and divides by ``divisor``; the
    printed divisor is 150 although the range holds 151 points.
    """
    x = np.asarray(trajectory, dtype=float)
    if x.shape[-1] != N_RECORDED:
        raise LengthMismatch(f"expected {N_RECORDED} recorded states, got {x.shape[-1]}")
    tail = x[..., 150:301]
    s1 = tail.sum(axis=-1) / divisor
    s2 = 10.0 * tail.std(axis=-1, ddof=1)
    s3 = x[..., 0] - s1
    s4 = x[..., 0] - x[..., 20]
    return np.stack([s1, s2, s3, s4], axis=-1)


def ou_lf_summary(points) -> np.ndarray:
    x = np.asarray(points, dtype=float)
    if x.shape[-1] != N_LF_POINTS:
        raise LengthMismatch(f"expected {N_LF_POINTS} points, got {x.shape[-1]}")
    return np.stack([x.mean(axis=-1), 10.0 * x.std(axis=-1, ddof=1)], axis=-1)


class OUHighFidelity(Simulator):
    name = "ou-hf"
    n_params = 4

    def __init__(self, s1_divisor: int = 150):
        self.s1_divisor = s1_divisor

    def sample(self, theta, rng, n=1):
        return euler_maruyama(np.asarray(theta, dtype=float), rng.standard_normal((n, 1 + N_STEPS)))

    def sample_batch(self, thetas, gens, n):
        noise = np.stack([g.standard_normal((n, 1 + N_STEPS)) for g in gens])
        return euler_maruyama(np.asarray(thetas, dtype=float)[:, None, :], noise)

    def summarize(self, raw):
        return ou_hf_summary(raw, self.s1_divisor)

    def discrepancy(self, summary, observed_summary):
        diff = np.asarray(summary) - observed_summary
        return 0.25 * np.sum(diff * diff, axis=-1)


class OULowFidelity(Simulator):
    name = "ou-lf"
    n_params = 4

    def sample(self, theta, rng, n=1):
        theta = np.asarray(theta, dtype=float)
        return theta[0] + theta[1] / (2.5 * theta[2]) * rng.standard_normal((n, N_LF_POINTS))

    def sample_batch(self, thetas, gens, n):
        thetas = np.asarray(thetas, dtype=float)
        noise = np.stack([g.standard_normal((n, N_LF_POINTS)) for g in gens])
        scale = thetas[:, 1] / (2.5 * thetas[:, 2])
        return thetas[:, 0, None, None] + scale[:, None, None] * noise

    def summarize(self, raw):
        return ou_lf_summary(raw)

    def discrepancy(self, summary, observed_summary):
        diff = np.asarray(summary) - observed_summary
        return 0.5 * np.sum(diff * diff, axis=-1)


def observed_trajectory(seed: int, theta=TRUE_THETA) -> np.ndarray:
    return ou_hf_sample(theta, stream(seed, OBSERVED))


def ou_pair(observed, threads: int = 1, s1_divisor: int = 150) -> FidelityPair:
    """Fidelity pair against an observed HF trajectory of 301 states."""
    hf = OUHighFidelity(s1_divisor)
    s_obs = ou_hf_summary(observed, s1_divisor)
    return FidelityPair(hf, OULowFidelity(), s_obs, s_obs[:2], threads=threads)


def ou_prior() -> UniformPrior:
    return UniformPrior(PRIOR_LOWS, PRIOR_HIGHS)
