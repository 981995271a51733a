"""Kuramoto oscillator network and its Ott-Antonsen reduction.

Parameters are ``(K, omega0, gamma)``. The HF model integrates M=32 phase
oscillators with Cauchy(omega0, gamma) natural frequencies by classical RK4
(step 0.1, t in [0, 20], zero initial phases) and reports the magnitude and
unwrapped phase of the first order parameter. The LF model integrates the
reduced two-dimensional ODE by explicit Euler with the same step.
"""

from __future__ import annotations

import numpy as np
from scipy.integrate import trapezoid

from mfabc.core import OBSERVED, stream
from mfabc.errors import NonPositiveScale
from mfabc.models.base import FidelityPair, Simulator, UniformPrior

M_OSCILLATORS = 32
DT = 0.1
T_END = 20.0
N_STEPS = int(round(T_END / DT))
TIMES = np.linspace(0.0, T_END, N_STEPS + 1)
TRUE_THETA = (2.0, np.pi / 3, 0.1)
PRIOR_LOWS = (0.1, 0.0, 0.01)
PRIOR_HIGHS = (5.0, 2 * np.pi, 1.0)
LONG_RUN_WINDOW = (10.0, 20.0)


def cauchy_from_uniform(location, scale, u):
    """Inverse-CDF Cauchy draw ``location + scale * tan(pi (u - 1/2))``."""
    scale = np.asarray(scale, dtype=float)
    if np.any(scale <= 0):
        raise NonPositiveScale("Cauchy scale must be positive")
    return location + scale * np.tan(np.pi * (np.asarray(u) - 0.5))


def cauchy_sample(location: float, scale: float, rng: np.random.Generator, size=None):
    return cauchy_from_uniform(location, scale, rng.random(size))


def unwrap_phase(z) -> np.ndarray:
    """Continuous phase of a complex series along its last axis.

    Accumulates the principal-branch increment between consecutive points.
    """
    z = np.asarray(z)
    steps = np.angle(z[..., 1:] * np.conj(z[..., :-1]))
    start = np.angle(z[..., :1])
    return np.concatenate([start, start + np.cumsum(steps, axis=-1)], axis=-1)


def _order_parameter(phi):
    return np.mean(np.exp(1j * phi), axis=-1)


def rk4_phases(K, omega, dt=DT, n_steps=N_STEPS):
    """Integrate the network; returns the complex order parameter per grid time.

    ``omega`` has shape ``(..., M)``, ``K`` broadcasts against ``omega[..., 0]``.
    """
    omega = np.asarray(omega, dtype=float)
    K = np.asarray(K, dtype=float)[..., None]
    phi = np.zeros_like(omega)

    def rhs(p):
        c, s = np.cos(p), np.sin(p)
        zx = c.mean(axis=-1, keepdims=True)
        zy = s.mean(axis=-1, keepdims=True)
        # (1/M) sum_j sin(phi_j - phi_i) = Im(Z exp(-i phi_i))
        return omega + K * (zy * c - zx * s)

    z = np.empty(omega.shape[:-1] + (n_steps + 1,), dtype=complex)
    z[..., 0] = _order_parameter(phi)
    for step in range(1, n_steps + 1):
        k1 = rhs(phi)
        k2 = rhs(phi + 0.5 * dt * k1)
        k3 = rhs(phi + 0.5 * dt * k2)
        k4 = rhs(phi + dt * k3)
        phi = phi + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        z[..., step] = _order_parameter(phi)
    return z


def reduced_rhs(r, K, gamma):
    return (K / 2 - gamma) * r - (K / 2) * r**3


def euler_reduced(K, omega0, gamma, dt=DT, n_steps=N_STEPS):
    """Euler integration of the reduced ODE from R=1, Phi=0."""
    K, omega0, gamma = (np.asarray(a, dtype=float) for a in (K, omega0, gamma))
    shape = np.broadcast(K, omega0, gamma).shape
    r = np.ones(shape)
    R = np.empty(shape + (n_steps + 1,))
    R[..., 0] = r
    for step in range(1, n_steps + 1):
        r = r + dt * reduced_rhs(r, K, gamma)
        R[..., step] = r
    Phi = np.broadcast_to(omega0, shape)[..., None] * (dt * np.arange(n_steps + 1))
    return R, Phi


def rk4_reduced(K, gamma, dt, n_steps, r0=1.0):
    """RK4 on the reduced magnitude ODE; used to check integrator order."""
    r = float(r0)
    for _ in range(n_steps):
        k1 = reduced_rhs(r, K, gamma)
        k2 = reduced_rhs(r + 0.5 * dt * k1, K, gamma)
        k3 = reduced_rhs(r + 0.5 * dt * k2, K, gamma)
        k4 = reduced_rhs(r + dt * k3, K, gamma)
        r += dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return r


def kuramoto_hf_sample(theta, rng: np.random.Generator):
    """One HF run: returns ``(R, Phi)`` on the 0..20 grid."""
    K, omega0, gamma = (float(v) for v in theta)
    omega = cauchy_sample(omega0, gamma, rng, M_OSCILLATORS)
    z = rk4_phases(K, omega)
    return np.abs(z), unwrap_phase(z)


def kuramoto_lf_sample(theta):
    K, omega0, gamma = (float(v) for v in theta)
    return euler_reduced(K, omega0, gamma)


def half_time_index(R_obs, window=LONG_RUN_WINDOW) -> int:
    """Earliest grid index where R_obs reaches the midpoint between R_obs(0)
    and its average over ``window``."""
    R_obs = np.asarray(R_obs, dtype=float)
    in_window = (TIMES >= window[0]) & (TIMES <= window[1])
    target = 0.5 * (R_obs[0] + R_obs[in_window].mean())
    hit = R_obs <= target if R_obs[in_window].mean() <= R_obs[0] else R_obs >= target
    return int(np.argmax(hit))


def kuramoto_summary(R, Phi, half_index: int) -> np.ndarray:
    R = np.asarray(R, dtype=float)
    Phi = np.asarray(Phi, dtype=float)
    s1 = (trapezoid(R, dx=DT, axis=-1) / T_END) ** 2
    s2 = (Phi[..., -1] - Phi[..., 0]) / T_END
    s3 = R[..., half_index]
    return np.stack([s1, s2, s3], axis=-1)


class _KuramotoBase(Simulator):
    n_params = 3

    def __init__(self, half_index: int):
        self.half_index = int(half_index)

    def summarize(self, raw):
        return kuramoto_summary(raw[..., 0, :], raw[..., 1, :], self.half_index)


class KuramotoHighFidelity(_KuramotoBase):
    """Raw output is stacked ``(R, Phi)`` with shape ``(..., 2, 201)``."""

    name = "kuramoto-hf"

    def sample(self, theta, rng, n=1):
        return self.sample_batch(np.asarray(theta, dtype=float)[None, :], [rng], n)[0]

    def sample_batch(self, thetas, gens, n):
        thetas = np.asarray(thetas, dtype=float)
        u = np.stack([g.random((n, M_OSCILLATORS)) for g in gens])
        omega = cauchy_from_uniform(thetas[:, 1, None, None], thetas[:, 2, None, None], u)
        z = rk4_phases(np.broadcast_to(thetas[:, 0, None], omega.shape[:-1]), omega)
        return np.stack([np.abs(z), unwrap_phase(z)], axis=-2)


class KuramotoLowFidelity(_KuramotoBase):
    """Deterministic; the n replicates are identical."""

    name = "kuramoto-lf"

    def sample(self, theta, rng, n=1):
        return self.sample_batch(np.asarray(theta, dtype=float)[None, :], [rng], n)[0]

    def sample_batch(self, thetas, gens, n):
        thetas = np.asarray(thetas, dtype=float)
        R, Phi = euler_reduced(thetas[:, 0], thetas[:, 1], thetas[:, 2])
        out = np.stack([R, Phi], axis=-2)
        return np.broadcast_to(out[:, None], (out.shape[0], n) + out.shape[1:])


def observed_data(seed: int, theta=TRUE_THETA):
    return kuramoto_hf_sample(theta, stream(seed, OBSERVED))


def kuramoto_pair(R_obs, Phi_obs, threads: int = 1, window=LONG_RUN_WINDOW) -> FidelityPair:
    half = half_time_index(R_obs, window)
    s_obs = kuramoto_summary(R_obs, Phi_obs, half)
    return FidelityPair(KuramotoHighFidelity(half), KuramotoLowFidelity(half), s_obs, s_obs, threads=threads)


def kuramoto_prior() -> UniformPrior:
    return UniformPrior(PRIOR_LOWS, PRIOR_HIGHS)
