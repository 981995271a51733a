"""Baseline adaptive ABC-SMC with proportion-active tolerance selection.

Each iteration picks the next tolerance so that a fraction ``alpha`` of the
active particles stays active, reweights by the ratio of pass counts,
resamples when the ESS drops below ``N_T`` and rejuvenates every live
particle with one ABC Metropolis-Hastings step.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from mfabc.core import (INIT, MOVE, RESAMPLE, Ensemble, ParticleState, ess, normalize_weights, pa_threshold,
                        pass_counts, proportion_active, resample, stream, streams)
from mfabc.errors import IterationCap, ZeroTotalMass
from mfabc.kernels import GaussianRandomWalk

MOVES_PER_ITERATION_LIMIT = 64


@dataclass
class AsmcConfig:
    n_particles: int = 5120
    n_sims: int = 10
    alpha: float = 0.7
    eps_target: float = 0.1
    ess_fraction: float = 0.5
    mcmc_moves: int = 1
    kernel_scale: float = 2.0
    resampling: str = "systematic"
    max_iterations: int = 200

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if not self.eps_target > 0:
            raise ValueError("eps_target must be positive")
        if self.n_particles < 1 or self.n_sims < 1:
            raise ValueError("n_particles and n_sims must be >= 1")
        if not 1 <= self.mcmc_moves <= MOVES_PER_ITERATION_LIMIT:
            raise ValueError(f"mcmc_moves must lie in [1, {MOVES_PER_ITERATION_LIMIT}]")

    @property
    def ess_threshold(self) -> float:
        return self.ess_fraction * self.n_particles


@dataclass
class SMCResult:
    ensemble: Ensemble
    trace: list
    hf_calls: int
    lf_calls: int
    wall_time: float
    history: list = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return len(self.trace)

    @property
    def epsilons(self) -> np.ndarray:
        return np.array([row["epsilon"] for row in self.trace])


def select_threshold(distances, prev_weights, alpha, eps_prev, eps_target) -> float:
    """Next HF tolerance from the proportion-active rule, clamped at the target."""
    d = np.asarray(distances, dtype=float)
    active = np.asarray(prev_weights) > 0
    with np.errstate(invalid="ignore"):
        mins = np.where(np.isnan(d), np.inf, d).min(axis=1)
    eps = pa_threshold(mins, active, alpha, eps_prev)
    return max(eps, eps_target)


def reweight(prev_weights, distances, eps_new, eps_prev) -> np.ndarray:
    """``W_t ∝ W_{t-1} * #pass(eps_new) / #pass(eps_prev)``, normalized."""
    if eps_new > eps_prev:
        raise ValueError("tolerances must not increase")
    w = np.asarray(prev_weights, dtype=float)
    num = pass_counts(distances, eps_new)
    den = pass_counts(distances, eps_prev)
    live = w > 0
    if np.any(den[live] == 0):
        raise AssertionError("a live particle has no pass at the previous tolerance")
    out = np.zeros_like(w)
    out[live] = w[live] * num[live] / den[live]
    if not np.any(out > 0):
        raise ZeroTotalMass(f"no particle survives tolerance {eps_new}")
    return normalize_weights(out)


def mh_move_batch(theta, hf, idx, eps, prior, kernel, pair, n_sims, gens):
    """One ABC-MH step for the particles ``idx``.

    Returns new copies of ``theta`` and ``hf`` plus the boolean acceptance
    vector over ``idx``. ``gens`` holds one generator per entry of ``idx``.
    """
    theta = theta.copy()
    hf = hf.copy()
    idx = np.asarray(idx, dtype=int)
    if idx.size == 0:
        return theta, hf, np.zeros(0, dtype=bool)
    current = theta[idx]
    steps = np.stack([kernel.draw(g, theta.shape[1]) for g in gens])
    proposal = kernel.apply(current, steps)
    prior_star = np.asarray(prior.density(proposal), dtype=float)
    simulate = np.flatnonzero(prior_star > 0)
    hf_star = np.full((idx.size, hf.shape[1]), np.nan)
    if simulate.size:
        hf_star[simulate] = pair.hf_distances(proposal[simulate], [gens[j] for j in simulate], n_sims)
    u = np.array([g.random() for g in gens])
    num = prior_star * pass_counts(hf_star, eps)
    den = np.asarray(prior.density(current), dtype=float) * pass_counts(hf[idx], eps)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(num > 0, num / den * np.exp(kernel.log_ratio(current, proposal)), 0.0)
    accept = u < np.minimum(1.0, ratio)
    theta[idx[accept]] = proposal[accept]
    hf[idx[accept]] = hf_star[accept]
    return theta, hf, accept


def mh_move(state, eps, prior, kernel, pair, n_sims, rng):
    """Single-particle ABC-MH step on a :class:`~mfabc.core.ParticleState`."""
    theta = np.atleast_2d(state.theta)
    hf = np.atleast_2d(state.hf_distances)
    theta, hf, _ = mh_move_batch(theta, hf, [0], eps, prior, kernel, pair, n_sims, [rng])
    return ParticleState(theta[0], hf[0], state.lf_distances, state.min_lf_distance)


def initial_ensemble(pair, prior, n_particles, n_hf, n_lf, seed, simulate_hf=True):
    gens = streams(seed, INIT, 0, range(n_particles))
    theta = np.stack([prior.sample(g) for g in gens])
    lf = pair.lf_distances(theta, gens, n_lf) if n_lf else np.empty((n_particles, 0))
    if simulate_hf:
        hf = pair.hf_distances(theta, gens, n_hf)
    else:
        hf = np.full((n_particles, n_hf), np.nan)
    return Ensemble(theta, np.full(n_particles, 1.0 / n_particles), hf, lf)


def run_asmc(config: AsmcConfig, pair, prior, seed: int, kernel=None, keep_history=False) -> SMCResult:
    kernel = kernel if kernel is not None else GaussianRandomWalk(config.kernel_scale)
    start = time.perf_counter()
    hf0, lf0 = pair.hf_calls, pair.lf_calls
    ens = initial_ensemble(pair, prior, config.n_particles, config.n_sims, 0, seed)
    eps = np.inf
    trace, history = [], []
    t = 0
    while eps > config.eps_target:
        if t >= config.max_iterations:
            raise IterationCap(f"tolerance {eps} still above target after {t} iterations")
        t += 1
        eps_new = select_threshold(ens.hf, ens.weights, config.alpha, eps, config.eps_target)
        ens.weights = reweight(ens.weights, ens.hf, eps_new, eps)
        eps = eps_new
        ess_now = ess(ens.weights)
        pa = proportion_active(ens.weights)
        resampled = ess_now < config.ess_threshold
        if resampled:
            ens = resample(ens, stream(seed, RESAMPLE, t), config.resampling)
        accepted = moved = 0
        for m in range(config.mcmc_moves):
            kernel.adapt(ens.theta, ens.weights)
            live = np.flatnonzero(ens.weights > 0)
            gens = streams(seed, MOVE, t * MOVES_PER_ITERATION_LIMIT + m, live)
            ens.theta, ens.hf, acc = mh_move_batch(ens.theta, ens.hf, live, eps, prior, kernel, pair,
                                                   config.n_sims, gens)
            accepted += int(acc.sum())
            moved += live.size
        trace.append({
            "iteration": t,
            "epsilon": eps,
            "ess": ess_now,
            "pa": pa,
            "resampled": int(resampled),
            "hf_calls": pair.hf_calls - hf0,
            "mh_accept_rate": accepted / moved if moved else 0.0,
            "wall_time": time.perf_counter() - start,
        })
        if keep_history:
            history.append((ens.theta.copy(), ens.weights.copy()))
    return SMCResult(ens, trace, pair.hf_calls - hf0, pair.lf_calls - lf0, time.perf_counter() - start, history)
