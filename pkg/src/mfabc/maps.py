"""Adaptive pre-filtering multifidelity ABC-SMC (MAPS).

Every iteration alternates two tolerances: an auxiliary LF tolerance that
screens particles and proposals, and the HF tolerance that defines the
target. The LF tolerance is kept above a critical value, a weighted
quantile of LF distances under an estimate of the final posterior, so that
only a small mass ``a_L`` is wrongly screened out.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from mfabc.asmc import MOVES_PER_ITERATION_LIMIT, SMCResult, initial_ensemble, reweight, select_threshold
from mfabc.core import (HF_FILL, MOVE, RESAMPLE, Ensemble, ParticleState, ess, normalize_weights, pa_threshold,
                        pass_counts, proportion_active, resample, stream, streams, weighted_quantile)
from mfabc.errors import IterationCap, ZeroTotalMass
from mfabc.kernels import GaussianRandomWalk


@dataclass
class MapsConfig:
    n_particles: int = 5120
    n_hf: int = 10
    n_lf: int = 20
    alpha: float = 0.7
    alpha_lf: float | None = None
    a_lf: float = 0.001
    eps_target: float = 0.1
    ess_fraction: float = 0.5
    mcmc_moves: int = 1
    kernel_scale: float = 2.0
    resampling: str = "systematic"
    max_iterations: int = 200
    defer_hf: bool = True

    def __post_init__(self):
        if self.alpha_lf is None:
            self.alpha_lf = self.alpha
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if not 0 < self.alpha_lf <= 1:
            raise ValueError("alpha_lf must lie in (0, 1]")
        if not 0 < self.a_lf < 1:
            raise ValueError("a_lf must lie in (0, 1)")
        if not self.eps_target > 0:
            raise ValueError("eps_target must be positive")
        if min(self.n_particles, self.n_hf, self.n_lf) < 1:
            raise ValueError("n_particles, n_hf and n_lf must be >= 1")
        if not 1 <= self.mcmc_moves <= MOVES_PER_ITERATION_LIMIT:
            raise ValueError(f"mcmc_moves must lie in [1, {MOVES_PER_ITERATION_LIMIT}]")

    @property
    def ess_threshold(self) -> float:
        return self.ess_fraction * self.n_particles


def critical_value(weights, hf_distances, lf_min, eps, eps_target, a_lf) -> float:
    """Lower bound for the auxiliary tolerance.

    Reweights towards the final HF tolerance and returns the ``1 - a_lf``
    weighted quantile of the particles' minimum LF distances; 0 when no
    particle passes the final tolerance yet.
    """
    w = np.asarray(weights, dtype=float)
    num = pass_counts(hf_distances, eps_target)
    den = pass_counts(hf_distances, eps)
    aux = np.zeros_like(w)
    live = (w > 0) & (den > 0)
    aux[live] = w[live] * num[live] / den[live]
    if not np.any(aux > 0):
        return 0.0
    return weighted_quantile(lf_min, aux, 1.0 - a_lf)


def select_aux_threshold(lf_min, prev_weights, alpha_lf, lower, eps_lf_prev=np.inf):
    """Auxiliary LF tolerance and the screened weights.

    Solves the proportion-active rule on minimum LF distances, then raises
    the result to ``lower``. Returns ``(eps_lf, aux_weights, clamp_bound)``.
    """
    lf_min = np.asarray(lf_min, dtype=float)
    w = np.asarray(prev_weights, dtype=float)
    raw = pa_threshold(lf_min, w > 0, alpha_lf, eps_lf_prev)
    eps_lf = max(raw, lower)
    screened = w * (lf_min < eps_lf)
    if not np.any(screened > 0):
        raise ZeroTotalMass(f"auxiliary tolerance {eps_lf} screens out every particle")
    return eps_lf, normalize_weights(screened), eps_lf > raw


def pf_move_batch(ens, idx, eps_prev, eps_lf, prior, kernel, pair, n_hf, n_lf, gens, simulate_hf=True):
    """One pre-filtering ABC-MCMC step for particles ``idx`` of ``ens`` (in place).

    Proposals whose LF distances all miss ``eps_lf`` are rejected without HF
    simulation; proposals outside the prior support are not simulated at all. With
    ``simulate_hf=False`` (first iteration, ``eps_prev`` infinite) the HF
    pass ratio is identically one and no HF simulation is run here.

    Returns ``(accepted, prefilter_rejects)`` over ``idx``.
    """
    idx = np.asarray(idx, dtype=int)
    if idx.size == 0:
        return np.zeros(0, dtype=bool), 0
    current = ens.theta[idx]
    steps = np.stack([kernel.draw(g, ens.dim) for g in gens])
    proposal = kernel.apply(current, steps)
    prior_star = np.asarray(prior.density(proposal), dtype=float)
    # proposals outside the prior support are rejected without any simulation
    inside = np.flatnonzero(prior_star > 0)
    lf_star = np.full((idx.size, ens.lf.shape[1]), np.inf)
    if inside.size:
        lf_star[inside] = pair.lf_distances(proposal[inside], [gens[j] for j in inside], n_lf)
    lf_pass = lf_star.min(axis=1) < eps_lf
    prefilter_rejects = int(np.count_nonzero(~lf_pass & (prior_star > 0)))
    go = np.flatnonzero(lf_pass)
    hf_star = np.full((idx.size, ens.hf.shape[1]), np.nan)
    if simulate_hf and go.size:
        hf_star[go] = pair.hf_distances(proposal[go], [gens[j] for j in go], n_hf)
    u = np.array([g.random() for g in gens])

    prior_cur = np.asarray(prior.density(current), dtype=float)
    if simulate_hf:
        num = prior_star * pass_counts(hf_star, eps_prev) * lf_pass
        den = prior_cur * pass_counts(ens.hf[idx], eps_prev)
    else:
        num = prior_star * lf_pass
        den = prior_cur
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(num > 0, num / den * np.exp(kernel.log_ratio(current, proposal)), 0.0)
    accept = u < np.minimum(1.0, ratio)
    acc = idx[accept]
    ens.theta[acc] = proposal[accept]
    ens.hf[acc] = hf_star[accept]
    ens.lf[acc] = lf_star[accept]
    return accept, prefilter_rejects


def pf_abc_mcmc_move(state: ParticleState, eps_prev, eps_lf, prior, kernel, pair, n_hf, n_lf, rng):
    """Single-particle pre-filtering ABC-MCMC step.

    With an infinite ``eps_prev`` the HF factor is one and HF is not simulated.
    """
    hf = np.atleast_2d(state.hf_distances) if state.hf_distances.size else np.full((1, n_hf), np.nan)
    ens = Ensemble(np.atleast_2d(state.theta), np.ones(1), hf, np.atleast_2d(state.lf_distances))
    pf_move_batch(ens, [0], eps_prev, eps_lf, prior, kernel, pair, n_hf, n_lf, [rng],
                  simulate_hf=bool(np.isfinite(eps_prev)))
    return ens.particle(0)


def run_maps(config: MapsConfig, pair, prior, seed: int, kernel=None, keep_history=False) -> SMCResult:
    kernel = kernel if kernel is not None else GaussianRandomWalk(config.kernel_scale)
    start = time.perf_counter()
    hf0, lf0 = pair.hf_calls, pair.lf_calls
    ens = initial_ensemble(pair, prior, config.n_particles, config.n_hf, config.n_lf, seed,
                           simulate_hf=not config.defer_hf)
    eps = np.inf
    eps_lf = np.inf
    trace, history = [], []
    t = 0
    while eps > config.eps_target:
        if t >= config.max_iterations:
            raise IterationCap(f"tolerance {eps} still above target after {t} iterations")
        hf_missing = not ens.hf_simulated[ens.weights > 0].all()
        lower = 0.0 if hf_missing else critical_value(ens.weights, ens.hf, ens.lf_min, eps,
                                                        config.eps_target, config.a_lf)
        t += 1
        eps_lf, ens.weights, clamped = select_aux_threshold(ens.lf_min, ens.weights, config.alpha_lf,
                                                            lower, eps_lf)
        resampled = ess(ens.weights) < config.ess_threshold
        if resampled:
            ens = resample(ens, stream(seed, RESAMPLE, t), config.resampling)

        accepted = moved = rejects = 0
        for m in range(config.mcmc_moves):
            kernel.adapt(ens.theta, ens.weights)
            live = np.flatnonzero(ens.weights > 0)
            gens = streams(seed, MOVE, t * MOVES_PER_ITERATION_LIMIT + m, live)
            acc, rej = pf_move_batch(ens, live, eps, eps_lf, prior, kernel, pair, config.n_hf,
                                     config.n_lf, gens, simulate_hf=not hf_missing)
            accepted += int(acc.sum())
            rejects += rej
            moved += live.size
        if hf_missing:
            # deferred HF batch: only the particles that carry weight after the move
            fill = np.flatnonzero((ens.weights > 0) & ~ens.hf_simulated)
            if fill.size:
                ens.hf[fill] = pair.hf_distances(ens.theta[fill], streams(seed, HF_FILL, t, fill), config.n_hf)

        live = ens.weights > 0
        if not np.all(ens.lf_min[live] < eps_lf):
            raise AssertionError("a live particle violates the auxiliary tolerance")
        eps_new = select_threshold(ens.hf, ens.weights, config.alpha, eps, config.eps_target)
        ens.weights = reweight(ens.weights, ens.hf, eps_new, eps)
        eps = eps_new
        trace.append({
            "iteration": t,
            "epsilon": eps,
            "eps_aux": eps_lf,
            "eps_lower": lower,
            "clamp_bound": int(clamped),
            "ess": ess(ens.weights),
            "pa": proportion_active(ens.weights),
            "resampled": int(resampled),
            "hf_calls": pair.hf_calls - hf0,
            "lf_calls": pair.lf_calls - lf0,
            "prefilter_rejects": rejects,
            "mh_accept_rate": accepted / moved if moved else 0.0,
            "wall_time": time.perf_counter() - start,
        })
        if keep_history:
            history.append((ens.theta.copy(), ens.weights.copy()))
    return SMCResult(ens, trace, pair.hf_calls - hf0, pair.lf_calls - lf0, time.perf_counter() - start, history)
