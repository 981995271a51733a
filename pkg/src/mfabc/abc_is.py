"""Pre-filtering hierarchical importance sampling.

Each parameter draw is first screened with ``n_L`` cheap low-fidelity
simulations; only draws with at least one LF distance below ``eps_lf`` are
simulated ``n_H`` times at high fidelity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from mfabc.core import IMPORTANCE, Ensemble, normalize_weights, pass_counts, streams
from mfabc.errors import ZeroProposalDensity, ZeroTotalMass


@dataclass
class ISConfig:
    n_particles: int
    n_lf: int
    n_hf: int
    eps: float
    eps_lf: float
    proposal: object = None

    def __post_init__(self):
        if self.n_particles < 1 or self.n_lf < 1 or self.n_hf < 1:
            raise ValueError("n_particles, n_lf and n_hf must be >= 1")
        if not (self.eps > 0 and self.eps_lf > 0):
            raise ValueError("tolerances must be positive")


@dataclass
class ISResult:
    ensemble: Ensemble
    importance_ratio: np.ndarray
    lf_counts: np.ndarray
    hf_counts: np.ndarray
    lf_weights: np.ndarray
    raw_weights: np.ndarray
    hf_calls: int
    lf_calls: int

    @property
    def survived(self) -> np.ndarray:
        return self.lf_weights > 0


def importance_ratio(theta, prior, proposal=None) -> np.ndarray:
    """``pi(theta) / q(theta)``; exactly 1.0 inside the support when q is the prior."""
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    prior_density = np.asarray(prior.density(theta), dtype=float)
    if proposal is None or proposal is prior:
        return np.where(prior_density > 0, 1.0, 0.0)
    q = np.asarray(proposal.density(theta), dtype=float)
    if np.any(q <= 0):
        raise ZeroProposalDensity("proposal density vanished at one of its own draws")
    return prior_density / q


def lf_weight(theta, lf_distances, eps_lf, prior, proposal=None) -> float:
    """LF screening weight ``(pi/q) * #{k : lf_k < eps_lf}``."""
    ratio = importance_ratio(np.atleast_1d(theta)[None, :], prior, proposal)[0]
    return float(ratio * pass_counts(lf_distances, eps_lf))


def hf_weight_update(lf_weight, lf_distances, hf_distances, eps, eps_lf):
    """Replace the LF pass count inside ``lf_weight`` by the HF pass count.

    Works elementwise on arrays of particles. ``lf_weight`` must be positive.
    """
    lf_count = pass_counts(lf_distances, eps_lf)
    hf_count = pass_counts(hf_distances, eps)
    lf_weight = np.asarray(lf_weight, dtype=float)
    if np.any(lf_weight <= 0) or np.any(lf_count == 0):
        raise ValueError("HF update needs a particle that passed the LF screen")
    out = lf_weight * hf_count / lf_count
    return float(out) if np.ndim(out) == 0 else out


def run_prefilter_is(config: ISConfig, pair, prior, seed: int) -> ISResult:
    n = config.n_particles
    proposal = config.proposal if config.proposal is not None else prior
    gens = streams(seed, IMPORTANCE, 0, range(n))
    theta = np.stack([proposal.sample(g) for g in gens])
    ratio = importance_ratio(theta, prior, proposal)
    hf_before, lf_before = pair.hf_calls, pair.lf_calls

    lf = pair.lf_distances(theta, gens, config.n_lf)
    lf_counts = pass_counts(lf, config.eps_lf)
    lf_weights = ratio * lf_counts
    alive = np.flatnonzero(lf_weights > 0)

    hf = np.full((n, config.n_hf), np.nan)
    if alive.size:
        hf[alive] = pair.hf_distances(theta[alive], [gens[i] for i in alive], config.n_hf)
    hf_counts = pass_counts(hf, config.eps)

    # The importance factor is common to both stages, so the count update is
    # applied to the unit-ratio LF weight and the ratio multiplied back in.
    raw = np.zeros(n)
    if alive.size:
        raw[alive] = ratio[alive] * hf_weight_update(lf_counts[alive].astype(float), lf[alive], hf[alive],
                                                     config.eps, config.eps_lf)
    if not np.any(raw > 0):
        raise ZeroTotalMass("every particle was filtered or failed the HF tolerance")
    ensemble = Ensemble(theta, normalize_weights(raw), hf, lf)
    return ISResult(ensemble, ratio, lf_counts, hf_counts, lf_weights, raw,
                    pair.hf_calls - hf_before, pair.lf_calls - lf_before)


def run_abc_is(n_particles: int, n_hf: int, eps: float, pair, prior, seed: int, proposal=None) -> ISResult:
    """Plain ABC importance sampling: every draw gets HF simulations."""
    proposal = proposal if proposal is not None else prior
    gens = streams(seed, IMPORTANCE, 0, range(n_particles))
    theta = np.stack([proposal.sample(g) for g in gens])
    ratio = importance_ratio(theta, prior, proposal)
    hf_before = pair.hf_calls
    hf = pair.hf_distances(theta, gens, n_hf)
    counts = pass_counts(hf, eps)
    raw = ratio * counts
    if not np.any(raw > 0):
        raise ZeroTotalMass("no HF simulation fell within tolerance")
    ensemble = Ensemble(theta, normalize_weights(raw), hf)
    return ISResult(ensemble, ratio, np.zeros(n_particles, dtype=int), counts, ratio.copy(), raw,
                    pair.hf_calls - hf_before, 0)
