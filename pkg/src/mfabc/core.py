"""Particle and weight bookkeeping shared by every sampler.

Weights are plain numpy vectors. An ensemble stores parameters together with
the cached high- and low-fidelity distances of every particle, so that
resampling copies simulations instead of re-running them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from mfabc.errors import NoActiveParticles, ZeroTotalMass

# Stream phases. Together with (iteration, index) they identify one RngStream.
INIT = 1
MOVE = 2
RESAMPLE = 3
HF_FILL = 4
OBSERVED = 5
SUITABILITY = 6
IMPORTANCE = 7
MCMC = 8
PREFILTER_MC = 9


@dataclass(frozen=True)
class RngStream:
    """Counter-based random stream keyed by ``(seed, stream_id)``.

    The Philox key is the 128-bit concatenation of the two 64-bit integers,
    so every pair gets its own independent sequence regardless of which
    thread or in which order the stream is consumed.
    """

    seed: int
    stream_id: int

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 bits")
        if not 0 <= self.stream_id < 2**64:
            raise ValueError("stream_id must fit in 64 bits")

    @classmethod
    def for_particle(cls, seed: int, phase: int, iteration: int = 0, index: int = 0):
        if not (0 <= phase < 2**8 and 0 <= iteration < 2**24 and 0 <= index < 2**32):
            raise ValueError("stream coordinates out of range")
        return cls(seed, (phase << 56) | (iteration << 32) | index)

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(key=(self.seed << 64) | self.stream_id))


def stream(seed: int, phase: int, iteration: int = 0, index: int = 0) -> np.random.Generator:
    """Generator for one (phase, iteration, particle) coordinate."""
    return RngStream.for_particle(seed, phase, iteration, index).generator()


def streams(seed: int, phase: int, iteration: int, indices) -> list[np.random.Generator]:
    return [stream(seed, phase, iteration, int(i)) for i in indices]


def normalize_weights(weights) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise ValueError("weights must be a non-empty vector")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise ValueError("weights must be finite and nonnegative")
    total = w.sum()
    if total <= 0:
        raise ZeroTotalMass("all weights are zero")
    return w / total


def ess(weights) -> float:
    """Effective sample size ``1 / sum(w**2)`` of normalized weights."""
    w = np.asarray(weights, dtype=float)
    return float(1.0 / np.dot(w, w))


def proportion_active(weights) -> float:
    w = np.asarray(weights, dtype=float)
    return float(np.count_nonzero(w > 0) / w.size)


def weighted_quantile(values, weights, q: float) -> float:
    """Left-continuous inverse of the weighted empirical CDF.

    Returns the smallest value ``v`` such that the normalized weight of
    ``{values <= v}`` is at least ``q``.
    """
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if values.shape != weights.shape:
        raise ValueError("values and weights must have the same shape")
    if not 0.0 <= q <= 1.0:
        raise ValueError("q must lie in [0, 1]")
    keep = weights > 0
    if not keep.any():
        raise ZeroTotalMass("weighted quantile of zero total mass")
    v, w = values[keep], weights[keep]
    order = np.argsort(v, kind="stable")
    v, w = v[order], w[order]
    cdf = np.cumsum(w)
    cdf /= cdf[-1]
    # 1e-12 absorbs summation round-off when q sits exactly on a CDF step
    idx = int(np.searchsorted(cdf, q - 1e-12, side="left"))
    return float(v[min(idx, v.size - 1)])


def pass_counts(distances, eps: float) -> np.ndarray:
    """Per-particle number of simulations with distance strictly below ``eps``.

    Unsimulated slots hold NaN and never count as passes.
    """
    d = np.asarray(distances, dtype=float)
    if np.isinf(eps) and eps > 0:
        return np.sum(~np.isnan(d), axis=-1)
    return np.sum(d < eps, axis=-1)


def pa_threshold(min_distances, active, alpha: float, eps_prev: float) -> float:
    """Solve the proportion-active equation exactly.

    Among active particles, keep ``floor(alpha * n_active)`` of them: the
    returned tolerance is the largest value ``<= eps_prev`` such that at most
    that many particles have ``min_distance < eps``.
    """
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    m = np.sort(np.asarray(min_distances, dtype=float)[np.asarray(active, dtype=bool)])
    n_active = m.size
    target = int(np.floor(alpha * n_active + 1e-9))
    if target == 0:
        raise NoActiveParticles(f"alpha={alpha} of {n_active} active particles rounds to zero")
    if target >= n_active:
        return float(eps_prev)
    return float(min(m[target], eps_prev))


def systematic_indices(weights, rng: np.random.Generator) -> np.ndarray:
    w = normalize_weights(weights)
    n = w.size
    positions = (rng.random() + np.arange(n)) / n
    cdf = np.cumsum(w)
    cdf[-1] = 1.0
    return np.minimum(np.searchsorted(cdf, positions, side="right"), n - 1)


def multinomial_indices(weights, rng: np.random.Generator) -> np.ndarray:
    w = normalize_weights(weights)
    n = w.size
    cdf = np.cumsum(w)
    cdf[-1] = 1.0
    return np.minimum(np.searchsorted(cdf, rng.random(n), side="right"), n - 1)


RESAMPLERS = {"systematic": systematic_indices, "multinomial": multinomial_indices}


@dataclass(frozen=True)
class ParticleState:
    theta: np.ndarray
    hf_distances: np.ndarray
    lf_distances: np.ndarray
    min_lf_distance: float


@dataclass
class Ensemble:
    """N weighted particles with cached simulation distances.

    ``hf`` rows are NaN for particles that were never simulated at high
    fidelity (pre-filtered, or deferred). ``lf`` is an ``(N, 0)`` array for
    single-fidelity samplers.
    """

    theta: np.ndarray
    weights: np.ndarray
    hf: np.ndarray
    lf: np.ndarray = field(default=None)

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        if self.theta.ndim == 1:
            self.theta = self.theta[:, None]
        self.weights = np.asarray(self.weights, dtype=float)
        n = self.weights.size
        if n < 1:
            raise ValueError("an ensemble needs at least one particle")
        self.hf = np.asarray(self.hf, dtype=float).reshape(n, -1)
        if self.lf is None:
            self.lf = np.empty((n, 0))
        self.lf = np.asarray(self.lf, dtype=float).reshape(n, -1)
        if self.theta.shape[0] != n:
            raise ValueError("theta and weights disagree on N")

    @property
    def size(self) -> int:
        return self.weights.size

    @property
    def dim(self) -> int:
        return self.theta.shape[1]

    @property
    def lf_min(self) -> np.ndarray:
        if self.lf.shape[1] == 0:
            return np.full(self.size, np.inf)
        return self.lf.min(axis=1)

    @property
    def hf_simulated(self) -> np.ndarray:
        return ~np.isnan(self.hf).any(axis=1)

    @property
    def normalized(self) -> bool:
        return bool(abs(self.weights.sum() - 1.0) <= 1e-12)

    def particle(self, i: int) -> ParticleState:
        lf = self.lf[i].copy()
        return ParticleState(
            theta=self.theta[i].copy(),
            hf_distances=self.hf[i].copy() if self.hf_simulated[i] else np.empty(0),
            lf_distances=lf,
            min_lf_distance=float(lf.min()) if lf.size else np.inf,
        )

    def take(self, idx) -> "Ensemble":
        idx = np.asarray(idx)
        return Ensemble(self.theta[idx].copy(), self.weights[idx].copy(),
                        self.hf[idx].copy(), self.lf[idx].copy())

    def copy(self) -> "Ensemble":
        return self.take(np.arange(self.size))

    def ess(self) -> float:
        return ess(normalize_weights(self.weights))

    def mean(self) -> np.ndarray:
        w = normalize_weights(self.weights)
        return w @ self.theta

    def covariance(self) -> np.ndarray:
        w = normalize_weights(self.weights)
        centred = self.theta - w @ self.theta
        return (centred * w[:, None]).T @ centred


def resample(ensemble: Ensemble, rng: np.random.Generator, scheme: str = "systematic") -> Ensemble:
    """Draw N particles with probabilities equal to the weights.

    Cached distances travel with their particle; output weights are 1/N.
    """
    try:
        draw = RESAMPLERS[scheme]
    except KeyError:
        raise ValueError(f"unknown resampling scheme {scheme!r}") from None
    idx = draw(ensemble.weights, rng)
    out = ensemble.take(idx)
    out.weights = np.full(ensemble.size, 1.0 / ensemble.size)
    return out
