"""Priors, the single-fidelity simulator interface and the fidelity pair."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

CHUNK = 128


class UniformPrior:
    """Independent uniform box prior."""

    def __init__(self, lows, highs):
        self.lows = np.atleast_1d(np.asarray(lows, dtype=float))
        self.highs = np.atleast_1d(np.asarray(highs, dtype=float))
        if self.lows.shape != self.highs.shape or np.any(self.highs <= self.lows):
            raise ValueError("need lows < highs componentwise")
        self._density = float(1.0 / np.prod(self.highs - self.lows))

    @property
    def dim(self) -> int:
        return self.lows.size

    def contains(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        return np.all((theta >= self.lows) & (theta <= self.highs), axis=-1)

    def density(self, theta) -> np.ndarray | float:
        inside = self.contains(theta)
        return np.where(inside, self._density, 0.0) if np.ndim(inside) else (self._density if inside else 0.0)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return self.lows + (self.highs - self.lows) * rng.random(self.dim)

    def __repr__(self):
        return f"UniformPrior({self.lows.tolist()}, {self.highs.tolist()})"


class GridPrior:
    """Uniform prior on a finite set of one-dimensional points."""

    def __init__(self, points):
        self.points = np.sort(np.asarray(points, dtype=float).ravel())
        self.lows = self.points[:1]
        self.highs = self.points[-1:]

    @property
    def dim(self) -> int:
        return 1

    def index(self, theta) -> np.ndarray:
        """Grid index of each theta, or -1 when theta is off the grid."""
        t = np.asarray(theta, dtype=float)[..., 0]
        idx = np.clip(np.searchsorted(self.points, t), 0, self.points.size - 1)
        lower = np.clip(idx - 1, 0, None)
        near = np.where(np.abs(self.points[lower] - t) < np.abs(self.points[idx] - t), lower, idx)
        return np.where(np.isclose(self.points[near], t, rtol=0, atol=1e-9), near, -1)

    def contains(self, theta) -> np.ndarray:
        return self.index(theta) >= 0

    def density(self, theta):
        inside = self.contains(theta)
        d = 1.0 / self.points.size
        return np.where(inside, d, 0.0) if np.ndim(inside) else (d if inside else 0.0)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return np.array([self.points[rng.integers(self.points.size)]])


class Simulator:
    """One fidelity level of a model.

    Subclasses implement :meth:`sample` for a single parameter and may
    override :meth:`sample_batch` with a vectorized version. Either way every
    particle's randomness comes only from its own generator, so results do
    not depend on how particles are grouped.
    """

    name = "simulator"
    n_params = 1

    def sample(self, theta, rng: np.random.Generator, n: int = 1) -> np.ndarray:
        raise NotImplementedError

    def sample_batch(self, thetas, gens, n: int) -> np.ndarray:
        return np.stack([self.sample(t, g, n) for t, g in zip(thetas, gens)])

    def summarize(self, raw) -> np.ndarray:
        """Summary vectors, shape ``raw.shape[:-k] + (n_summaries,)``."""
        return np.asarray(raw, dtype=float)[..., None]

    def discrepancy(self, summary, observed_summary) -> np.ndarray:
        diff = np.asarray(summary) - np.asarray(observed_summary)
        return np.sum(diff * diff, axis=-1)


def _chunks(n: int, size: int = CHUNK):
    return [slice(i, min(i + size, n)) for i in range(0, n, size)]


def parallel_map(fn, items, threads: int = 1) -> list:
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


@dataclass
class FidelityPair:
    """High- and low-fidelity simulators sharing a parameter space.

    ``hf_calls`` and ``lf_calls`` count individual simulated datasets; they
    are only ever incremented by :meth:`hf_distances` / :meth:`lf_distances`.
    """

    hf: Simulator
    lf: Simulator
    observed_hf_summary: np.ndarray
    observed_lf_summary: np.ndarray
    threads: int = 1
    hf_calls: int = field(default=0, init=False)
    lf_calls: int = field(default=0, init=False)

    def __post_init__(self):
        if self.hf.n_params != self.lf.n_params:
            raise ValueError("fidelity levels disagree on parameter dimension")
        self.observed_hf_summary = np.asarray(self.observed_hf_summary, dtype=float)
        self.observed_lf_summary = np.asarray(self.observed_lf_summary, dtype=float)

    @property
    def n_params(self) -> int:
        return self.hf.n_params

    def _distances(self, sim, observed, thetas, gens, n):
        thetas = np.asarray(thetas, dtype=float).reshape(len(gens), -1)

        def work(sl):
            raw = sim.sample_batch(thetas[sl], gens[sl], n)
            return sim.discrepancy(sim.summarize(raw), observed)

        parts = parallel_map(work, _chunks(len(gens)), self.threads)
        if not parts:
            return np.empty((0, n))
        return np.concatenate(parts, axis=0).reshape(len(gens), n)

    def hf_distances(self, thetas, gens, n: int) -> np.ndarray:
        out = self._distances(self.hf, self.observed_hf_summary, thetas, gens, n)
        self.hf_calls += out.size
        return out

    def lf_distances(self, thetas, gens, n: int) -> np.ndarray:
        out = self._distances(self.lf, self.observed_lf_summary, thetas, gens, n)
        self.lf_calls += out.size
        return out

    def reset_counters(self):
        self.hf_calls = 0
        self.lf_calls = 0
