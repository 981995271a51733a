"""Suitability check for using an LF model as a pre-filter.

A pilot importance sample is drawn and an HF tolerance ``eps0`` is chosen so
that a fraction ``kappa`` of the draws is accepted. The LF tolerance
``eps_lf0`` is then the largest minimum LF distance among those accepted
draws, so no HF-accepted draw would have been screened out. The metric ``E``
counts how many draws survive the LF screen, relative to ``(1 - kappa) N0``;
smaller values mean the LF model discriminates better.
"""

from __future__ import annotations

import numpy as np

from mfabc.abc_is import importance_ratio
from mfabc.core import SUITABILITY, pa_threshold, streams
from mfabc.errors import NoAcceptedSamples


def metric_bounds(kappa: float, n0: int) -> tuple[float, float]:
    """Range of ``E``: a perfectly separating LF model and one that filters nothing."""
    return np.floor(kappa * n0 + 1e-9) / ((1 - kappa) * n0), 1.0 / (1 - kappa)


def assess(pair, prior, eps: float, n0: int = 5000, kappa: float = 0.1, n_lf: int = 20, n_hf: int = 10,
           seed: int = 0, proposal=None) -> dict:
    if n0 < 1:
        raise ValueError("n0 must be >= 1")
    if not 0 < kappa < 1:
        raise ValueError("kappa must lie in (0, 1)")
    proposal = proposal if proposal is not None else prior
    gens = streams(seed, SUITABILITY, 0, range(n0))
    theta = np.stack([proposal.sample(g) for g in gens])
    ratio = importance_ratio(theta, prior, proposal)
    hf0, lf0 = pair.hf_calls, pair.lf_calls
    lf = pair.lf_distances(theta, gens, n_lf)
    hf = pair.hf_distances(theta, gens, n_hf)

    hf_min = np.where(ratio > 0, hf.min(axis=1), np.inf)
    eps0 = pa_threshold(hf_min, np.ones(n0, dtype=bool), kappa, np.inf)
    eps0 = max(eps0, eps)
    accepted = hf_min < eps0
    if not accepted.any():
        raise NoAcceptedSamples(f"no pilot draw reaches tolerance {eps0}")
    lf_min = lf.min(axis=1)
    eps_lf0 = float(lf_min[accepted].max())
    lf_counts = np.count_nonzero(lf <= eps_lf0, axis=1)
    passed = lf_counts > 0
    if not passed[accepted].all():
        raise AssertionError("an HF-accepted draw failed the LF screen")
    e_metric = passed.sum() / ((1 - kappa) * n0)
    lower, upper = metric_bounds(kappa, n0)
    return {
        "epsilon0": float(eps0),
        "epsilon_tilde0": eps_lf0,
        "E": float(e_metric),
        "kappa": kappa,
        "N0": n0,
        "hf_calls": pair.hf_calls - hf0,
        "lf_calls": pair.lf_calls - lf0,
        "hf_accepted": int(accepted.sum()),
        "lf_passed": int(passed.sum()),
        "lf_passed_hf_rejected": int((passed & ~accepted).sum()),
        "E_lower": float(lower),
        "E_upper": float(upper),
    }
