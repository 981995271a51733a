"""Accuracy and theory checks.

Analytic ABC posteriors for the toy model, KL estimators, the L1 bound on
the pre-filtering error, the expected pre-filtering rate, ABC-MCMC reference
chains and posterior concentration summaries.
"""

from __future__ import annotations

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid
from scipy.spatial import cKDTree
from scipy.stats import norm

from mfabc.core import MCMC, PREFILTER_MC, stream, streams, systematic_indices, weighted_quantile
from mfabc.errors import AssumptionViolated, EmptyReference
from mfabc.models.toy import NOISE_SD, PRIOR_BOUNDS, hf_mean, lf_mean

TOY_GRID = np.linspace(PRIOR_BOUNDS[0], PRIOR_BOUNDS[1], 2001)
KL_BINS = 200
KNN_K = 5


def gaussian_accept_probability(mean, y, eps, sd=NOISE_SD):
    """P((x - y)^2 < eps) for x ~ N(mean, sd^2)."""
    mean = np.asarray(mean, dtype=float)
    if np.isinf(eps):
        return np.ones_like(mean)
    r = np.sqrt(eps)
    a = (y - r - mean) / sd
    b = (y + r - mean) / sd
    # difference of upper tails keeps precision when both bounds sit far right
    return np.where(a > 0, norm.sf(a) - norm.sf(b), norm.cdf(b) - norm.cdf(a))


def _normalize(grid, mass):
    z = trapezoid(mass, grid)
    if not z > 0:
        raise AssumptionViolated("density vanishes on the whole grid")
    return mass / z


def toy_exact_abc_posterior(y_obs, eps, grid=TOY_GRID):
    """ABC posterior density of the toy HF model on ``grid`` (uniform prior)."""
    grid = np.asarray(grid, dtype=float)
    return _normalize(grid, gaussian_accept_probability(hf_mean(grid), y_obs, eps))


def lf_pass_probability(y_obs, eps_lf, n_lf, grid=TOY_GRID):
    """Probability that at least one of ``n_lf`` toy LF simulations passes ``eps_lf``."""
    p = gaussian_accept_probability(lf_mean(np.asarray(grid, dtype=float)), y_obs, eps_lf)
    return 1.0 - (1.0 - p) ** n_lf


def maps_exact_posterior(y_obs, eps, eps_lf, n_lf, grid=TOY_GRID):
    """Target of pre-filtered sampling: ABC posterior times the LF pass probability."""
    grid = np.asarray(grid, dtype=float)
    p = gaussian_accept_probability(hf_mean(grid), y_obs, eps)
    return _normalize(grid, p * lf_pass_probability(y_obs, eps_lf, n_lf, grid))


def bin_masses(grid, density, bins=KL_BINS):
    """Mass of ``density`` in ``bins`` equal bins spanning the grid."""
    grid = np.asarray(grid, dtype=float)
    cdf = cumulative_trapezoid(density, grid, initial=0.0)
    edges = np.linspace(grid[0], grid[-1], bins + 1)
    mass = np.diff(np.interp(edges, grid, cdf))
    return edges, mass / mass.sum()


def kl_binned(theta, weights, grid, density, bins=KL_BINS) -> float:
    """KL(samples || reference) from a weighted histogram on the reference bins."""
    theta = np.ravel(np.asarray(theta, dtype=float))
    w = np.asarray(weights, dtype=float)
    if theta.size == 0:
        raise EmptyReference("no samples to compare")
    edges, ref = bin_masses(grid, density, bins)
    hist, _ = np.histogram(theta, bins=edges, weights=w)
    p = hist / hist.sum()
    keep = p > 0
    with np.errstate(divide="ignore"):
        return float(np.sum(p[keep] * (np.log(p[keep]) - np.log(ref[keep]))))


def _kth_distinct_distance(tree, points, k, skip_self):
    """Distance to the k-th neighbour at strictly positive distance.

    Resampled ensembles contain exact duplicates, whose zero distances would
    send the log-ratio to infinity; they are skipped.
    """
    extra = k + (1 if skip_self else 0)
    out = np.empty(len(points))
    todo = np.arange(len(points))
    while todo.size:
        q = min(extra, tree.n)
        d, _ = tree.query(points[todo], k=q)
        d = d.reshape(len(todo), q)
        positive = np.sort(np.where(d > 0, d, np.inf), axis=1)
        found = np.isfinite(positive[:, k - 1]) if q >= k else np.zeros(len(todo), dtype=bool)
        out[todo[found]] = positive[found, k - 1]
        if q == tree.n:
            out[todo[~found]] = np.inf
            break
        todo = todo[~found]
        extra *= 2
    return out


def kl_knn(samples, reference, k=KNN_K) -> float:
    """k-nearest-neighbour KL(samples || reference) estimator (Wang, Kulkarni and Verdu)."""
    x = np.asarray(samples, dtype=float)
    r = np.asarray(reference, dtype=float)
    if r.size == 0:
        raise EmptyReference("reference sample is empty")
    x = x.reshape(len(x), -1)
    r = r.reshape(len(r), -1)
    if len(x) <= k:
        raise ValueError(f"need more than k={k} samples")
    n, d = x.shape
    m = len(r)
    rho = _kth_distinct_distance(cKDTree(x), x, k, skip_self=True)
    nu = _kth_distinct_distance(cKDTree(r), x, k, skip_self=False)
    ok = np.isfinite(rho) & np.isfinite(nu)
    return float(d * np.mean(np.log(nu[ok] / rho[ok])) + np.log(m / (n - 1)))


def equal_weight_sample(theta, weights, seed=0) -> np.ndarray:
    """Systematic resample of a weighted ensemble to equal weights."""
    theta = np.asarray(theta, dtype=float)
    idx = systematic_indices(np.asarray(weights, dtype=float), stream(seed, MCMC, 0xFFFF, 0))
    return theta[idx]


def kl_divergence(theta, weights, reference=None, grid=None, density=None) -> float:
    """Binned KL against a grid density, or kNN KL against reference samples."""
    if density is not None:
        return kl_binned(theta, weights, grid if grid is not None else TOY_GRID, density)
    if reference is None or len(reference) == 0:
        raise EmptyReference("KL needs a reference density or reference samples")
    return kl_knn(equal_weight_sample(theta, weights), reference)


def prop2_bound(a_lf: float) -> float:
    """``1/(1 - a) - (1 - a)``, written without the cancellation at small ``a``."""
    return a_lf * (2.0 - a_lf) / (1.0 - a_lf)


def verify_prop2_bound(y_obs, eps, eps_lf, n_lf, grid=TOY_GRID) -> dict:
    """Quadrature check of the L1 error bound for the toy model."""
    grid = np.asarray(grid, dtype=float)
    post = toy_exact_abc_posterior(y_obs, eps, grid)
    miss = (1.0 - gaussian_accept_probability(lf_mean(grid), y_obs, eps_lf)) ** n_lf
    a_lf = float(trapezoid(post * miss, grid))
    if a_lf >= 1 - 1e-12:
        raise AssumptionViolated(f"false rejection mass {a_lf} is not below 1")
    filtered = maps_exact_posterior(y_obs, eps, eps_lf, n_lf, grid)
    l1 = float(trapezoid(np.abs(filtered - post), grid))
    bound = prop2_bound(a_lf)
    # 1e-12 absorbs quadrature round-off when the filter is inert (both sides 0)
    return {"a_L": a_lf, "l1_distance": l1, "bound": bound, "holds": bool(l1 <= bound + 1e-12)}


def prefilter_rate_quadrature(y_obs, eps_lf, n_lf, grid=TOY_GRID) -> float:
    """Prior mass screened out by the LF filter, toy model, by quadrature."""
    grid = np.asarray(grid, dtype=float)
    prior = np.full_like(grid, 1.0 / (grid[-1] - grid[0]))
    return float(trapezoid(prior * (1.0 - lf_pass_probability(y_obs, eps_lf, n_lf, grid)), grid))


def prefilter_rate_mc(pair, prior, eps_lf, n_lf, n_draws, seed=0) -> tuple[float, float]:
    """Monte Carlo frequency of LF rejection under the prior, with its standard error."""
    gens = streams(seed, PREFILTER_MC, 0, range(n_draws))
    theta = np.stack([prior.sample(g) for g in gens])
    lf = pair.lf_distances(theta, gens, n_lf)
    rate = float(np.mean(lf.min(axis=1) >= eps_lf))
    return rate, float(np.sqrt(max(rate * (1 - rate), 1e-300) / n_draws))


def prefilter_rate(y_obs, eps_lf, n_lf, pair=None, prior=None, n_draws=0, seed=0, grid=TOY_GRID) -> dict:
    out = {"quadrature": prefilter_rate_quadrature(y_obs, eps_lf, n_lf, grid)}
    if n_draws:
        out["monte_carlo"], out["standard_error"] = prefilter_rate_mc(pair, prior, eps_lf, n_lf, n_draws, seed)
    return out


def false_rejection_mass(lf_min, weights, threshold) -> float:
    """Weighted fraction of particles whose minimum LF distance is at or above ``threshold``."""
    w = np.asarray(weights, dtype=float)
    return float(np.sum(w * (np.asarray(lf_min) >= threshold)) / w.sum())


def abc_mcmc(pair, prior, eps, n_sims, n_iter, n_chains=10, seed=0, burn_in=0.2, cov=None, init=None,
             max_init_tries=100_000):
    """ABC-MCMC reference chains, advanced in lockstep.

    Each chain owns one random stream. Chains start from ``init`` or from
    prior draws with at least one simulation inside ``eps``. The proposal is
    a Gaussian random walk with covariance ``cov`` (default: 2 x the
    covariance of the initial states plus a small ridge).

    Returns ``(samples, acceptance_rate)`` with burn-in removed and chains
    stacked along the first axis.
    """
    gens = [stream(seed, MCMC, 0, c) for c in range(n_chains)]
    dim = pair.n_params
    if init is None:
        theta = np.empty((n_chains, dim))
        hf = np.empty((n_chains, n_sims))
        for c, g in enumerate(gens):
            for _ in range(max_init_tries):
                t = prior.sample(g)
                d = pair.hf_distances(t[None, :], [g], n_sims)[0]
                if np.any(d < eps):
                    theta[c], hf[c] = t, d
                    break
            else:
                raise AssumptionViolated(f"no prior draw reached tolerance {eps} for chain {c}")
    else:
        theta = np.array(init, dtype=float).reshape(n_chains, dim)
        hf = pair.hf_distances(theta, gens, n_sims)
    if cov is None:
        spread = prior.highs - prior.lows
        cov = 2.0 * np.cov(theta.T).reshape(dim, dim) if n_chains > dim else np.diag((0.05 * spread) ** 2)
        cov += np.diag((1e-3 * spread) ** 2)
    chol = np.linalg.cholesky(np.atleast_2d(cov))
    counts = np.count_nonzero(hf < eps, axis=1)
    keep_from = int(burn_in * n_iter)
    out = np.empty((n_iter - keep_from, n_chains, dim))
    accepted = 0
    for it in range(n_iter):
        steps = np.stack([g.standard_normal(dim) for g in gens])
        prop = theta + steps @ chol.T
        inside = np.asarray(prior.density(prop)) > 0
        new_counts = np.zeros(n_chains, dtype=int)
        live = np.flatnonzero(inside)
        if live.size:
            d = pair.hf_distances(prop[live], [gens[c] for c in live], n_sims)
            new_counts[live] = np.count_nonzero(d < eps, axis=1)
        u = np.array([g.random() for g in gens])
        ratio = (np.asarray(prior.density(prop)) * new_counts) / (np.asarray(prior.density(theta)) * counts)
        acc = u < ratio
        theta[acc] = prop[acc]
        counts[acc] = new_counts[acc]
        accepted += int(acc.sum())
        if it >= keep_from:
            out[it - keep_from] = theta
    return out.transpose(1, 0, 2).reshape(-1, dim), accepted / (n_iter * n_chains)


def weighted_iqr(values, weights) -> float:
    return weighted_quantile(values, weights, 0.75) - weighted_quantile(values, weights, 0.25)


def mode_concentration(theta, weights, modes, radius=0.1) -> dict:
    """Per-mode interquartile width and total mass within ``radius`` of the nearest mode."""
    theta = np.ravel(np.asarray(theta, dtype=float))
    w = np.asarray(weights, dtype=float)
    w = w / w.sum()
    modes = np.asarray(modes, dtype=float)
    nearest = np.argmin(np.abs(theta[:, None] - modes[None, :]), axis=1)
    dist = np.abs(theta - modes[nearest])
    widths = []
    for j in range(modes.size):
        sel = (nearest == j) & (w > 0)
        widths.append(weighted_iqr(theta[sel], w[sel]) if sel.any() else np.nan)
    return {"iqr": np.array(widths), "mass_near_mode": float(w[dist <= radius].sum())}
