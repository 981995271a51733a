import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import cumulative_trapezoid, trapezoid
from scipy.stats import norm

from mfabc import diagnostics as dg
from mfabc.errors import AssumptionViolated, EmptyReference
from mfabc.models.toy import hf_modes, toy_pair, toy_prior

GRID = dg.TOY_GRID


def _inverse_cdf_sample(grid, density, n, seed):
    cdf = cumulative_trapezoid(density, grid, initial=0.0)
    cdf /= cdf[-1]
    return np.interp(np.random.default_rng(seed).random(n), cdf, grid)


# ---------------------------------------------------------------- analytic posteriors


def test_exact_posterior_wide_tolerance_is_prior():
    np.testing.assert_allclose(dg.toy_exact_abc_posterior(0.5, np.inf), 0.25, atol=1e-12)
    np.testing.assert_allclose(dg.toy_exact_abc_posterior(0.5, 1e6), 0.25, atol=1e-9)


def test_exact_posterior_symmetric():
    d = dg.toy_exact_abc_posterior(0.5, 0.1)
    np.testing.assert_allclose(d, d[::-1], rtol=0, atol=1e-12)


def test_exact_posterior_matches_direct_formula():
    m = 4 * GRID**2 + 0.3 * np.cos(5 * np.pi * GRID)
    raw = norm.cdf(0.5 + np.sqrt(0.1), m, 0.2) - norm.cdf(0.5 - np.sqrt(0.1), m, 0.2)
    np.testing.assert_allclose(dg.toy_exact_abc_posterior(0.5, 0.1), raw / trapezoid(raw, GRID), rtol=1e-9)


def test_exact_posterior_grid_refinement():
    coarse = dg.toy_exact_abc_posterior(0.5, 0.1, np.linspace(-2, 2, 2001))
    fine = dg.toy_exact_abc_posterior(0.5, 0.1, np.linspace(-2, 2, 4001))
    assert np.max(np.abs(fine[::2] - coarse)) < 1e-4


def test_maps_posterior_limits():
    base = dg.toy_exact_abc_posterior(0.5, 0.1)
    np.testing.assert_allclose(dg.maps_exact_posterior(0.5, 0.1, np.inf, 20), base, rtol=1e-12)
    np.testing.assert_allclose(dg.maps_exact_posterior(0.5, 0.1, 1.0, 10**6), base, rtol=0, atol=1e-9)
    p_lf = dg.gaussian_accept_probability(4 * GRID**2, 0.5, 0.3)
    np.testing.assert_allclose(dg.lf_pass_probability(0.5, 0.3, 1), p_lf, rtol=0, atol=1e-15)


def test_maps_posterior_approaches_abc_posterior_monotonically():
    base = dg.toy_exact_abc_posterior(0.5, 0.1)
    gaps = [np.max(np.abs(dg.maps_exact_posterior(0.5, 0.1, e, 20) - base))
            for e in (0.05, 0.1, 0.2, 0.4, 0.8, 1.6)]
    assert np.all(np.diff(gaps) <= 1e-12)


def test_accept_probability_far_tail_is_accurate():
    p = dg.gaussian_accept_probability(np.array([0.0]), 5.0, 0.01, 0.2)
    exact = norm.sf((5.0 - 0.1) / 0.2) - norm.sf((5.0 + 0.1) / 0.2)
    assert p[0] > 0 and p[0] == pytest.approx(exact, rel=1e-9)


# ---------------------------------------------------------------- KL


def test_binned_kl_self_consistency():
    dens = dg.toy_exact_abc_posterior(0.5, 0.1)
    x = _inverse_cdf_sample(GRID, dens, 100_000, 0)
    assert 0 <= dg.kl_binned(x, np.ones_like(x), GRID, dens) < 0.01


def test_binned_kl_half_support():
    uniform = np.full_like(GRID, 0.25)
    x = np.random.default_rng(1).uniform(0, 2, 100_000)
    assert dg.kl_binned(x, np.ones_like(x), GRID, uniform) == pytest.approx(np.log(2), abs=0.02)


def test_knn_kl_identical_sets():
    x = np.random.default_rng(2).standard_normal((4000, 2))
    assert abs(dg.kl_knn(x, x)) < 0.05


def test_knn_kl_gaussian_closed_form():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((5000, 2))
    r = rng.standard_normal((5000, 2)) + np.array([0.5, 0.0])
    # KL(N(0, I) || N(m, I)) = |m|^2 / 2
    assert dg.kl_knn(x, r) == pytest.approx(0.125, abs=0.04)


def test_knn_kl_tolerates_duplicates():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((2000, 3))
    dup = np.repeat(x[:1000], 2, axis=0)
    assert np.isfinite(dg.kl_knn(dup, x))


def test_kl_divergence_dispatch_and_errors():
    dens = dg.toy_exact_abc_posterior(0.5, 0.1)
    x = _inverse_cdf_sample(GRID, dens, 20_000, 5)[:, None]
    w = np.full(len(x), 1 / len(x))
    assert dg.kl_divergence(x, w, density=dens) == dg.kl_binned(x, w, GRID, dens)
    ref = _inverse_cdf_sample(GRID, dens, 20_000, 6)[:, None]
    assert abs(dg.kl_divergence(x, w, reference=ref)) < 0.05
    with pytest.raises(EmptyReference):
        dg.kl_divergence(x, w)
    with pytest.raises(EmptyReference):
        dg.kl_knn(x, np.empty((0, 1)))


# ---------------------------------------------------------------- bound and pre-filter rate


def test_bound_values():
    assert dg.prop2_bound(0.001) == pytest.approx(1 / 0.999 - 0.999, rel=1e-12)
    assert dg.prop2_bound(0.001) == pytest.approx(2.001e-3, abs=1e-6)
    assert dg.prop2_bound(1e-15) > 0


def test_bound_inert_filter():
    rep = dg.verify_prop2_bound(0.5, 0.1, np.inf, 20)
    assert rep["a_L"] == 0 and rep["bound"] == 0
    assert rep["l1_distance"] == pytest.approx(0, abs=1e-12)
    assert rep["holds"]


def test_bound_assumption_violated():
    with pytest.raises(AssumptionViolated):
        dg.verify_prop2_bound(10.0, 0.1, 1e-30, 1)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.01, 2.0), st.floats(1e-3, 5.0), st.integers(1, 30), st.floats(0.0, 1.5))
def test_bound_holds_everywhere(eps, eps_lf, n_lf, y):
    try:
        rep = dg.verify_prop2_bound(y, eps, eps_lf, n_lf)
    except AssumptionViolated:
        return
    assert rep["holds"]


def test_prefilter_rate_limits():
    assert dg.prefilter_rate_quadrature(0.5, np.inf, 20) == pytest.approx(0, abs=1e-12)
    assert dg.prefilter_rate_quadrature(0.5, 1e-14, 20) == pytest.approx(1, abs=1e-4)


def test_prefilter_rate_monte_carlo():
    r = dg.prefilter_rate(0.5, 0.1, 20, toy_pair(0.5), toy_prior(), 100_000, seed=1)
    assert abs(r["monte_carlo"] - r["quadrature"]) < 3 * r["standard_error"]


def test_false_rejection_mass():
    assert dg.false_rejection_mass([0.1, 0.5, 0.9], [1, 1, 2], 0.5) == pytest.approx(0.75)


# ---------------------------------------------------------------- reference chains and concentration


def test_abc_mcmc_matches_analytic_posterior():
    samples, rate = dg.abc_mcmc(toy_pair(0.5), toy_prior(), 0.1, 10, 4000, n_chains=8, seed=3)
    assert samples.shape == (8 * 3200, 1)
    assert 0 < rate < 1
    dens = dg.toy_exact_abc_posterior(0.5, 0.1)
    assert np.mean(np.abs(samples)) == pytest.approx(trapezoid(np.abs(GRID) * dens, GRID), abs=0.02)


def test_mode_concentration():
    modes = hf_modes(0.5)
    theta = np.r_[np.full(5, modes[0]), np.full(5, modes[1] + 0.05), [1.5]]
    out = dg.mode_concentration(theta, np.ones(11), modes)
    assert out["mass_near_mode"] == pytest.approx(10 / 11)
    assert out["iqr"].shape == (2,)
    assert dg.weighted_iqr(np.arange(100.0), np.ones(100)) == pytest.approx(50, abs=1)
