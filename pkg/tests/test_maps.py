import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import ks_2samp

from mfabc.asmc import AsmcConfig, run_asmc
from mfabc.core import Ensemble, ParticleState
from mfabc.diagnostics import equal_weight_sample
from mfabc.errors import ZeroTotalMass
from mfabc.kernels import GaussianRandomWalk
from mfabc.maps import MapsConfig, critical_value, pf_abc_mcmc_move, pf_move_batch, run_maps, select_aux_threshold
from mfabc.models.base import FidelityPair
from mfabc.models.toy import ToySimulator, hf_mean, toy_pair, toy_prior


def _kernel(sd):
    k = GaussianRandomWalk(1.0)
    k.chol = np.array([[sd]])
    return k


def _state(theta, hf, lf):
    lf = np.asarray(lf, float)
    return ParticleState(np.array([theta], float), np.asarray(hf, float), lf, float(lf.min()))


class CountingPair:
    """Wraps a pair and records the parameters it simulates."""

    def __init__(self, pair):
        self.pair = pair
        self.hf_thetas, self.lf_thetas = [], []

    def hf_distances(self, thetas, gens, n):
        self.hf_thetas.append(np.array(thetas))
        return self.pair.hf_distances(thetas, gens, n)

    def lf_distances(self, thetas, gens, n):
        self.lf_thetas.append(np.array(thetas))
        return self.pair.lf_distances(thetas, gens, n)


# ---------------------------------------------------------------- critical value


def test_critical_value_quantile_to_max():
    rng = np.random.default_rng(0)
    lf_min = rng.random(50)
    w = np.r_[np.full(40, 0.025), np.zeros(10)]
    hf = np.zeros((50, 4))
    assert critical_value(w, hf, lf_min, 1.0, 0.5, 1e-12) == lf_min[:40].max()


def test_critical_value_singleton():
    for a in (0.001, 0.3, 0.9):
        assert critical_value(np.ones(1), np.zeros((1, 3)), np.array([0.3]), 1.0, 0.5, a) == 0.3


def test_critical_value_order_statistic():
    rng = np.random.default_rng(1)
    lf_min = rng.permutation(np.arange(1000.0))
    got = critical_value(np.full(1000, 1e-3), np.zeros((1000, 2)), lf_min, 1.0, 0.5, 0.001)
    # smallest k with k/1000 >= 0.999 is k = 999, the 999th order statistic
    assert got == 998.0


def test_critical_value_uses_target_pass_ratio():
    hf = np.array([[0.05, 0.05], [0.3, 0.3], [0.05, 0.3]])
    lf_min = np.array([1.0, 5.0, 2.0])
    # only particles 0 and 2 pass the target; particle 2 has half weight
    assert critical_value(np.full(3, 1 / 3), hf, lf_min, 0.5, 0.1, 1e-9) == 2.0
    assert critical_value(np.full(3, 1 / 3), hf, lf_min, 0.5, 0.1, 0.4) == 1.0


def test_critical_value_falls_back_to_zero():
    hf = np.full((4, 3), 9.0)
    assert critical_value(np.full(4, 0.25), hf, np.arange(4.0), 10.0, 0.1, 0.001) == 0.0


# ---------------------------------------------------------------- auxiliary tolerance


def test_aux_threshold_examples():
    lf_min = np.arange(1.0, 11.0)
    w = np.full(10, 0.1)
    eps, aux, clamped = select_aux_threshold(lf_min, w, 1.0, 0.0, np.inf)
    assert np.all(aux > 0) and not clamped
    eps, aux, clamped = select_aux_threshold(lf_min, w, 0.7, 0.0, np.inf)
    assert np.count_nonzero(aux) == 7 and not clamped
    assert aux.sum() == pytest.approx(1.0)
    eps, aux, clamped = select_aux_threshold(np.full(10, 0.01) + np.arange(10) * 1e-4, w, 0.1, 0.05)
    assert eps == 0.05 and clamped


def test_aux_threshold_zero_mass():
    with pytest.raises(ZeroTotalMass):
        select_aux_threshold(np.array([1.0, 2.0]), np.array([0.0, 1.0]), 1.0, 0.0, 2.0)


# ---------------------------------------------------------------- pre-filtering move


def test_move_outside_prior_not_simulated():
    pair = CountingPair(toy_pair(0.5))
    ens = Ensemble(np.array([[1.99]]), np.ones(1), np.zeros((1, 5)), np.zeros((1, 5)))
    for seed in range(20):
        gens = [np.random.default_rng(seed)]
        pf_move_batch(ens, [0], 1e6, 1e6, toy_prior(), _kernel(50.0), pair, 5, 5, gens)
        assert abs(ens.theta[0, 0]) <= 2
    simulated = np.concatenate(pair.lf_thetas + pair.hf_thetas) if pair.lf_thetas else np.empty((0, 1))
    assert np.all(np.abs(simulated) <= 2)


def test_move_lf_reject_skips_hf():
    pair = toy_pair(100.0)
    ens = Ensemble(np.array([[0.0]]), np.ones(1), np.zeros((1, 5)), np.zeros((1, 5)))
    acc, rejects = pf_move_batch(ens, [0], 1.0, 0.01, toy_prior(), _kernel(0.1), pair, 5, 5,
                                 [np.random.default_rng(0)])
    assert not acc[0] and rejects == 1
    assert pair.hf_calls == 0 and pair.lf_calls == 5


def test_move_accepts_with_unit_ratio():
    pair = toy_pair(0.5, lf_sd=0.0, hf_sd=0.0)
    state = _state(0.0, np.zeros(5), np.zeros(5))
    for seed in range(20):
        out = pf_abc_mcmc_move(state, 1e6, 1e6, toy_prior(), _kernel(0.01), pair, 5, 5,
                               np.random.default_rng(seed))
        assert out.theta[0] != 0.0
        assert out.hf_distances.size == 5


def test_first_iteration_move_skips_hf():
    pair = toy_pair(0.5)
    state = _state(0.0, np.full(5, np.nan), np.zeros(5))
    out = pf_abc_mcmc_move(state, np.inf, 1e6, toy_prior(), _kernel(0.1), pair, 5, 5, np.random.default_rng(0))
    assert pair.hf_calls == 0
    assert out.theta[0] != 0.0


# ---------------------------------------------------------------- full sampler


def test_config_defaults_and_validation():
    c = MapsConfig()
    assert c.alpha_lf == c.alpha == 0.7 and c.a_lf == 0.001
    assert c.ess_threshold == c.n_particles / 2
    with pytest.raises(ValueError):
        MapsConfig(alpha_lf=1.5)
    with pytest.raises(ValueError):
        MapsConfig(a_lf=1.0)


def test_run_trace_invariants():
    pair = toy_pair(0.5)
    res = run_maps(MapsConfig(n_particles=1000), pair, toy_prior(), seed=2)
    eps = res.epsilons
    assert eps[-1] == 0.1 and np.all(np.diff(eps) <= 0)
    for row in res.trace:
        assert row["eps_aux"] >= row["eps_lower"]
    assert res.hf_calls == pair.hf_calls and res.lf_calls == pair.lf_calls
    live = res.ensemble.weights > 0
    assert np.all(res.ensemble.lf_min[live] < res.trace[-1]["eps_aux"])
    assert np.all(res.ensemble.hf_simulated[live])
    assert np.all(res.ensemble.hf[live].min(axis=1) < 0.1)


def test_run_deterministic_across_threads():
    out = []
    for threads in (1, 3):
        res = run_maps(MapsConfig(n_particles=300), toy_pair(0.5, threads=threads), toy_prior(), seed=4)
        out.append((res.ensemble.theta, res.ensemble.weights, res.ensemble.hf, res.epsilons))
    for a, b in zip(*out):
        np.testing.assert_array_equal(a, b)


def _identical_pair(y):
    obs = np.array([y])
    return FidelityPair(ToySimulator(hf_mean), ToySimulator(hf_mean), obs, obs)


def test_inert_filter_matches_asmc():
    pair = _identical_pair(0.5)
    maps = run_maps(MapsConfig(n_particles=3000, alpha_lf=1.0, a_lf=0.999), pair, toy_prior(), seed=5)
    assert all(np.isinf(r["eps_aux"]) for r in maps.trace)
    asmc = run_asmc(AsmcConfig(n_particles=3000), toy_pair(0.5), toy_prior(), seed=6)
    n = int(min(maps.ensemble.ess(), asmc.ensemble.ess()))
    rng = np.random.default_rng(0)
    a = rng.choice(equal_weight_sample(maps.ensemble.theta, maps.ensemble.weights, 1)[:, 0], n, replace=False)
    b = rng.choice(equal_weight_sample(asmc.ensemble.theta, asmc.ensemble.weights, 2)[:, 0], n, replace=False)
    assert ks_2samp(a, b).pvalue > 0.05


def test_fewer_hf_calls_than_asmc():
    maps_pair, asmc_pair = toy_pair(0.5), toy_pair(0.5)
    run_maps(MapsConfig(n_particles=1000), maps_pair, toy_prior(), seed=7)
    run_asmc(AsmcConfig(n_particles=1000), asmc_pair, toy_prior(), seed=7)
    assert maps_pair.hf_calls < asmc_pair.hf_calls


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**40), st.floats(0.3, 0.9), st.floats(0.05, 1.0))
def test_terminal_ensemble_satisfies_both_tolerances(seed, alpha, eps_target):
    pair = toy_pair(0.5)
    res = run_maps(MapsConfig(n_particles=200, alpha=alpha, eps_target=eps_target), pair, toy_prior(), seed)
    live = res.ensemble.weights > 0
    assert res.epsilons[-1] == eps_target
    assert np.all(res.ensemble.hf[live].min(axis=1) < eps_target)
    assert np.all(res.ensemble.lf_min[live] < res.trace[-1]["eps_aux"])
    assert abs(res.ensemble.weights.sum() - 1) <= 1e-12
