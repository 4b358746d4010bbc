import math

import numpy as np
import pytest
from scipy import stats

from sgld_nfl.engine import (
    SGLDConfig,
    forward_map,
    make_stream,
    run_chain,
    run_coupled,
    run_replicates,
    sgld_step,
    simulate_coupled_batch,
)
from sgld_nfl.measures import DrivingMeasure, IndexVector, tv_exact_measures
from sgld_nfl.models import NormalPrior, dataset_from_observations, gaussian_mean_model, make_dataset, posterior_exact

MODEL = gaussian_mean_model()


def data(n, seed=0, theta0=0.0):
    return make_dataset(MODEL, theta0, n, np.random.default_rng(seed))


@pytest.fixture
def four():
    return dataset_from_observations(MODEL, [1.0, 2.0, 3.0, 4.0])


def test_zero_step_size_is_pure_noise(four):
    cfg = SGLDConfig(0.0, 2, 1, four)
    v = IndexVector(np.array([1, 4]), 4)
    assert sgld_step(0.7, v, 0.0, cfg) == 0.7
    assert sgld_step(0.7, v, 0.25, cfg) == 0.95


def test_step_hand_arithmetic(four):
    cfg = SGLDConfig(0.1, 2, 1, four)
    # drift = (4/2) * ((1 - 0.5) + (4 - 0.5)) = 8
    v = IndexVector(np.array([1, 4]), 4)
    assert sgld_step(0.5, v, 0.3, cfg) == pytest.approx(0.5 + 0.05 * 8 + 0.3, abs=1e-15)
    cfg = SGLDConfig(0.1, 2, 1, four, prior=NormalPrior(0.0, 1.0))
    assert sgld_step(0.5, v, 0.0, cfg) == pytest.approx(0.5 + 0.05 * (8 - 0.5), abs=1e-15)


def test_forward_map_passes_aux(four):
    cfg = SGLDConfig(0.1, 1, 1, four)
    theta, r = forward_map(0.0, "aux", IndexVector(np.array([2]), 4), 0.0, cfg)
    assert r == "aux" and theta == pytest.approx(0.1 * 0.5 * 4 * 2)


def test_minibatch_drift_unbiased():
    d = data(50, seed=2)
    cfg = SGLDConfig(0.02, 5, 1, d)
    rng = np.random.default_rng(1)
    theta = 0.3
    vals = np.array([sgld_step(theta, cfg.measure.sample(rng), 0.0, cfg) for _ in range(40_000)])
    full = theta + 0.01 * (d.total_S - d.n * theta)
    assert abs(vals.mean() - full) <= 4 * vals.std(ddof=1) / math.sqrt(vals.size)


def test_validation(four):
    with pytest.raises(ValueError):
        SGLDConfig(-1.0, 1, 1, four)
    with pytest.raises(ValueError):
        SGLDConfig(0.1, 0, 1, four)
    with pytest.raises(ValueError):
        SGLDConfig(0.1, 2, 1, four, measure=DrivingMeasure.uniform(4, 3))
    with pytest.raises(ValueError):
        SGLDConfig(0.1, 2, 1, four, noise="bogus")


def test_zero_horizon(four):
    tr = run_chain(SGLDConfig(0.1, 2, 0, four, initial=1.5), 3)
    assert tr.states.tolist() == [1.5] and tr.horizon == 0


def test_determinism_and_seed_record(four):
    cfg = SGLDConfig(0.1, 2, 20, four)
    a = run_chain(cfg, make_stream(7, 1, 2))
    b = run_chain(cfg, make_stream(7, 1, 2))
    c = run_chain(cfg, make_stream(7, 1, 3))
    assert np.array_equal(a.states, b.states)
    assert not np.array_equal(a.states, c.states)
    assert a.seed_record == {"master_seed": 7, "stream": [1, 2]}


@pytest.mark.parametrize("noise,eps,var", [("sqrt_eps", 0.5, 0.5 / (1 - 0.75**2)), ("literal", 0.5, 1 / (1 - 0.75**2))])
def test_full_batch_stationary_law(noise, eps, var):
    # n = 1 makes every minibatch the full data: an AR(1) with known law
    d = dataset_from_observations(MODEL, [0.8])
    cfg = SGLDConfig(eps, 1, 40, d, initial=0.0, noise=noise)
    x = np.array(run_replicates(cfg, 4000, 11))
    assert abs(x.mean() - 0.8) <= 4 * math.sqrt(var / x.size)
    assert x.var(ddof=1) == pytest.approx(var, rel=0.1)


def test_ula_sanity_sqrt_eps():
    n = 100
    d = data(n, seed=3)
    cfg = SGLDConfig(1.0 / n, n, 10_000, d, initial=0.0, noise="sqrt_eps")
    x = run_chain(cfg, 5).states[1000:]
    post = posterior_exact(d)
    assert abs(x.mean() - post.mean) < 0.05
    # ULA inflates variance by 1 / (1 - eps n / 4); minibatching adds a little more
    assert 0.8 * post.variance < x.var() < 2.0 * post.variance


def test_coupled_zero_delta(four):
    cfg = SGLDConfig(0.1, 2, 30, four)
    run = run_coupled(cfg, 0.0, 4)
    assert run.first_divergence is None
    assert np.array_equal(run.chain_mu.states, run.chain_nu.states)


def test_coupled_prefix_identity():
    d = data(20, seed=1)
    cfg = SGLDConfig(0.05, 3, 50, d)
    rng = np.random.default_rng(2)
    for _ in range(50):
        run = run_coupled(cfg, 0.2, rng)
        k = run.first_divergence
        if k is None:
            assert np.array_equal(run.chain_mu.states, run.chain_nu.states)
        else:
            assert np.array_equal(run.chain_mu.states[:k], run.chain_nu.states[:k])


def test_coupled_agreement_rate():
    d = data(20, seed=1)
    cfg = SGLDConfig(0.05, 2, 5, d)
    rng = np.random.default_rng(6)
    N = 4000
    agree = sum(run_coupled(cfg, 0.05, rng).first_divergence is None for _ in range(N))
    bound = 0.95**10
    assert agree / N >= bound - 4 * math.sqrt(bound * (1 - bound) / N)


def test_run_coupled_rejects_perturbed_config():
    d = data(10)
    cfg = SGLDConfig(0.1, 2, 3, d, measure=DrivingMeasure.perturbed(10, 2, 0.1))
    with pytest.raises(ValueError):
        run_coupled(cfg, 0.1, 0)


def test_replicates_deterministic_and_thread_invariant():
    d = data(30)
    cfg = SGLDConfig(0.03, 3, 15, d)
    a = run_replicates(cfg, 40, 9)
    assert a == run_replicates(cfg, 40, 9, threads=4)
    assert a[5] == float(run_chain(cfg, make_stream(9, 5)).states[-1])
    with pytest.raises(ValueError):
        run_replicates(cfg, 0, 9)


def test_different_seeds_same_law():
    d = data(30)
    cfg = SGLDConfig(0.03, 3, 15, d)
    a = run_replicates(cfg, 800, 1)
    b = run_replicates(cfg, 800, 2)
    assert a != b
    assert stats.ks_2samp(a, b).pvalue > 1e-3


def test_one_step_moments():
    d = data(40, seed=4)
    cfg = SGLDConfig(0.02, 4, 1, d, initial=0.5)
    x = np.array(run_replicates(cfg, 6000, 3))
    rv = d.suff_values
    # mean and variance of theta + (eps/2)(n/M) sum (r_E - theta) + U
    c = 0.5 * 0.02 * 40 / 4
    mean = 0.5 + c * 4 * (rv.mean() - 0.5)
    var = c * c * 4 * rv.var() + 1.0
    assert abs(x.mean() - mean) <= 4 * math.sqrt(var / x.size)
    assert x.var(ddof=1) == pytest.approx(var, rel=0.08)


# --- batch path ---------------------------------------------------------------


def _batch_cfg(n=40, M=3, T=6, seed=0):
    return SGLDConfig(1.0 / n, M, T, data(n, seed=seed))


@pytest.mark.parametrize("coupling", ["maximal", "coordinate"])
def test_batch_marginals_match_reference(coupling):
    cfg = _batch_cfg()
    delta = 0.3
    res = simulate_coupled_batch(cfg, delta, 3000, np.random.default_rng(1), coupling=coupling)
    ref_mu = run_replicates(cfg, 1500, 21)
    ref_nu = run_replicates(cfg.with_measure(DrivingMeasure.perturbed(40, 3, delta)), 1500, 22)
    assert stats.ks_2samp(res.theta_mu, ref_mu).pvalue > 1e-3
    assert stats.ks_2samp(res.theta_nu, ref_nu).pvalue > 1e-3


def test_batch_agreement_rates():
    cfg = _batch_cfg(n=100, M=5, T=4)
    delta, N = 0.02, 40_000
    res = simulate_coupled_batch(cfg, delta, N, np.random.default_rng(2), coupling="maximal")
    best = 1 - tv_exact_measures(100, 20, delta).value
    assert abs(res.agree.mean() - best) <= 4 * math.sqrt(best * (1 - best) / N)
    assert np.array_equal(res.theta_mu[res.agree], res.theta_nu[res.agree])
    res = simulate_coupled_batch(cfg, delta, N, np.random.default_rng(3), coupling="coordinate")
    low = (1 - delta) ** 20
    assert abs(res.agree.mean() - low) <= 4 * math.sqrt(low * (1 - low) / N)
    assert best > low


def test_batch_zero_delta_identical():
    res = simulate_coupled_batch(_batch_cfg(), 0.0, 200, np.random.default_rng(0))
    assert res.agree.all() and np.array_equal(res.theta_mu, res.theta_nu)


def test_batch_records_paths():
    cfg = _batch_cfg(T=10)
    res = simulate_coupled_batch(cfg, 0.1, 50, np.random.default_rng(0), record=3, stride=5)
    assert res.times.tolist() == [0, 5, 10]
    assert res.paths_mu.shape == (3, 3)
    assert np.array_equal(res.paths_mu[:, -1], res.theta_mu[:3])


def test_batch_rejects_unknown_coupling():
    with pytest.raises(ValueError):
        simulate_coupled_batch(_batch_cfg(), 0.1, 5, np.random.default_rng(0), coupling="nope")
