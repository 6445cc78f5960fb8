import math

import numpy as np
import numpy.testing as npt
import pytest
import scipy.stats

from hybridtvp.errors import InvalidParameters
from hybridtvp.priors import HyperParams
from hybridtvp.sv import (
    LOG_OFFSET,
    MixtureTable,
    VolatilityState,
    build_path_precision,
    default_mixture,
    sample_h0,
    sample_mixture_components,
    sample_path_given_components,
    sample_sigma2_h,
    sample_volatility_path,
    transform_residuals,
)


def batch_means_se(chain, n_batches=40):
    chain = np.asarray(chain)
    usable = (chain.size // n_batches) * n_batches
    means = chain[:usable].reshape(n_batches, -1).mean(axis=1)
    return means.std(ddof=1) / math.sqrt(n_batches)


# --- mixture table ----------------------------------------------------------

def test_default_mixture_moments():
    table = default_mixture()
    assert table.weights.sum() == pytest.approx(1.0, abs=1e-12)
    mean = table.weights @ table.means
    var = table.weights @ (table.variances + table.means ** 2) - mean ** 2
    assert abs(mean + 1.2704) < 0.05
    assert abs(var - math.pi ** 2 / 2.0) < 0.1


def test_mixture_table_rejects_bad_transcription():
    good = default_mixture()
    with pytest.raises(InvalidParameters):
        MixtureTable(good.weights * 1.5, good.means, good.variances)
    with pytest.raises(InvalidParameters):
        MixtureTable(good.weights, good.means + 3.0, good.variances)
    with pytest.raises(InvalidParameters):
        MixtureTable(good.weights, good.means, good.variances * 5.0)


def test_transform_guards_zero_residual():
    ystar = transform_residuals(np.array([0.0, 1.0]))
    assert ystar[0] == pytest.approx(math.log(LOG_OFFSET))
    assert ystar[1] == pytest.approx(math.log(1.0 + LOG_OFFSET))


# --- path sampling ----------------------------------------------------------

def test_path_precision_matches_dense_construction():
    v = np.array([0.3, 1.7, 0.9, 2.2])
    sigma2_h = 0.25
    K = build_path_precision(v, sigma2_h)
    hh = np.array([
        [2.0, -1.0, 0.0, 0.0],
        [-1.0, 2.0, -1.0, 0.0],
        [0.0, -1.0, 2.0, -1.0],
        [0.0, 0.0, -1.0, 1.0],
    ])
    dense = hh / sigma2_h + np.diag(1.0 / v)
    assert np.abs(K.to_dense() - dense).max() < 1e-10


def test_constant_variance_recovery():
    # eps_t ~ N(0, e^{1.5}); with a tight random walk the fitted level of h
    # should recover 1.5 everywhere
    rng = np.random.default_rng(0)
    t = 2_000
    eps = rng.normal(0.0, math.exp(0.75), t)
    table = default_mixture()
    hp = HyperParams()
    # tight sigma2_h pins the level to h0, so start at the data-implied level
    level = math.log(np.mean(eps ** 2))
    state = VolatilityState(np.full(t, level), level, 1e-6)
    kept = []
    for sweep in range(400):
        h = sample_volatility_path(eps, state, table, rng)
        h0 = sample_h0(h[0], hp, state.sigma2_h, rng)
        state = VolatilityState(h, h0, 1e-6)
        if sweep >= 100:
            kept.append(h)
    post_mean = np.mean(kept, axis=0)
    assert np.abs(post_mean - 1.5).max() < 0.15


def test_path_draw_matches_dense_conditional_oracle():
    rng = np.random.default_rng(1)
    table = default_mixture()
    ystar = np.array([-1.0, 0.5, -2.5])
    comps = np.array([4, 6, 5])
    state = VolatilityState(np.zeros(3), h0=0.3, sigma2_h=0.8)
    v = table.variances[comps]
    dense_k = build_path_precision(v, state.sigma2_h).to_dense()
    b = (ystar - table.means[comps]) / v
    b[0] += state.h0 / state.sigma2_h
    mean = np.linalg.solve(dense_k, b)
    cov = np.linalg.inv(dense_k)
    draws = np.array([
        sample_path_given_components(ystar, comps, state, table, rng)
        for _ in range(100_000)
    ])
    npt.assert_allclose(draws.mean(axis=0), mean, atol=0.02)
    npt.assert_allclose(np.cov(draws.T), cov, atol=0.03)


def test_component_draws_hit_posterior_frequencies():
    rng = np.random.default_rng(2)
    table = default_mixture()
    ystar = np.array([0.4])
    h = np.array([0.0])
    resid = ystar[0] - h[0] - table.means
    logp = (np.log(table.weights) - 0.5 * np.log(table.variances)
            - 0.5 * resid ** 2 / table.variances)
    target = np.exp(logp - logp.max())
    target /= target.sum()
    counts = np.zeros(7)
    n = 200_000
    draws = np.array([
        sample_mixture_components(ystar, h, table, rng)[0] for _ in range(n)
    ])
    for j in range(7):
        counts[j] = (draws == j).mean()
    npt.assert_allclose(counts, target, atol=0.005)


# --- sigma2_h and h0 conditionals --------------------------------------------

def test_sigma2_flat_path_moment():
    rng = np.random.default_rng(3)
    hp = HyperParams()
    h = np.full(10, 1.3)
    draws = np.array([sample_sigma2_h(h, 1.3, hp, rng) for _ in range(100_000)])
    target = hp.S_h / (hp.nu_h + 5.0 - 1.0)
    assert abs(draws.mean() - target) < 0.02 * target


def test_sigma2_single_step_distribution():
    rng = np.random.default_rng(4)
    hp = HyperParams()
    h0 = 0.7
    draws = np.array([
        sample_sigma2_h(np.array([h0 + 2.0]), h0, hp, rng) for _ in range(100_000)
    ])
    # IG(nu_h + 1/2, S_h + 2)
    stat = scipy.stats.kstest(
        draws, scipy.stats.invgamma(hp.nu_h + 0.5, scale=hp.S_h + 2.0).cdf).statistic
    assert stat < 0.01


def test_sigma2_ks_against_quadrature_density():
    rng = np.random.default_rng(5)
    hp = HyperParams()
    h = np.array([0.1, -0.4, 0.3, 0.2])
    h0 = 0.0
    sq = np.diff(h, prepend=h0) @ np.diff(h, prepend=h0)
    nu, scale = hp.nu_h + 2.0, hp.S_h + 0.5 * sq
    grid = np.geomspace(1e-4, 50.0, 40_001)
    dens = np.exp(-(nu + 1) * np.log(grid) - scale / grid)
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(grid))])
    cdf /= cdf[-1]
    draws = np.array([sample_sigma2_h(h, h0, hp, rng) for _ in range(100_000)])
    stat = scipy.stats.kstest(draws, lambda x: np.interp(x, grid, cdf)).statistic
    assert stat < 0.01


def test_h0_flat_prior_limit():
    rng = np.random.default_rng(6)
    hp = HyperParams(V_h0=1e12)
    draws = np.array([sample_h0(5.0, hp, 2.0, rng) for _ in range(20_000)])
    assert abs(draws.mean() - 5.0) < 0.05


def test_h0_two_precision_average():
    rng = np.random.default_rng(7)
    hp = HyperParams(a_h0=0.0, V_h0=10.0)
    draws = np.array([sample_h0(5.0, hp, 10.0, rng) for _ in range(100_000)])
    assert abs(draws.mean() - 2.5) < 0.02 * 2.5
    assert abs(draws.var() - 5.0) < 0.02 * 5.0


def test_h0_moments_match_analytic():
    rng = np.random.default_rng(8)
    hp = HyperParams(a_h0=-1.0, V_h0=3.0)
    sigma2_h = 0.4
    prec = 1.0 / 3.0 + 1.0 / 0.4
    mean = (-1.0 / 3.0 + 2.0 / 0.4) / prec
    draws = np.array([sample_h0(2.0, hp, sigma2_h, rng) for _ in range(100_000)])
    assert abs(draws.mean() - mean) < 0.02 * abs(mean)
    assert abs(draws.var() - 1.0 / prec) < 0.02 / prec


# --- joint invariance (successive-conditional simulator) ---------------------

def test_sv_block_geweke_prior_moments():
    rng = np.random.default_rng(9)
    hp = HyperParams()
    table = default_mixture()
    t = 8
    n_sweeps = 60_000

    sigma2_h = 1.0 / rng.gamma(hp.nu_h, 1.0 / hp.S_h)
    h0 = hp.a_h0 + math.sqrt(hp.V_h0) * rng.standard_normal()
    h = h0 + math.sqrt(sigma2_h) * np.cumsum(rng.standard_normal(t))

    sig_chain = np.empty(n_sweeps)
    h0_chain = np.empty(n_sweeps)
    ht_chain = np.empty(n_sweeps)
    for s in range(n_sweeps):
        eps = np.exp(0.5 * h) * rng.standard_normal(t)
        state = VolatilityState(h, h0, sigma2_h)
        h = sample_volatility_path(eps, state, table, rng)
        sigma2_h = sample_sigma2_h(h, h0, hp, rng)
        h0 = sample_h0(h[0], hp, sigma2_h, rng)
        sig_chain[s] = sigma2_h
        h0_chain[s] = h0
        ht_chain[s] = h[-1]

    checks = [
        (sig_chain, hp.S_h / (hp.nu_h - 1.0)),           # E sigma2_h
        (h0_chain, hp.a_h0),                              # E h0
        (h0_chain ** 2, hp.V_h0),                         # E h0^2
        (ht_chain, hp.a_h0),                              # E h_T
        (ht_chain ** 2, hp.V_h0 + t * hp.S_h / (hp.nu_h - 1.0)),  # E h_T^2
    ]
    for chain, target in checks:
        se = batch_means_se(chain)
        assert abs(chain.mean() - target) < 3.0 * se, (chain.mean(), target, se)
