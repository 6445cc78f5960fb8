import itertools
import math

import numpy as np
import pytest
from scipy.stats import multivariate_normal, norm, qmc

from hybridtvp.errors import DimensionMismatch, EmptyDraws, InvalidParameters
from hybridtvp.model_compare import (
    GammaConfig,
    compare_table,
    log_bayes_factor,
    log_bayes_factor_unrestricted_vs,
    log_posterior_gamma,
    log_prior_gamma,
    preset_configs,
)
from hybridtvp.priors import HyperParams
from hybridtvp.sampler import (
    IndicatorPair,
    PosteriorDraws,
    SamplerConfig,
    build_layouts,
    build_Z,
    run_mcmc,
)


def all_configs(n):
    for bits in itertools.product((0, 1), repeat=2 * n - 1):
        yield GammaConfig(np.array(bits))


def hand_draws(layouts, rows, p=1):
    """Assemble a PosteriorDraws directly from per-draw dicts."""
    n = len(layouts)
    t = layouts[0].T
    k = [lay.k_theta for lay in layouts]
    arrays = {
        "theta0": np.array([np.concatenate(r["theta0"]) for r in rows]),
        "scale_roots": np.array([np.concatenate(r["scale_roots"]) for r in rows]),
        "h": np.array([np.concatenate(r["h"]) for r in rows]),
        "h0": np.array([r.get("h0", [0.0] * n) for r in rows]),
        "sigma2_h": np.array([r.get("sigma2_h", [0.1] * n) for r in rows]),
        "p_beta": np.array([r["p_beta"] for r in rows]),
        "p_alpha": np.array([r.get("p_alpha", [0.5] * (n - 1)) for r in rows]),
    }
    meta = {"n": n, "T": t, "p": p, "k_theta": k, "retained": len(rows),
            "truncated": False, "seed": 0, "format": "bin",
            "config": {"hyper": dict(HyperParams().__dict__)}}
    return PosteriorDraws(meta, arrays)


# --- prior ordinates -----------------------------------------------------------


def test_prior_ordinate_symmetric_default():
    hp = HyperParams()
    for config in all_configs(2):
        assert log_prior_gamma(config, hp) == pytest.approx(math.log(1 / 8),
                                                            abs=1e-12)


def test_prior_ordinate_uniform_prior_factor():
    hp = HyperParams(a_pbeta=1.0, b_pbeta=1.0)
    assert log_prior_gamma(GammaConfig([1]), hp) == pytest.approx(
        math.log(0.5), abs=1e-12)
    assert log_prior_gamma(GammaConfig([0]), hp) == pytest.approx(
        math.log(0.5), abs=1e-12)


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_prior_ordinates_partition_unity(n):
    for hp in (HyperParams(),
               HyperParams(a_pbeta=2.0, b_pbeta=0.7, a_palpha=0.3, b_palpha=1.4)):
        total = sum(math.exp(log_prior_gamma(c, hp)) for c in all_configs(n))
        assert total == pytest.approx(1.0, abs=1e-12)


def test_gamma_config_presets_and_validation():
    c = GammaConfig.preset(0, 1, 3)
    np.testing.assert_array_equal(c.flat, [0, 0, 1, 0, 1])
    assert c.name == "HYB-(0,1)"
    assert [p.name for p in []] == []
    names = [cfg.name for cfg in preset_configs(2)]
    assert names == ["HYB-(0,0)", "HYB-(0,1)", "HYB-(1,0)", "HYB-(1,1)"]
    assert c.pairs()[0] == IndicatorPair(0)
    assert c.pairs()[2] == IndicatorPair(0, 1)
    with pytest.raises(DimensionMismatch):
        GammaConfig([0, 1])
    with pytest.raises(InvalidParameters):
        GammaConfig([0, 2, 1])


# --- posterior ordinates --------------------------------------------------------


def toy_run(seed=61, n=2, t_raw=14, draws=60):
    data = np.random.default_rng(seed).normal(size=(t_raw, n)) * 0.7
    out = run_mcmc(SamplerConfig(p=1, burn_in=10, draws=draws, seed=5), data)
    return data, build_layouts(data, 1), out


def test_posterior_ordinates_partition_unity():
    _, layouts, draws = toy_run()
    total = sum(math.exp(log_posterior_gamma(c, draws, layouts=layouts))
                for c in all_configs(2))
    assert total == pytest.approx(1.0, abs=1e-10)


def test_degenerate_success_probs_give_unit_ordinate():
    rng = np.random.default_rng(67)
    layouts = build_layouts(rng.normal(size=(7, 2)), 1)
    rows = [{"theta0": [np.zeros(3), np.zeros(4)],
             "scale_roots": [np.full(3, 0.2), np.full(4, 0.2)],
             "h": [np.zeros(6), np.zeros(6)],
             "p_beta": [1.0, 1.0], "p_alpha": [1.0]}]
    draws = hand_draws(layouts, rows)
    assert log_posterior_gamma(GammaConfig([1, 1, 1]), draws,
                               layouts=layouts) == 0.0
    # the complementary configuration has probability zero: infinite support
    # for the unrestricted model
    assert log_posterior_gamma(GammaConfig([0, 0, 0]), draws,
                               layouts=layouts) == -math.inf
    assert log_bayes_factor_unrestricted_vs(
        GammaConfig([0, 0, 0]), draws, layouts=layouts) == math.inf
    # 8 = lattice size: prior mass log(1/8) against a sure posterior
    assert log_bayes_factor_unrestricted_vs(
        GammaConfig([1, 1, 1]), draws, layouts=layouts) == pytest.approx(
        math.log(1 / 8), abs=1e-12)


def test_single_equation_enumeration_oracle():
    rng = np.random.default_rng(71)
    data = rng.normal(size=(15, 1)) * 0.8
    layouts = build_layouts(data, 1)
    out = run_mcmc(SamplerConfig(p=1, burn_in=5, draws=40, seed=13), data)
    lay = layouts[0]
    t = lay.T

    def dense_loglik(pair, theta0, roots, h):
        cov = np.diag(np.exp(h))
        z = build_Z(lay, pair, roots)
        if z.active.size:
            hd = np.eye(t * z.active.size) - np.eye(t * z.active.size,
                                                    k=-z.active.size)
            prior_cov = np.linalg.inv(hd.T @ hd)
            rows = z.rows[:, z.active]
            zd = np.zeros((t, t * z.active.size))
            for s in range(t):
                zd[s, s * z.active.size:(s + 1) * z.active.size] = rows[s]
            cov = cov + zd @ prior_cov @ zd.T
        return multivariate_normal.logpdf(lay.y, lay.X @ theta0, cov)

    offs = out.theta_offsets()
    per_draw = []
    for r in range(out.n_draws):
        theta0 = out["theta0"][r, offs[0]:offs[1]]
        roots = out["scale_roots"][r, offs[0]:offs[1]]
        h = out["h"][r, :t]
        p = out["p_beta"][r, 0]
        m0 = math.exp(dense_loglik(IndicatorPair(0), theta0, roots, h))
        m1 = math.exp(dense_loglik(IndicatorPair(1), theta0, roots, h))
        per_draw.append((1 - p) * m0 / ((1 - p) * m0 + p * m1))
    want = math.log(np.mean(per_draw))
    got = log_posterior_gamma(GammaConfig([0]), out, layouts=layouts)
    assert got == pytest.approx(want, abs=1e-10)


def test_empty_draws_and_size_mismatch():
    rng = np.random.default_rng(73)
    layouts = build_layouts(rng.normal(size=(7, 2)), 1)
    draws = hand_draws(layouts, [{"theta0": [np.zeros(3), np.zeros(4)],
                                  "scale_roots": [np.zeros(3), np.zeros(4)],
                                  "h": [np.zeros(6), np.zeros(6)],
                                  "p_beta": [0.5, 0.5]}])
    draws.meta["retained"] = 0
    with pytest.raises(EmptyDraws):
        log_posterior_gamma(GammaConfig([1, 1, 1]), draws, layouts=layouts)
    draws.meta["retained"] = 1
    with pytest.raises(DimensionMismatch):
        log_posterior_gamma(GammaConfig([1]), draws, layouts=layouts)
    with pytest.raises(InvalidParameters):
        log_posterior_gamma(GammaConfig([1, 1, 1]), draws)


# --- Bayes factors ---------------------------------------------------------------


def test_antisymmetry_and_coherence():
    data, layouts, draws = toy_run(seed=79)
    c1 = GammaConfig.preset(0, 0, 2)
    c2 = GammaConfig.preset(1, 1, 2)
    ab = log_bayes_factor(c1, c2, draws, layouts=layouts)
    ba = log_bayes_factor(c2, c1, draws, layouts=layouts)
    assert ab == -ba
    u1 = log_bayes_factor_unrestricted_vs(c1, draws, layouts=layouts)
    u2 = log_bayes_factor_unrestricted_vs(c2, draws, layouts=layouts)
    assert ab == pytest.approx(u2 - u1, abs=1e-12)
    # data path resolves layouts equivalently
    assert log_bayes_factor(c1, c2, draws, data=data) == pytest.approx(
        ab, abs=1e-12)


def test_savage_dickey_against_conjugate_evidence():
    # one equation, fixed nuisance draw: the Savage-Dickey ratio between two
    # restrictions must equal the ratio of conjugate (states-integrated)
    # evidences; a scrambled-Sobol prior average gives a second, independent
    # estimate of the time-varying evidence
    rng = np.random.default_rng(83)
    data = rng.normal(size=(5, 1)) * 0.6
    layouts = build_layouts(data, 1)
    lay = layouts[0]
    t, k = lay.T, lay.k_theta
    theta0 = np.array([0.1, 0.3])
    roots = np.array([0.4, 0.25])
    h = np.full(t, -0.5)
    rows = [{"theta0": [theta0], "scale_roots": [roots], "h": [h],
             "p_beta": [0.5], "p_alpha": []}]
    draws = hand_draws(layouts, rows)

    def dense_evidence(pair):
        cov = np.diag(np.exp(h))
        z = build_Z(lay, pair, roots)
        if z.active.size:
            hd = np.eye(t * k) - np.eye(t * k, k=-k)
            zd = np.zeros((t, t * k))
            for s in range(t):
                zd[s, s * k:(s + 1) * k] = z.rows[s]
            cov = cov + zd @ np.linalg.inv(hd.T @ hd) @ zd.T
        return multivariate_normal.logpdf(lay.y, lay.X @ theta0, cov)

    m0 = dense_evidence(IndicatorPair(0))
    m1 = dense_evidence(IndicatorPair(1))
    got = log_bayes_factor(GammaConfig([0]), GammaConfig([1]), draws,
                           layouts=layouts)
    assert got == pytest.approx(m0 - m1, abs=1e-8)

    # quasi-Monte Carlo second path for the time-varying evidence
    sob = qmc.Sobol(d=t * k, scramble=True, seed=7)
    u = sob.random(2 ** 14)
    z = norm.ppf(np.clip(u, 1e-12, 1 - 1e-12))
    states = np.cumsum(z.reshape(-1, t, k), axis=1)
    loadings = build_Z(lay, IndicatorPair(1), roots).rows
    fitted = lay.X @ theta0 + np.einsum("tk,ntk->nt", loadings, states)
    logpdf = norm.logpdf(lay.y[None, :], fitted,
                         np.exp(0.5 * h)[None, :]).sum(axis=1)
    qmc_m1 = float(np.logaddexp.reduce(logpdf) - math.log(logpdf.size))
    assert abs(qmc_m1 - m1) < 0.05 * abs(m1)


def test_compare_table_rows():
    data, layouts, draws = toy_run(seed=89, draws=20)
    rows = compare_table(preset_configs(2), draws, layouts=layouts)
    assert [r[0] for r in rows] == ["HYB-(0,0)", "HYB-(0,1)",
                                    "HYB-(1,0)", "HYB-(1,1)"]
    for name, prior, post, bf in rows:
        assert bf == pytest.approx(prior - post, abs=1e-12)
        assert prior == pytest.approx(math.log(1 / 8), abs=1e-12)
