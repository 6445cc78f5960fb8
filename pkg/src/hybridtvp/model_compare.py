"""Savage-Dickey log Bayes factors over indicator configurations.

The Bayes factor of the unrestricted model against a fixed indicator
configuration c is the prior-over-posterior ordinate ratio at c.  The prior
ordinate has a closed Beta-Bernoulli form; posterior ordinates are
Rao-Blackwellized Monte Carlo averages of the per-equation indicator
conditionals over stored draws, reusing the same marginalized conditional the
sampler's joint indicator/state step computes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import DimensionMismatch, EmptyDraws, InvalidParameters
from .priors import HyperParams
from .sampler import (
    PosteriorDraws,
    build_layouts,
    indicator_log_posterior,
    pairs_from_flat,
)
from .sv import VolatilityState

PRESET_NAMES = ("HYB-(0,0)", "HYB-(0,1)", "HYB-(1,0)", "HYB-(1,1)")


@dataclass
class GammaConfig:
    """A full indicator configuration: 2n-1 slots ordered (eq1 beta, eq2 beta,
    eq2 alpha, eq3 beta, eq3 alpha, ...)."""
    flat: np.ndarray
    name: str = ""

    def __post_init__(self):
        self.flat = np.asarray(self.flat, dtype=np.int64)
        if self.flat.ndim != 1 or self.flat.size % 2 == 0:
            raise DimensionMismatch("need an odd number of indicator slots (2n-1)")
        if not np.all((self.flat == 0) | (self.flat == 1)):
            raise InvalidParameters("indicator slots must be 0 or 1")

    @property
    def n(self):
        return (self.flat.size + 1) // 2

    def pairs(self):
        return pairs_from_flat(self.flat, self.n)

    @classmethod
    def preset(cls, gamma_beta, gamma_alpha, n):
        """HYB-(b,a): every equation's beta slot = b, every alpha slot = a."""
        flat = [gamma_beta]
        for _ in range(1, n):
            flat.extend([gamma_beta, gamma_alpha])
        return cls(np.array(flat), name=f"HYB-({gamma_beta},{gamma_alpha})")


def preset_configs(n):
    return [GammaConfig.preset(b, a, n) for b, a in
            ((0, 0), (0, 1), (1, 0), (1, 1))]


def _beta_bernoulli_ordinate(gamma, a, b):
    # B(a+gamma, b+1-gamma) / B(a, b) collapses to a single ratio
    return a / (a + b) if gamma else b / (a + b)


def prior_gamma(config: GammaConfig, hp: HyperParams) -> float:
    """Exact prior ordinate: a product of Beta-Bernoulli factors, one per
    slot (equation 1 contributes only its beta factor).  Kept in probability
    space so that under the symmetric default prior the ordinates are dyadic
    and the lattice sums to one without rounding."""
    total = _beta_bernoulli_ordinate(config.flat[0], hp.a_pbeta, hp.b_pbeta)
    for i in range(1, config.n):
        total *= _beta_bernoulli_ordinate(config.flat[2 * i - 1],
                                          hp.a_pbeta, hp.b_pbeta)
        total *= _beta_bernoulli_ordinate(config.flat[2 * i],
                                          hp.a_palpha, hp.b_palpha)
    return total


def log_prior_gamma(config: GammaConfig, hp: HyperParams) -> float:
    return math.log(prior_gamma(config, hp))


def _resolve_layouts(draws, data, layouts):
    if layouts is None:
        if data is None:
            raise InvalidParameters("need either data or prebuilt layouts")
        layouts = build_layouts(data, draws.meta["p"])
    if len(layouts) != draws.meta["n"]:
        raise DimensionMismatch("layouts disagree with the stored draw dimensions")
    return layouts


def log_posterior_gamma(config: GammaConfig, draws: PosteriorDraws,
                        data=None, layouts=None) -> float:
    """Log of the Monte Carlo average over draws of the product across
    equations of P(gamma_i = c_i | y_i, h, scale roots, theta0, p's)."""
    r = draws.n_draws
    if r < 1:
        raise EmptyDraws("no retained draws to average over")
    layouts = _resolve_layouts(draws, data, layouts)
    if config.n != len(layouts):
        raise DimensionMismatch("configuration and model size disagree")
    t = draws.meta["T"]
    offs = draws.theta_offsets()
    want = config.pairs()
    per_draw = np.zeros(r)
    for rr in range(r):
        total = 0.0
        for i, lay in enumerate(layouts):
            vol = VolatilityState(draws["h"][rr, i * t:(i + 1) * t],
                                  float(draws["h0"][rr, i]),
                                  float(draws["sigma2_h"][rr, i]))
            theta0 = draws["theta0"][rr, offs[i]:offs[i + 1]]
            roots = draws["scale_roots"][rr, offs[i]:offs[i + 1]]
            p_beta = float(draws["p_beta"][rr, i])
            p_alpha = float(draws["p_alpha"][rr, i - 1]) if i >= 1 else None
            cand, logpost = indicator_log_posterior(lay, vol, roots, theta0,
                                                    p_beta, p_alpha)
            total += logpost[cand.index(want[i])]
        per_draw[rr] = total
    return float(logsumexp(per_draw) - math.log(r))


def log_bayes_factor_unrestricted_vs(config: GammaConfig, draws, data=None,
                                     layouts=None, hp=None) -> float:
    """log BF of the unrestricted hybrid model against the restriction
    gamma = c; positive favors the unrestricted model."""
    if hp is None:
        hp = HyperParams(**draws.meta["config"]["hyper"])
    return log_prior_gamma(config, hp) - log_posterior_gamma(
        config, draws, data=data, layouts=layouts)


def log_bayes_factor(c1: GammaConfig, c2: GammaConfig, draws, data=None,
                     layouts=None, hp=None) -> float:
    """log BF of restriction c1 against restriction c2, via the identity
    BF_{c1,c2} = BF_{u,c2} / BF_{u,c1}; positive favors c1.  With symmetric
    Beta priors the prior ordinates cancel and this reduces to the posterior
    ordinate ratio."""
    layouts = _resolve_layouts(draws, data, layouts)
    return (log_bayes_factor_unrestricted_vs(c2, draws, layouts=layouts, hp=hp)
            - log_bayes_factor_unrestricted_vs(c1, draws, layouts=layouts, hp=hp))


def compare_table(configs, draws, data=None, layouts=None, hp=None):
    """Rows of (name, log prior ordinate, log posterior ordinate, log BF of
    the unrestricted model against the config) — the `compare` CSV payload."""
    if hp is None:
        hp = HyperParams(**draws.meta["config"]["hyper"])
    layouts = _resolve_layouts(draws, data, layouts)
    rows = []
    for config in configs:
        prior = log_prior_gamma(config, hp)
        post = log_posterior_gamma(config, draws, layouts=layouts)
        name = config.name or ",".join(str(v) for v in config.flat)
        rows.append((name, prior, post, prior - post))
    return rows
