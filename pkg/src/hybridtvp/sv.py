"""Stochastic-volatility block: auxiliary-mixture sampling of log-volatility
paths, plus the innovation-variance and initial-condition conditionals."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .band_linalg import (
    BandSymmetricMatrix,
    DifferenceOperator,
    band_cholesky,
    gram_of_difference,
)
from .errors import DimensionMismatch, InvalidParameters
from .priors import HyperParams, sample_invgamma

# guard against log(0) when a residual is exactly zero
LOG_OFFSET = 1e-4

# 7-component normal mixture for the log chi^2_1 measurement error
# (mean -1.2704, variance pi^2/2).  Component means are stored already
# shifted by -1.2704.
_WEIGHTS = (0.00730, 0.10556, 0.00002, 0.04395, 0.34001, 0.24566, 0.25750)
_RAW_MEANS = (-10.12999, -3.97281, -8.56686, 2.77786, 0.61942, 1.79518, -1.08819)
_VARIANCES = (5.79596, 2.61369, 5.17950, 0.16735, 0.64009, 0.34023, 1.26261)


@dataclass
class VolatilityState:
    h: np.ndarray
    h0: float
    sigma2_h: float

    def __post_init__(self):
        self.h = np.asarray(self.h, dtype=np.float64)
        if not self.sigma2_h > 0:
            raise InvalidParameters("sigma2_h must be positive")
        if not np.all(np.isfinite(self.h)):
            raise InvalidParameters("h must be finite")


@dataclass
class MixtureTable:
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.means = np.asarray(self.means, dtype=np.float64)
        self.variances = np.asarray(self.variances, dtype=np.float64)
        if not (self.weights.shape == self.means.shape == self.variances.shape):
            raise DimensionMismatch("mixture component arrays must align")
        if np.any(self.weights <= 0) or abs(self.weights.sum() - 1.0) > 1e-9:
            raise InvalidParameters("mixture weights must be positive and sum to 1")
        if np.any(self.variances <= 0):
            raise InvalidParameters("mixture variances must be positive")
        mean = float(self.weights @ self.means)
        var = float(self.weights @ (self.variances + self.means ** 2) - mean ** 2)
        if abs(mean + 1.2704) > 0.05 or abs(var - math.pi ** 2 / 2.0) > 0.1:
            raise InvalidParameters(
                "mixture does not approximate the log chi^2_1 law "
                f"(mean {mean:.4f}, variance {var:.4f})")


def default_mixture() -> MixtureTable:
    means = np.array(_RAW_MEANS) - 1.2704
    return MixtureTable(np.array(_WEIGHTS), means, np.array(_VARIANCES))


def transform_residuals(residuals):
    """y*_t = log(eps_t^2 + offset)."""
    eps = np.asarray(residuals, dtype=np.float64)
    return np.log(eps ** 2 + LOG_OFFSET)


def sample_mixture_components(ystar, h, table: MixtureTable, rng):
    """Exact draw of the per-period component indicators, conditionally
    independent given h."""
    resid = ystar[:, None] - h[:, None] - table.means[None, :]
    logp = (np.log(table.weights) - 0.5 * np.log(table.variances)
            - 0.5 * resid ** 2 / table.variances)
    logp -= logp.max(axis=1, keepdims=True)
    prob = np.exp(logp)
    cum = np.cumsum(prob, axis=1)
    u = rng.uniform(size=(ystar.size, 1)) * cum[:, -1:]
    return np.minimum((cum < u).sum(axis=1), table.weights.size - 1)


def build_path_precision(comp_variances, sigma2_h) -> BandSymmetricMatrix:
    """Tridiagonal precision H'H/sigma2_h + diag(1/v) of the h path given the
    mixture components (random-walk prior anchored at h0 plus observation)."""
    v = np.asarray(comp_variances, dtype=np.float64)
    horizon = v.size
    gram = gram_of_difference(DifferenceOperator(1, horizon))
    bands = gram.bands / sigma2_h
    bands[0] += 1.0 / v
    return BandSymmetricMatrix(horizon, gram.bandwidth, bands)


def sample_path_given_components(ystar, comps, state: VolatilityState,
                                 table: MixtureTable, rng):
    """Joint Gaussian draw of the full h path given component indicators."""
    v = table.variances[comps]
    K = build_path_precision(v, state.sigma2_h)
    b = (ystar - table.means[comps]) / v
    b[0] += state.h0 / state.sigma2_h
    chol = band_cholesky(K)
    mean = chol.solve(b)
    return mean + chol.solve_lower_t(rng.standard_normal(ystar.size))


def sample_volatility_path(residuals, state: VolatilityState,
                           table: MixtureTable, rng):
    """One sweep of the auxiliary-mixture device: transform residuals, draw
    component indicators given the current h, then draw the new h path."""
    eps = np.asarray(residuals, dtype=np.float64)
    if eps.shape != state.h.shape:
        raise DimensionMismatch(
            f"residual length {eps.shape} != h length {state.h.shape}")
    ystar = transform_residuals(eps)
    comps = sample_mixture_components(ystar, state.h, table, rng)
    return sample_path_given_components(ystar, comps, state, table, rng)


def sample_sigma2_h(h, h0, hp: HyperParams, rng):
    """IG(nu_h + T/2, S_h + sum of squared increments / 2)."""
    h = np.asarray(h, dtype=np.float64)
    diffs = np.diff(h, prepend=h0)
    return sample_invgamma(hp.nu_h + h.size / 2.0,
                           hp.S_h + 0.5 * float(diffs @ diffs), rng)


def sample_h0(h1, hp: HyperParams, sigma2_h, rng):
    """Normal draw with precision 1/V_h0 + 1/sigma2_h."""
    prec = 1.0 / hp.V_h0 + 1.0 / sigma2_h
    mean = (hp.a_h0 / hp.V_h0 + h1 / sigma2_h) / prec
    return mean + rng.standard_normal() / math.sqrt(prec)
