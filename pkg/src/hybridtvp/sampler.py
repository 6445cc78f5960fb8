"""Equation-by-equation Gibbs sampler for the hybrid TVP-VAR.

The structural form is estimated as n unrelated regressions.  Equation i
(1-based) regresses y_{i,t} on xtilde_t = (1, y'_{t-1}, ..., y'_{t-p}) and on
the negated contemporaneous values wtilde_{i,t} = (-y_{1,t}, ..., -y_{i-1,t}),
with a per-equation pair of inclusion indicators choosing between constant and
time-varying coefficient blocks.  States are carried in non-centered form:
time variation enters through signed scale roots multiplying standardized
random-walk states anchored at zero, so an indicator of zero removes the block
exactly and the scale roots keep Gaussian (sign-unidentified) conditionals.

A sweep updates, per equation: (1) the indicator pair jointly with the full
state path, with the states integrated out analytically via the banded
precision factorization; (2) the log-volatility path by the auxiliary-mixture
device; (3) the initial coefficients jointly with the scale roots; (4)-(5) the
volatility innovation variance and initial level; (6) the inclusion
probabilities; then globally (7) the shrinkage scales of the Minnesota prior.
"""
from __future__ import annotations

import hashlib
import json
import math
import os
import warnings
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.special import logsumexp

from .band_linalg import (
    BandSymmetricMatrix,
    DifferenceOperator,
    band_cholesky,
    gram_of_difference,
)
from .data_io import Dataset
from .errors import (
    DimensionMismatch,
    InsufficientData,
    InvalidParameters,
    NotPositiveDefinite,
)
from .priors import (
    HyperParams,
    MinnesotaCov,
    minnesota_covariance,
    residual_variances,
    sample_kappa,
)
from .sv import (
    MixtureTable,
    VolatilityState,
    default_mixture,
    sample_h0,
    sample_sigma2_h,
    sample_volatility_path,
)

LOG2PI = math.log(2.0 * math.pi)
PROB_FLOOR = 1e-300
STATIONARITY_RETRIES = 100


# --- layouts and state ------------------------------------------------------

@dataclass
class EquationLayout:
    index: int
    y: np.ndarray
    X: np.ndarray
    xtilde: np.ndarray
    wtilde: np.ndarray

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=np.float64)
        self.X = np.asarray(self.X, dtype=np.float64)
        self.xtilde = np.asarray(self.xtilde, dtype=np.float64)
        self.wtilde = np.asarray(self.wtilde, dtype=np.float64)
        if self.wtilde.shape[1] != self.index - 1:
            raise DimensionMismatch(
                f"equation {self.index} needs {self.index - 1} contemporaneous "
                f"columns, got {self.wtilde.shape[1]}")
        if self.X.shape[1] != self.k_theta:
            raise DimensionMismatch("X must stack xtilde and wtilde columns")

    @property
    def T(self):
        return self.y.size

    @property
    def k_beta(self):
        return self.xtilde.shape[1]

    @property
    def k_alpha(self):
        return self.wtilde.shape[1]

    @property
    def k_theta(self):
        return self.k_beta + self.k_alpha


@dataclass
class IndicatorPair:
    gamma_beta: int
    gamma_alpha: int | None = None

    def __post_init__(self):
        if self.gamma_beta not in (0, 1):
            raise InvalidParameters("gamma_beta must be 0 or 1")
        if self.gamma_alpha not in (0, 1, None):
            raise InvalidParameters("gamma_alpha must be 0, 1, or absent")


@dataclass
class EquationState:
    indicators: IndicatorPair
    theta_tilde: np.ndarray
    theta0: np.ndarray
    scale_roots: np.ndarray
    vol: VolatilityState
    p_beta: float
    p_alpha: float | None
    k_beta: int

    def __post_init__(self):
        self.theta_tilde = np.asarray(self.theta_tilde, dtype=np.float64)
        self.theta0 = np.asarray(self.theta0, dtype=np.float64)
        self.scale_roots = np.asarray(self.scale_roots, dtype=np.float64)
        k = self.theta0.size
        if self.theta_tilde.ndim != 2 or self.theta_tilde.shape[1] != k \
                or self.scale_roots.size != k:
            raise DimensionMismatch("state arrays must share the coefficient dimension")
        if self.vol.h.size != self.theta_tilde.shape[0]:
            raise DimensionMismatch("volatility path must have one entry per observation")
        if not 0 < self.k_beta <= k:
            raise DimensionMismatch("k_beta must split the coefficient vector")
        if not 0.0 < self.p_beta < 1.0:
            raise InvalidParameters("p_beta must lie in (0, 1)")
        if (self.indicators.gamma_alpha is None) != (self.p_alpha is None):
            raise InvalidParameters("p_alpha must be present exactly when gamma_alpha is")
        if self.p_alpha is not None and not 0.0 < self.p_alpha < 1.0:
            raise InvalidParameters("p_alpha must lie in (0, 1)")
        if self.indicators.gamma_alpha is None and self.k_beta != k:
            raise DimensionMismatch("an equation without a contemporaneous block "
                                    "must have k_beta == k_theta")


@dataclass
class ModelState:
    equations: list
    kappa1: float
    kappa2: float

    def __post_init__(self):
        if not (self.kappa1 > 0 and self.kappa2 > 0):
            raise InvalidParameters("kappa scales must be positive")


@dataclass
class PriorSet:
    hp: HyperParams
    s2: np.ndarray
    mixture: MixtureTable = field(default_factory=default_mixture)
    indicator_clamp: list | None = None
    sigma2_h_clamp: float | None = None


def build_layouts(data, p):
    """Regressor matrices for the n unrelated regressions at lag order p; rows
    are the effective sample t = p+1 ... T_raw."""
    values = np.asarray(getattr(data, "values", data), dtype=np.float64)
    t_raw, n = values.shape
    if p < 0:
        raise InvalidParameters("lag order must be non-negative")
    if t_raw <= p:
        raise InsufficientData(f"{t_raw} rows cannot support {p} lags")
    t_eff = t_raw - p
    xtilde = np.ones((t_eff, n * p + 1))
    for lag in range(1, p + 1):
        xtilde[:, 1 + (lag - 1) * n:1 + lag * n] = values[p - lag:t_raw - lag, :]
    current = values[p:, :]
    layouts = []
    for i in range(1, n + 1):
        wtilde = -current[:, :i - 1]
        layouts.append(EquationLayout(i, current[:, i - 1],
                                      np.hstack([xtilde, wtilde]), xtilde, wtilde))
    return layouts


# --- step 1: indicators jointly with the state path -------------------------

@dataclass
class BlockLoadings:
    """Observation loadings on the stacked states: block-diagonal with the
    t-th block equal to row t of `rows`.  Never materialized densely in the
    sampler; `active` lists the columns kept alive by the indicators."""
    rows: np.ndarray
    active: np.ndarray

    def dense(self):
        t, k = self.rows.shape
        z = np.zeros((t, t * k))
        for s in range(t):
            z[s, s * k:(s + 1) * k] = self.rows[s]
        return z


def build_Z(layout: EquationLayout, indicators: IndicatorPair, scale_roots) -> BlockLoadings:
    gb = indicators.gamma_beta
    ga = indicators.gamma_alpha or 0
    rows = np.hstack([gb * layout.xtilde, ga * layout.wtilde]) * scale_roots[None, :]
    mask = np.zeros(layout.k_theta, dtype=bool)
    mask[:layout.k_beta] = bool(gb)
    mask[layout.k_beta:] = bool(ga)
    return BlockLoadings(rows, np.flatnonzero(mask))


@lru_cache(maxsize=64)
def _rw_gram_bands(block, horizon):
    gram = gram_of_difference(DifferenceOperator(block, horizon))
    bands = gram.bands
    bands.setflags(write=False)
    return bands


def _state_precision(rows, sig2) -> BandSymmetricMatrix:
    """K = H'H + Z' diag(1/sig2) Z for the stacked states, assembled in band
    storage; `rows` holds the per-period loading vectors."""
    t, k = rows.shape
    bands = _rw_gram_bands(k, t).copy()
    w = rows / np.sqrt(sig2)[:, None]
    for d in range(k):
        bands[d].reshape(t, k)[:, :k - d] += w[:, d:] * w[:, :k - d]
    return BandSymmetricMatrix(t * k, k, bands)


def _marginal_pieces(layout, vol, theta0):
    r = layout.y - layout.X @ theta0
    sig2 = np.exp(vol.h)
    base = float(vol.h.sum() + r @ (r / sig2))
    return r, sig2, base


def _log_marginal(layout, indicators, scale_roots, r, sig2, base):
    t = layout.T
    z = build_Z(layout, indicators, scale_roots)
    if z.active.size == 0:
        # no live state columns: the integral collapses to the Gaussian
        # likelihood of the residual under diag(exp h)
        return -0.5 * t * LOG2PI - 0.5 * base
    rows = z.rows[:, z.active]
    K = _state_precision(rows, sig2)
    zr = (rows * (r / sig2)[:, None]).ravel()
    chol = band_cholesky(K)
    theta_hat = chol.solve(zr)
    return (-0.5 * t * LOG2PI - 0.5 * chol.log_det()
            - 0.5 * (base - float(theta_hat @ zr)))


def log_marginal_given_gamma(layout, indicators, vol, scale_roots, theta0):
    """log p(y_i | gamma_i, h, scale roots, theta0): the states integrated out
    analytically through the band factorization."""
    r, sig2, base = _marginal_pieces(layout, vol, theta0)
    return _log_marginal(layout, indicators, scale_roots, r, sig2, base)


def _with_log(p):
    return math.log(p) if p > 0 else -math.inf


def indicator_log_posterior(layout, vol, scale_roots, theta0, p_beta, p_alpha):
    """Normalized log-probabilities of the admissible indicator pairs given
    everything but the states.  Equation 1 has a 2-point support over
    gamma_beta alone; other equations a 4-point support."""
    r, sig2, base = _marginal_pieces(layout, vol, theta0)
    lp, lq = _with_log(p_beta), _with_log(1.0 - p_beta)
    if layout.k_alpha == 0:
        pairs = [IndicatorPair(0), IndicatorPair(1)]
        prior = np.array([lq, lp])
    else:
        pairs = [IndicatorPair(0, 0), IndicatorPair(0, 1),
                 IndicatorPair(1, 0), IndicatorPair(1, 1)]
        la, lb = _with_log(p_alpha), _with_log(1.0 - p_alpha)
        prior = np.array([lq + lb, lq + la, lp + lb, lp + la])
    logp = prior + np.array([
        _log_marginal(layout, pair, scale_roots, r, sig2, base) for pair in pairs])
    return pairs, logp - logsumexp(logp)


def sample_indicators_and_states(layout, state: EquationState, rng, clamp=None):
    """Joint draw of (gamma_i, theta_tilde_i): the pair from its marginalized
    conditional (or a clamp), then the stacked states from N(theta_hat,
    K^{-1}) under the drawn pair.  State columns switched off by the pair are
    refreshed from their random-walk prior."""
    if clamp is not None:
        pair = clamp
    else:
        pairs, logpost = indicator_log_posterior(
            layout, state.vol, state.scale_roots, state.theta0,
            state.p_beta, state.p_alpha)
        probs = np.exp(logpost)
        probs[probs < PROB_FLOOR] = 0.0
        probs /= probs.sum()
        pair = pairs[int(np.searchsorted(np.cumsum(probs), rng.uniform()))]

    t, k = layout.T, layout.k_theta
    r, sig2, _ = _marginal_pieces(layout, state.vol, state.theta0)
    z = build_Z(layout, pair, state.scale_roots)
    theta_tilde = np.empty((t, k))
    act = z.active
    if act.size:
        rows = z.rows[:, act]
        K = _state_precision(rows, sig2)
        chol = band_cholesky(K)
        theta_hat = chol.solve((rows * (r / sig2)[:, None]).ravel())
        draw = theta_hat + chol.solve_lower_t(rng.standard_normal(K.dim))
        theta_tilde[:, act] = draw.reshape(t, act.size)
    inactive = np.setdiff1d(np.arange(k), act)
    if inactive.size:
        theta_tilde[:, inactive] = np.cumsum(
            rng.standard_normal((t, inactive.size)), axis=0)
    return pair, theta_tilde


# --- steps 3 and 6 -----------------------------------------------------------

def _step3_design(layout, state: EquationState):
    gb = state.indicators.gamma_beta
    ga = state.indicators.gamma_alpha or 0
    kb = layout.k_beta
    parts = [layout.X, gb * layout.xtilde * state.theta_tilde[:, :kb]]
    if layout.k_alpha:
        parts.append(ga * layout.wtilde * state.theta_tilde[:, kb:])
    return np.hstack(parts)


def theta0_posterior(layout, state, minnesota: MinnesotaCov, hp: HyperParams):
    """Gaussian full conditional of (theta0, scale_roots): posterior precision
    diag(1/v_prior) + W' Omega_h^{-1} W and matching mean."""
    i = layout.index
    k = layout.k_theta
    s_vec = np.full(k, hp.S_theta_var)
    s_vec[0] = hp.S_theta_int
    v_prior = np.concatenate([minnesota.v_theta0[i - 1], s_vec])
    w = _step3_design(layout, state)
    sig2 = np.exp(state.vol.h)
    wn = w / np.sqrt(sig2)[:, None]
    precision = np.diag(1.0 / v_prior) + wn.T @ wn
    b = w.T @ (layout.y / sig2)
    return precision, b


def sample_theta0_and_scales(layout, state, minnesota, hp, rng):
    precision, b = theta0_posterior(layout, state, minnesota, hp)
    try:
        low = cholesky(precision, lower=True)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite("initial-coefficient conditional is not "
                                  "positive definite") from exc
    mean = cho_solve((low, True), b)
    draw = mean + solve_triangular(low, rng.standard_normal(b.size),
                                   lower=True, trans="T")
    k = layout.k_theta
    return draw[:k], draw[k:]


def sample_success_probs(indicators: IndicatorPair, hp: HyperParams, rng):
    gb = indicators.gamma_beta
    p_beta = rng.beta(hp.a_pbeta + gb, hp.b_pbeta + 1 - gb)
    if indicators.gamma_alpha is None:
        return p_beta, None
    ga = indicators.gamma_alpha
    return p_beta, rng.beta(hp.a_palpha + ga, hp.b_palpha + 1 - ga)


# --- path recovery and fitted values -----------------------------------------

def recover_paths(state: EquationState):
    """Coefficient paths theta_t = theta0 + Gamma diag(scale_roots)
    theta_tilde_t, split into the lag and contemporaneous blocks; row t aligns
    with observation t (the t=0 anchor equals theta0)."""
    kb = state.k_beta
    gb = state.indicators.gamma_beta
    ga = state.indicators.gamma_alpha or 0
    scaled = state.theta_tilde * state.scale_roots[None, :]
    beta = state.theta0[None, :kb] + gb * scaled[:, :kb]
    alpha = state.theta0[None, kb:] + ga * scaled[:, kb:]
    return beta, alpha


def equation_fitted(layout, state: EquationState):
    """Conditional mean of y_i given the current equation draw."""
    z = build_Z(layout, state.indicators, state.scale_roots)
    return layout.X @ state.theta0 + np.einsum("tk,tk->t", z.rows, state.theta_tilde)


# --- one full sweep -----------------------------------------------------------

def _update_equation(layout, eq: EquationState, minnesota, priors: PriorSet, rng,
                     clamp=None):
    hp = priors.hp
    pair, theta_tilde = sample_indicators_and_states(layout, eq, rng, clamp=clamp)
    work = replace(eq, indicators=pair, theta_tilde=theta_tilde)
    resid = layout.y - equation_fitted(layout, work)
    h = sample_volatility_path(resid, eq.vol, priors.mixture, rng)
    work = replace(work, vol=VolatilityState(h, eq.vol.h0, eq.vol.sigma2_h))
    theta0, scale_roots = sample_theta0_and_scales(layout, work, minnesota, hp, rng)
    work = replace(work, theta0=theta0, scale_roots=scale_roots)
    if priors.sigma2_h_clamp is not None:
        sigma2_h = priors.sigma2_h_clamp
    else:
        sigma2_h = sample_sigma2_h(h, eq.vol.h0, hp, rng)
    h0 = sample_h0(h[0], hp, sigma2_h, rng)
    p_beta, p_alpha = sample_success_probs(pair, hp, rng)
    return replace(work, vol=VolatilityState(h, h0, sigma2_h),
                   p_beta=p_beta, p_alpha=p_alpha)


def _normalize_streams(rng, n):
    if isinstance(rng, (list, tuple)):
        if len(rng) != n + 1:
            raise DimensionMismatch(f"need {n + 1} streams (global + per equation)")
        return list(rng)
    return [rng] * (n + 1)


def gibbs_sweep(model: ModelState, layouts, priors: PriorSet, rng,
                order=None, pool=None) -> ModelState:
    """One full sweep; pure (returns a fresh ModelState).  `rng` is either a
    single generator, consumed sequentially, or a list of n+1 generators
    (global stream first, then one per equation) — required for worker-count
    invariance and update-order invariance."""
    n = len(layouts)
    if len(model.equations) != n:
        raise DimensionMismatch("model and layouts disagree on equation count")
    streams = _normalize_streams(rng, n)
    hp, s2 = priors.hp, priors.s2
    p = (layouts[0].k_beta - 1) // max(n, 1)
    minnesota = minnesota_covariance(model.kappa1, model.kappa2, hp, s2, n, p)

    def update(i):
        clamp = priors.indicator_clamp[i - 1] if priors.indicator_clamp else None
        return _update_equation(layouts[i - 1], model.equations[i - 1],
                                minnesota, priors, streams[i], clamp=clamp)

    sequence = list(order) if order is not None else list(range(1, n + 1))
    if sorted(sequence) != list(range(1, n + 1)):
        raise DimensionMismatch("order must permute the equation indices")
    new_eqs = [None] * n
    if pool is not None:
        for i, eq in zip(sequence, pool.map(update, sequence)):
            new_eqs[i - 1] = eq
    else:
        for i in sequence:
            new_eqs[i - 1] = update(i)
    kappa1, kappa2 = sample_kappa([eq.theta0 for eq in new_eqs],
                                  hp, s2, n, p, streams[0])
    return ModelState(new_eqs, kappa1, kappa2)


# --- stationarity diagnostic --------------------------------------------------

def max_companion_root(model: ModelState, layouts, p):
    """Largest reduced-form companion-matrix root modulus over the sample."""
    n = len(layouts)
    if p == 0:
        return 0.0
    t = layouts[0].T
    betas, alphas = zip(*(recover_paths(eq) for eq in model.equations))
    worst = 0.0
    for s in range(t):
        a = np.eye(n)
        for i in range(1, n):
            a[i, :i] = alphas[i][s]
        lag_coefs = np.vstack([betas[i][s, 1:1 + n * p] for i in range(n)])
        reduced = np.linalg.solve(a, lag_coefs)
        companion = np.zeros((n * p, n * p))
        for lag in range(p):
            companion[:n, lag * n:(lag + 1) * n] = reduced[:, lag * n:(lag + 1) * n]
        if p > 1:
            companion[n:, :n * (p - 1)] = np.eye(n * (p - 1))
        worst = max(worst, float(np.abs(np.linalg.eigvals(companion)).max()))
    return worst


# --- full runs and persistence -------------------------------------------------

@dataclass
class SamplerConfig:
    p: int = 2
    burn_in: int = 1000
    draws: int = 10000
    thin: int = 1
    warm_start: int = 100
    seed: int = 0
    workers: int = 1
    hyper: HyperParams = field(default_factory=HyperParams)
    indicator_clamp: list | None = None
    sigma2_h_clamp: float | None = None
    stationarity_check: bool = False
    store_theta_tilde: bool = False
    out_dir: str | None = None

    def __post_init__(self):
        if self.burn_in < 0 or self.draws < 1 or self.thin < 1:
            raise InvalidParameters("need burn_in >= 0, draws >= 1, thin >= 1")
        if self.warm_start < 0:
            raise InvalidParameters("warm_start must be >= 0")
        if self.workers < 1:
            raise InvalidParameters("workers must be >= 1")

    def to_dict(self):
        # out_dir is where results land, not what the run computes; keeping it
        # out of the persisted config makes identical runs byte-identical
        # regardless of destination
        out = {k: v for k, v in self.__dict__.items()
               if k not in ("hyper", "out_dir")}
        out["hyper"] = dict(self.hyper.__dict__)
        return out


def flat_from_pairs(pairs):
    """Indicator pairs -> flat vector ordered (eq1 beta, eq2 beta, eq2 alpha,
    eq3 beta, eq3 alpha, ...), 2n-1 slots."""
    flat = [pairs[0].gamma_beta]
    for pair in pairs[1:]:
        flat.extend([pair.gamma_beta, pair.gamma_alpha])
    return np.array(flat, dtype=np.float64)


def pairs_from_flat(flat, n):
    flat = [int(v) for v in flat]
    if len(flat) != 2 * n - 1:
        raise DimensionMismatch(f"need {2 * n - 1} indicator slots, got {len(flat)}")
    pairs = [IndicatorPair(flat[0])]
    for i in range(1, n):
        pairs.append(IndicatorPair(flat[2 * i - 1], flat[2 * i]))
    return pairs


def sweep_streams(seed, sweep, attempt, n):
    """Independent generators keyed by (seed, sweep, attempt, equation); index
    0 is the global stream for the shrinkage-scale step."""
    return [np.random.default_rng(
        np.random.SeedSequence(entropy=seed, spawn_key=(sweep, attempt, eq)))
        for eq in range(n + 1)]


def initial_state(layouts, s2, config: SamplerConfig) -> ModelState:
    """Deterministic chain start: coefficients at zero, volatilities at the
    per-series residual-variance level, hyperparameters at prior means."""
    hp = config.hyper
    clamp = (pairs_from_flat(config.indicator_clamp, len(layouts))
             if config.indicator_clamp is not None else None)
    sigma2 = config.sigma2_h_clamp if config.sigma2_h_clamp is not None \
        else hp.S_h / (hp.nu_h - 1.0)
    eqs = []
    for i, layout in enumerate(layouts, start=1):
        k = layout.k_theta
        level = math.log(s2[i - 1])
        pair = clamp[i - 1] if clamp else (
            IndicatorPair(1) if i == 1 else IndicatorPair(1, 1))
        p_alpha = None if i == 1 else hp.a_palpha / (hp.a_palpha + hp.b_palpha)
        eqs.append(EquationState(
            pair, np.zeros((layout.T, k)), np.zeros(k), np.zeros(k),
            VolatilityState(np.full(layout.T, level), level, sigma2),
            hp.a_pbeta / (hp.a_pbeta + hp.b_pbeta), p_alpha, layout.k_beta))
    return ModelState(eqs, hp.c11 / hp.c21, hp.c12 / hp.c22)


class PosteriorDraws:
    """Retained MCMC output: named draw matrices (one row per retained draw)
    plus reproducibility metadata.  Persisted as a directory of meta.json and
    per-parameter matrices, little-endian 64-bit floats in binary mode."""

    def __init__(self, meta, arrays):
        self.meta = meta
        self.arrays = arrays

    def __getitem__(self, name):
        return self.arrays[name]

    @property
    def n_draws(self):
        return self.meta["retained"]

    @property
    def n(self):
        return self.meta["n"]

    def theta_offsets(self):
        k = self.meta["k_theta"]
        return np.concatenate([[0], np.cumsum(k)])

    def save(self, path, fmt="bin"):
        if fmt not in ("bin", "csv"):
            raise InvalidParameters(f"unknown persistence format {fmt!r}")
        os.makedirs(path, exist_ok=True)
        meta = dict(self.meta)
        meta["format"] = fmt
        meta["arrays"] = {name: list(arr.shape) for name, arr in self.arrays.items()}
        for name, arr in self.arrays.items():
            if fmt == "bin":
                with open(os.path.join(path, name + ".bin"), "wb") as fh:
                    fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
            else:
                np.savetxt(os.path.join(path, name + ".csv"), arr,
                           delimiter=",", fmt="%.17g")
        with open(os.path.join(path, "meta.json"), "w") as fh:
            json.dump(meta, fh, indent=1, sort_keys=True)

    @classmethod
    def load(cls, path):
        with open(os.path.join(path, "meta.json")) as fh:
            meta = json.load(fh)
        fmt = meta["format"]
        arrays = {}
        for name, shape in meta["arrays"].items():
            if fmt == "bin":
                with open(os.path.join(path, name + ".bin"), "rb") as fh:
                    flat = np.frombuffer(fh.read(), dtype="<f8")
                arrays[name] = flat.reshape(shape).copy()
            else:
                arrays[name] = np.loadtxt(os.path.join(path, name + ".csv"),
                                          delimiter=",", ndmin=2).reshape(shape)
        return cls(meta, arrays)


def config_hash(config: SamplerConfig):
    text = json.dumps(config.to_dict(), sort_keys=True, default=str)
    return hashlib.sha256(text.encode()).hexdigest()


def _record_state(arrays, row, model: ModelState, store_tilde):
    eqs = model.equations
    arrays["gamma"][row] = flat_from_pairs([eq.indicators for eq in eqs])
    arrays["theta0"][row] = np.concatenate([eq.theta0 for eq in eqs])
    arrays["scale_roots"][row] = np.concatenate([eq.scale_roots for eq in eqs])
    lasts = []
    for eq in eqs:
        gb = eq.indicators.gamma_beta
        ga = eq.indicators.gamma_alpha or 0
        mask = np.concatenate([np.full(eq.k_beta, float(gb)),
                               np.full(eq.theta0.size - eq.k_beta, float(ga))])
        lasts.append(eq.theta0 + mask * eq.scale_roots * eq.theta_tilde[-1])
    arrays["theta_last"][row] = np.concatenate(lasts)
    arrays["h"][row] = np.concatenate([eq.vol.h for eq in eqs])
    arrays["h0"][row] = [eq.vol.h0 for eq in eqs]
    arrays["sigma2_h"][row] = [eq.vol.sigma2_h for eq in eqs]
    arrays["p_beta"][row] = [eq.p_beta for eq in eqs]
    arrays["p_alpha"][row] = [eq.p_alpha for eq in eqs[1:]]
    arrays["kappa"][row] = [model.kappa1, model.kappa2]
    if store_tilde:
        arrays["theta_tilde"][row] = np.concatenate(
            [eq.theta_tilde.ravel() for eq in eqs])


def run_mcmc(config: SamplerConfig, data) -> PosteriorDraws:
    """Burn-in plus thinned retention of gibbs_sweep output.  The first
    min(warm_start, burn_in) sweeps run with every selection indicator held
    at zero so the constant-fit baseline (theta0, volatility path, scales)
    stabilizes before selection opens; without this the indicators can lock
    onto a time-varying overfit of an actually-constant equation that the
    chain never escapes.  Warm sweeps count toward burn-in and are skipped
    when the caller clamps the indicators explicitly.

    Single-worker runs are bit-reproducible under a fixed seed; multi-worker
    runs are reproducible at a fixed worker count (streams are keyed by sweep
    and equation, not by scheduling order).  On interrupt, partial output is
    flushed with a truncation marker before the interrupt propagates."""
    layouts = build_layouts(data, config.p)
    n = len(layouts)
    t = layouts[0].T
    s2 = residual_variances(data)
    priors = PriorSet(config.hyper, s2,
                      indicator_clamp=(pairs_from_flat(config.indicator_clamp, n)
                                       if config.indicator_clamp is not None else None),
                      sigma2_h_clamp=config.sigma2_h_clamp)
    if config.indicator_clamp is None and config.warm_start > 0:
        warm = min(config.warm_start, config.burn_in)
        warm_priors = PriorSet(
            config.hyper, s2,
            indicator_clamp=pairs_from_flat(np.zeros(2 * n - 1), n),
            sigma2_h_clamp=config.sigma2_h_clamp)
    else:
        warm, warm_priors = 0, priors
    model = initial_state(layouts, s2, config)
    k_theta = [lay.k_theta for lay in layouts]
    k_total = int(sum(k_theta))
    r = config.draws
    arrays = {
        "gamma": np.empty((r, 2 * n - 1)),
        "theta0": np.empty((r, k_total)),
        "scale_roots": np.empty((r, k_total)),
        "theta_last": np.empty((r, k_total)),
        "h": np.empty((r, n * t)),
        "h0": np.empty((r, n)),
        "sigma2_h": np.empty((r, n)),
        "p_beta": np.empty((r, n)),
        "p_alpha": np.empty((r, n - 1)),
        "kappa": np.empty((r, 2)),
    }
    if config.store_theta_tilde:
        arrays["theta_tilde"] = np.empty((r, t * k_total))

    pool = None
    if config.workers > 1:
        from concurrent.futures import ThreadPoolExecutor
        pool = ThreadPoolExecutor(max_workers=config.workers)
    kept = 0
    total = config.burn_in + config.draws * config.thin
    try:
        for sweep in range(1, total + 1):
            attempt = 0
            while True:
                streams = sweep_streams(config.seed, sweep, attempt, n)
                candidate = gibbs_sweep(model, layouts,
                                        warm_priors if sweep <= warm else priors,
                                        streams, pool=pool)
                if not config.stationarity_check:
                    break
                if max_companion_root(candidate, layouts, config.p) < 1.0:
                    break
                attempt += 1
                if attempt >= STATIONARITY_RETRIES:
                    warnings.warn("stationarity check failed after "
                                  f"{STATIONARITY_RETRIES} retries; keeping draw")
                    break
            model = candidate
            if sweep > config.burn_in \
                    and (sweep - config.burn_in) % config.thin == 0:
                _record_state(arrays, kept, model, config.store_theta_tilde)
                kept += 1
    except KeyboardInterrupt:
        draws = _package(config, layouts, arrays, kept, truncated=True)
        if config.out_dir:
            draws.save(config.out_dir)
        raise
    finally:
        if pool is not None:
            pool.shutdown()
    draws = _package(config, layouts, arrays, kept, truncated=False)
    if config.out_dir:
        draws.save(config.out_dir)
    return draws


def _package(config, layouts, arrays, kept, truncated):
    meta = {
        "n": len(layouts),
        "T": layouts[0].T,
        "p": config.p,
        "k_theta": [lay.k_theta for lay in layouts],
        "seed": config.seed,
        "retained": kept,
        "truncated": truncated,
        "config": config.to_dict(),
        "config_hash": config_hash(config),
        "format": "bin",
    }
    return PosteriorDraws(meta, {k: v[:kept].copy() for k, v in arrays.items()})


# --- chain diagnostics ----------------------------------------------------------

def inefficiency_factors(samples):
    """1 + 2 sum of autocorrelations up to lag min(500, R//5), per column.
    Zero-variance chains report 1 (no autocorrelation information)."""
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    r = x.shape[0]
    lags = min(500, r // 5)
    centered = x - x.mean(axis=0)
    c0 = (centered * centered).mean(axis=0)
    out = np.ones(x.shape[1])
    live = c0 > 0
    acc = np.zeros(x.shape[1])
    for lag in range(1, lags + 1):
        acc[live] += (centered[lag:, live] * centered[:-lag, live]).mean(axis=0) \
            / c0[live]
    out[live] = 1.0 + 2.0 * acc[live]
    return out
