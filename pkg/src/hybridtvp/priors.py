"""Minnesota prior construction and prior/hyperparameter distributions.

Parameterizations used throughout:
  gamma(shape c1, rate c2), mean c1/c2;
  inverse-gamma(nu, S), density ∝ x^{-nu-1} e^{-S/x}, mean S/(nu-1);
  GIG(lam, a, b), density ∝ x^{lam-1} e^{-(a x + b/x)/2}.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    InsufficientData,
    InvalidParameters,
    RejectionLimitExceeded,
    SingularDesign,
)

LOG_2PI = math.log(2.0 * math.pi)
GIG_MAX_REJECTIONS = 1_000_000


@dataclass
class HyperParams:
    kappa3: float = 1.0
    kappa4: float = 100.0
    c11: float = 1.0
    c21: float = 1.0 / 0.04
    c12: float = 1.0
    c22: float = 1.0 / 0.04 ** 2
    nu_h: float = 5.0
    S_h: float = 0.4
    S_theta_var: float = 0.01 ** 2
    S_theta_int: float = 0.1 ** 2
    a_pbeta: float = 0.5
    b_pbeta: float = 0.5
    a_palpha: float = 0.5
    b_palpha: float = 0.5
    a_h0: float = 0.0
    V_h0: float = 10.0

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if name == "a_h0":
                continue
            if not value > 0:
                raise InvalidParameters(f"{name} must be positive, got {value}")


@dataclass
class MinnesotaCov:
    """Per-equation diagonal prior variances for theta_{i,0}; block i has
    length n*p + i (intercept, n*p lag coefficients, i-1 impact entries)."""
    v_theta0: list
    s2: np.ndarray


def residual_variances(data, ar_lags=4):
    """OLS residual variance of each variable regressed on an intercept and
    ar_lags lags of ALL variables; denominator T_eff - n_regressors."""
    y = np.asarray(getattr(data, "values", data), dtype=np.float64)
    t_raw, n = y.shape
    t_eff = t_raw - ar_lags
    n_reg = 1 + n * ar_lags
    if t_eff <= n_reg:
        raise InsufficientData(
            f"{t_raw} observations leave {t_eff} rows for {n_reg} regressors")
    x = np.ones((t_eff, n_reg))
    for lag in range(1, ar_lags + 1):
        x[:, 1 + (lag - 1) * n: 1 + lag * n] = y[ar_lags - lag: t_raw - lag, :]
    q, r = np.linalg.qr(x)
    rdiag = np.abs(np.diagonal(r))
    if rdiag.min() < 1e-10 * rdiag.max():
        raise SingularDesign("collinear regressors in residual-variance step")
    target = y[ar_lags:, :]
    resid = target - x @ np.linalg.solve(r, q.T @ target)
    return (resid ** 2).sum(axis=0) / (t_eff - n_reg)


def minnesota_covariance(kappa1, kappa2, hp: HyperParams, s2, n, p) -> MinnesotaCov:
    """Diagonal prior variances: own lag l -> kappa1/l^2; cross lag l of
    variable j in equation i -> kappa2 s2_i/(l^2 s2_j); j-th impact entry ->
    kappa3 s2_i/s2_j; intercept -> kappa4 s2_i."""
    if not (kappa1 > 0 and kappa2 > 0):
        raise InvalidParameters("kappa1 and kappa2 must be positive")
    s2 = np.asarray(s2, dtype=np.float64)
    if s2.shape != (n,) or np.any(s2 <= 0):
        raise InvalidParameters("s2 must be a positive vector of length n")
    blocks = []
    for i in range(1, n + 1):
        v = np.empty(n * p + i)
        v[0] = hp.kappa4 * s2[i - 1]
        for lag in range(1, p + 1):
            for j in range(1, n + 1):
                idx = 1 + (lag - 1) * n + (j - 1)
                if j == i:
                    v[idx] = kappa1 / lag ** 2
                else:
                    v[idx] = kappa2 * s2[i - 1] / (lag ** 2 * s2[j - 1])
        for j in range(1, i):
            v[n * p + j] = hp.kappa3 * s2[i - 1] / s2[j - 1]
        blocks.append(v)
    return MinnesotaCov(blocks, s2)


def scale_root_variances(n, p, hp: HyperParams):
    """Prior variances of the signed scale roots, per equation: S_theta_int
    for the intercept, S_theta_var for lag and impact coefficients."""
    out = []
    for i in range(1, n + 1):
        v = np.full(n * p + i, hp.S_theta_var)
        v[0] = hp.S_theta_int
        out.append(v)
    return out


# --- sampling -------------------------------------------------------------

def sample_gig(lam, a, b, rng, size=None):
    """Draw from GIG(lam, a, b); valid for (a>0, b>0) or (b=0, lam>0),
    where b=0 degenerates to gamma(lam, rate a/2)."""
    scalar = size is None
    count = 1 if scalar else int(size)
    if not (np.isfinite(lam) and np.isfinite(a) and np.isfinite(b)):
        raise InvalidParameters("GIG parameters must be finite")
    if b < 0 or a <= 0:
        raise InvalidParameters(f"GIG requires a>0 and b>=0, got a={a}, b={b}")
    if b == 0:
        if lam <= 0:
            raise InvalidParameters("GIG with b=0 requires lam>0")
        out = rng.gamma(lam, 2.0 / a, size=count)
    else:
        beta = math.sqrt(a * b)
        y = _gig_standard(abs(lam), beta, rng, count)
        if lam < 0:
            y = 1.0 / y
        out = math.sqrt(b / a) * y
    return float(out[0]) if scalar else out


def _gig_standard(lam, beta, rng, size):
    """Draws from the standardized kernel y^{lam-1} e^{-beta(y+1/y)/2},
    lam >= 0, via ratio-of-uniforms (mode-shifted when the density is
    concentrated enough for the shifted v-bounds to exist)."""
    mode = ((lam - 1.0) + math.hypot(lam - 1.0, beta)) / beta

    def logg(y):
        # log kernel normalized so logg(mode) = 0
        return ((lam - 1.0) * (np.log(y) - math.log(mode))
                - 0.5 * beta * (y + 1.0 / y - mode - 1.0 / mode))

    bounds = None
    if lam >= 1.0 or beta > 1.0:
        # extrema of (y-mode) sqrt(g(y)) solve a cubic in y
        p2 = -(mode + 2.0 * (lam + 1.0) / beta)
        p1 = 2.0 * mode * (lam - 1.0) / beta - 1.0
        roots = np.roots([1.0, p2, p1, mode])
        real = roots.real[np.abs(roots.imag) <= 1e-8 * np.maximum(1.0, np.abs(roots))]
        pos = real[real > 0]
        if pos.size >= 2:
            vals = (pos - mode) * np.exp(0.5 * logg(pos))
            if vals.min() < 0.0 < vals.max():
                bounds = (vals.min(), vals.max(), mode)
    if bounds is None:
        # no shift: u in (0,1], v in [0, v_max] with v_max at the mode of y^2 g(y)
        ystar = ((lam + 1.0) + math.hypot(lam + 1.0, beta)) / beta
        bounds = (0.0, ystar * math.exp(0.5 * float(logg(ystar))), 0.0)

    v_lo, v_hi, shift = bounds
    out = np.empty(size)
    got = 0
    rejections = 0
    while got < size:
        nbatch = max(2 * (size - got), 64)
        u = rng.uniform(0.0, 1.0, nbatch)
        v = rng.uniform(v_lo, v_hi, nbatch)
        with np.errstate(divide="ignore", invalid="ignore"):
            y = shift + v / u
            ok = (u > 0) & (y > 0)
            ok[ok] = 2.0 * np.log(u[ok]) <= logg(y[ok])
        accepted = y[ok]
        take = min(accepted.size, size - got)
        out[got:got + take] = accepted[:take]
        got += take
        rejections += nbatch - take
        if got < size and rejections > GIG_MAX_REJECTIONS:
            raise RejectionLimitExceeded(
                f"GIG sampler exceeded {GIG_MAX_REJECTIONS} rejections "
                f"(lam={lam}, beta={beta})")
    return out


def kappa_gig_params(theta0, hp: HyperParams, s2, n, p):
    """GIG(lam, a, b) parameters of the (kappa1, kappa2) full conditionals
    given the initial coefficients of all equations; theta0 is a sequence of
    n vectors with equation i of length n*p + i.  The b terms are
    sum theta^2 / C with C = 1/l^2 for own lags and s2_i/(l^2 s2_j) for
    lag-l coefficients of variable j in equation i."""
    s2 = np.asarray(s2, dtype=np.float64)
    b1 = 0.0
    b2 = 0.0
    for i in range(1, n + 1):
        th = np.asarray(theta0[i - 1], dtype=np.float64)
        if th.shape != (n * p + i,):
            raise InvalidParameters(
                f"theta0[{i - 1}] has length {th.shape[0]}, expected {n * p + i}")
        for lag in range(1, p + 1):
            for j in range(1, n + 1):
                sq = th[1 + (lag - 1) * n + (j - 1)] ** 2
                if j == i:
                    b1 += sq * lag ** 2
                else:
                    b2 += sq * lag ** 2 * s2[j - 1] / s2[i - 1]
    return ((hp.c11 - n * p / 2.0, 2.0 * hp.c21, b1),
            (hp.c12 - (n - 1) * n * p / 2.0, 2.0 * hp.c22, b2))


def sample_kappa(theta0, hp: HyperParams, s2, n, p, rng):
    """Draw (kappa1, kappa2) from their GIG full conditionals."""
    params1, params2 = kappa_gig_params(theta0, hp, s2, n, p)
    return sample_gig(*params1, rng), sample_gig(*params2, rng)


def sample_invgamma(nu, S, rng):
    if not (nu > 0 and S > 0):
        raise InvalidParameters("inverse-gamma requires nu>0 and S>0")
    return S / rng.gamma(nu, 1.0)


# --- log densities --------------------------------------------------------

def logpdf_normal(x, mean, var):
    if not var > 0:
        raise InvalidParameters("normal variance must be positive")
    return -0.5 * (LOG_2PI + math.log(var) + (x - mean) ** 2 / var)


def logpdf_gamma(x, shape, rate):
    if not (shape > 0 and rate > 0):
        raise InvalidParameters("gamma requires shape>0 and rate>0")
    if x <= 0:
        return -math.inf
    return (shape * math.log(rate) - math.lgamma(shape)
            + (shape - 1.0) * math.log(x) - rate * x)


def logpdf_invgamma(x, nu, S):
    if not (nu > 0 and S > 0):
        raise InvalidParameters("inverse-gamma requires nu>0 and S>0")
    if x <= 0:
        return -math.inf
    return nu * math.log(S) - math.lgamma(nu) - (nu + 1.0) * math.log(x) - S / x


def logpdf_beta(x, a, b):
    if not (a > 0 and b > 0):
        raise InvalidParameters("beta requires a>0 and b>0")
    if not 0.0 < x < 1.0:
        return -math.inf
    return (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
            + (a - 1.0) * math.log(x) + (b - 1.0) * math.log1p(-x))
