"""Recursive expanding-window forecasting and out-of-sample evaluation.

Per origin t the model is re-estimated on the first t observations; posterior
draws are pushed through the structural form to horizon m.  Coefficient states
with indicator 1 and the log-volatilities evolve forward as random walks with
their drawn innovation variances; indicator-0 states stay constant.  Density
forecasts are Rao-Blackwellized: each draw contributes the exact reduced-form
Gaussian marginal of y_{t+m} given its simulated path, and the predictive
density is the mixture over draws.
"""
from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import logsumexp
from scipy.stats import norm

from .data_io import Dataset
from .errors import (
    BenchmarkZero,
    DegenerateVariance,
    DimensionMismatch,
    EmptyCell,
    ExplosiveForecast,
    HybridTvpError,
    InsufficientData,
    InvalidParameters,
)
from .model_compare import GammaConfig
from .priors import HyperParams
from .sampler import (
    ModelState,
    PosteriorDraws,
    SamplerConfig,
    pairs_from_flat,
    run_mcmc,
)

Y_ABS_LIMIT = 1e8
HOMOSCEDASTIC_SIGMA2_H = 1e-10


@dataclass
class ForecastConfig:
    t0: int
    horizons: tuple = (1, 4)
    burn_in: int = 500
    draws: int = 2000
    warm_start: int = 100
    preset: object = None  # GammaConfig or flat 0/1 clamp; None = free hybrid
    sigma2_h_clamp: float | None = None
    hold_states: bool = False
    p: int = 2
    seed: int = 0
    workers: int = 1
    hyper: HyperParams = field(default_factory=HyperParams)

    def __post_init__(self):
        if self.t0 <= self.p + 1:
            raise InvalidParameters("evaluation start must exceed lag order + 1")
        self.horizons = tuple(sorted(int(m) for m in self.horizons))
        if not self.horizons or self.horizons[0] < 1:
            raise InvalidParameters("horizons must be >= 1")
        if self.draws < 1 or self.burn_in < 0 or self.workers < 1:
            raise InvalidParameters("need draws >= 1, burn_in >= 0, workers >= 1")

    def clamp_flat(self, n):
        if self.preset is None:
            return None
        flat = self.preset.flat if isinstance(self.preset, GammaConfig) \
            else np.asarray(self.preset)
        if flat.size != 2 * n - 1:
            raise DimensionMismatch(
                f"clamp has {flat.size} slots, model needs {2 * n - 1}")
        return [int(v) for v in flat]


@dataclass
class ForecastRecord:
    origin: int
    horizon: int
    variable: int
    point: float
    log_score: float
    realized: float

    def __post_init__(self):
        if not (np.isfinite(self.point) and np.isfinite(self.realized)):
            raise InvalidParameters("non-finite forecast record entry")
        if np.isnan(self.log_score):
            raise InvalidParameters("NaN log score")


# --- forward simulation ----------------------------------------------------------


@dataclass
class TerminalState:
    """What a posterior draw contributes at the forecast origin: terminal
    coefficients theta_T per equation, signed state scales, indicators,
    terminal log-volatilities and their innovation variances."""
    pairs: list
    theta: list
    scale_roots: list
    h: np.ndarray
    sigma2_h: np.ndarray

    @classmethod
    def from_model(cls, model: ModelState):
        theta, scales, pairs = [], [], []
        for eq in model.equations:
            mask = _pair_mask(eq.indicators, eq.k_beta,
                              eq.theta0.size - eq.k_beta)
            theta.append(eq.theta0 + mask * eq.scale_roots * eq.theta_tilde[-1])
            scales.append(eq.scale_roots.copy())
            pairs.append(eq.indicators)
        return cls(pairs, theta,
                   scales,
                   np.array([eq.vol.h[-1] for eq in model.equations]),
                   np.array([eq.vol.sigma2_h for eq in model.equations]))


def terminal_states(draws: PosteriorDraws):
    """Iterate the stored per-draw terminal quantities."""
    n = draws.n
    t_eff = draws.meta["T"]
    offs = draws.theta_offsets()
    for d in range(draws.n_draws):
        pairs = pairs_from_flat(draws["gamma"][d], n)
        theta = [draws["theta_last"][d, offs[i]:offs[i + 1]] for i in range(n)]
        scales = [draws["scale_roots"][d, offs[i]:offs[i + 1]] for i in range(n)]
        h = np.array([draws["h"][d, i * t_eff + t_eff - 1] for i in range(n)])
        yield TerminalState(pairs, theta, scales, h, draws["sigma2_h"][d])


def _pair_mask(pair, k_beta, k_alpha):
    ga = 0 if pair.gamma_alpha is None else pair.gamma_alpha
    return np.concatenate([np.full(k_beta, float(pair.gamma_beta)),
                           np.full(k_alpha, float(ga))])


def evolve_states(term: TerminalState, m, rng, hold_states=False):
    """Random-walk propagation of coefficient states and log-volatilities m
    steps past the origin.  Returns (theta_steps, h_steps): lists over steps.
    Indicator-0 blocks (or all blocks under hold_states) stay constant."""
    n = len(term.theta)
    k_beta = term.theta[0].size  # equation 1 carries no impact entries
    masks = [_pair_mask(term.pairs[i], k_beta, term.theta[i].size - k_beta)
             for i in range(n)]
    theta = [t.astype(np.float64).copy() for t in term.theta]
    h = term.h.astype(np.float64).copy()
    sd_h = np.sqrt(term.sigma2_h)
    theta_steps, h_steps = [], []
    for _ in range(m):
        if not hold_states:
            for i in range(n):
                theta[i] = theta[i] + masks[i] * np.abs(term.scale_roots[i]) \
                    * rng.standard_normal(theta[i].size)
        h = h + sd_h * rng.standard_normal(n)
        theta_steps.append([t.copy() for t in theta])
        h_steps.append(h.copy())
    return theta_steps, h_steps


def _structural_arrays(theta, n, p, k_beta):
    a = np.eye(n)
    b = np.empty(n)
    lag_coef = np.empty((n, n * p))
    for i in range(n):
        a[i, :i] = theta[i][k_beta:]
        b[i] = theta[i][0]
        lag_coef[i] = theta[i][1:k_beta]
    return a, b, lag_coef


def predictive_simulate(term: TerminalState, history, p, m, rng,
                        hold_states=False):
    """Simulate y_{T+1:T+m} from one posterior draw.  Returns (path, means,
    variances), each (m, n): the simulated draws, and per step the exact
    reduced-form Gaussian marginal moments of y given the path so far —
    mean A^{-1}(b + sum_l B_l y_{t-l}), variance diag(A^{-1} e^h A^{-T})."""
    history = np.asarray(history, dtype=np.float64)
    n = history.shape[1]
    k_beta = n * p + 1
    if history.shape[0] < p:
        raise InsufficientData(f"need {p} lag rows, got {history.shape[0]}")
    theta_steps, h_steps = evolve_states(term, m, rng, hold_states)
    recent = [history[-lag] for lag in range(1, p + 1)]  # most recent first
    path = np.empty((m, n))
    means = np.empty((m, n))
    variances = np.empty((m, n))
    for s in range(m):
        a, b, lag_coef = _structural_arrays(theta_steps[s], n, p, k_beta)
        rhs = b + lag_coef @ np.concatenate(recent)
        scaled = np.diag(np.exp(0.5 * h_steps[s]))
        packed = solve_triangular(a, np.column_stack([rhs, scaled]),
                                  lower=True, unit_diagonal=True)
        means[s] = packed[:, 0]
        root = packed[:, 1:]  # A^{-1} diag(e^{h/2})
        variances[s] = np.einsum("ij,ij->i", root, root)
        path[s] = means[s] + root @ rng.standard_normal(n)
        if np.any(np.abs(path[s]) > Y_ABS_LIMIT):
            raise ExplosiveForecast(f"|y| exceeded {Y_ABS_LIMIT:g} at step {s + 1}")
        recent = [path[s]] + recent[:-1]
    return path, means, variances


def mixture_log_density(means, variances, x):
    """log of the equally-weighted Gaussian mixture density at x.  Components
    are sorted before summation so the value is exactly invariant to the
    order of posterior draws."""
    means = np.asarray(means, dtype=np.float64)
    if means.size == 0:
        raise EmptyCell("no mixture components")
    comp = np.sort(norm.logpdf(x, means, np.sqrt(np.asarray(variances))))
    return float(logsumexp(comp) - math.log(means.size))


@dataclass
class OriginForecast:
    origin: int
    horizons: tuple
    point: dict        # m -> (n,) mean of simulated draws
    means: dict        # m -> (R, n) mixture means
    variances: dict    # m -> (R, n) mixture variances
    excluded: int


def forecast_origin(post: PosteriorDraws, window_values, horizons, rng,
                    hold_states=False):
    """Push every retained draw to max(horizons); collect simulated values and
    the per-draw Gaussian components at each requested horizon.  Explosive
    draws are excluded and counted."""
    p = post.meta["p"]
    m_max = max(horizons)
    paths, means, variances = [], [], []
    excluded = 0
    for term in terminal_states(post):
        try:
            out = predictive_simulate(term, window_values, p, m_max, rng,
                                      hold_states)
        except ExplosiveForecast:
            excluded += 1
            continue
        paths.append(out[0])
        means.append(out[1])
        variances.append(out[2])
    if not paths:
        raise ExplosiveForecast("every posterior draw exploded in simulation")
    paths = np.stack(paths)          # (R, m, n)
    means = np.stack(means)
    variances = np.stack(variances)
    sel = {m: m - 1 for m in horizons}
    return OriginForecast(
        origin=window_values.shape[0],
        horizons=tuple(horizons),
        point={m: paths[:, i, :].mean(axis=0) for m, i in sel.items()},
        means={m: means[:, i, :] for m, i in sel.items()},
        variances={m: variances[:, i, :] for m, i in sel.items()},
        excluded=excluded)


# --- metrics ---------------------------------------------------------------------


def _cells(records):
    cells = {}
    for rec in records:
        cells.setdefault((rec.variable, rec.horizon), []).append(rec)
    if not cells:
        raise EmptyCell("no forecast records")
    return cells


def rmsfe(records):
    """Per (variable, horizon): sqrt of the mean squared forecast error."""
    return {cell: math.sqrt(np.mean([(r.realized - r.point) ** 2 for r in recs]))
            for cell, recs in _cells(records).items()}


def alpl(records):
    """Per (variable, horizon): average log predictive likelihood."""
    out = {}
    for cell, recs in _cells(records).items():
        scores = np.array([r.log_score for r in recs])
        if np.any(np.isneginf(scores)):
            warnings.warn(f"-inf log score in cell {cell}")
        out[cell] = float(scores.mean())
    return out


def percentage_gains(candidate, benchmark):
    """candidate/benchmark: dicts with 'rmsfe' and 'alpl' cell maps.  Returns
    per cell (100*(1 - RMSFE_M/RMSFE_B), 100*(ALPL_M - ALPL_B))."""
    cells = candidate["rmsfe"].keys()
    if set(cells) != set(benchmark["rmsfe"].keys()) \
            or set(candidate["alpl"]) != set(benchmark["alpl"]):
        raise DimensionMismatch("candidate and benchmark cells differ")
    gains = {}
    for cell in cells:
        rb = benchmark["rmsfe"][cell]
        if rb == 0:
            raise BenchmarkZero(f"benchmark RMSFE is zero in cell {cell}")
        gains[cell] = (100.0 * (1.0 - candidate["rmsfe"][cell] / rb),
                       100.0 * (candidate["alpl"][cell] - benchmark["alpl"][cell]))
    return gains


def evaluate(records):
    return {"rmsfe": rmsfe(records), "alpl": alpl(records)}


def long_run_variance(differentials, horizon):
    """Rectangular-window long-run variance: gamma_0 + 2*sum of the first
    horizon-1 sample autocovariances (1/N normalization)."""
    d = np.asarray(differentials, dtype=np.float64)
    dc = d - d.mean()
    n = d.size
    lrv = dc @ dc / n
    for lag in range(1, horizon):
        if lag < n:
            lrv += 2.0 * (dc[:-lag] @ dc[lag:]) / n
    return float(lrv)


def dm_test(differentials, horizon):
    """Equal-forecast-accuracy test on per-origin loss differentials: mean
    over sqrt(long-run variance / N), rectangular truncation at lag
    horizon-1, two-sided normal p-value."""
    d = np.asarray(differentials, dtype=np.float64)
    if d.size < 10:
        raise InsufficientData(f"need >= 10 differentials, got {d.size}")
    dbar = d.mean()
    lrv = long_run_variance(d, horizon)
    if lrv <= 0:
        if dbar == 0:
            return 0.0, 1.0
        raise DegenerateVariance("non-positive long-run variance")
    stat = dbar / math.sqrt(lrv / d.size)
    return float(stat), float(2.0 * norm.sf(abs(stat)))


# --- the recursive exercise ------------------------------------------------------


def _derived_seed(base, origin, salt):
    ss = np.random.SeedSequence(entropy=base, spawn_key=(origin, salt))
    return int(ss.generate_state(1)[0])


def _window(data: Dataset, t):
    return Dataset(data.values[:t], data.names, data.transforms,
                   data.dates[:t] if data.dates else None)


def _origin_records(config: ForecastConfig, data: Dataset, t, clamp,
                    sigma2_h_clamp, salt):
    horizons = [m for m in config.horizons if t + m <= data.values.shape[0]]
    if not horizons:
        return []
    scfg = SamplerConfig(
        p=config.p, burn_in=config.burn_in, draws=config.draws,
        warm_start=config.warm_start,
        seed=_derived_seed(config.seed, t, salt), workers=1,
        hyper=config.hyper, indicator_clamp=clamp,
        sigma2_h_clamp=sigma2_h_clamp)
    post = run_mcmc(scfg, _window(data, t))
    rng = np.random.default_rng(np.random.SeedSequence(
        entropy=config.seed, spawn_key=(t, salt + 1)))
    fc = forecast_origin(post, data.values[:t], horizons, rng,
                         config.hold_states)
    records = []
    for m in horizons:
        realized = data.values[t + m - 1]
        for i in range(data.values.shape[1]):
            score = mixture_log_density(fc.means[m][:, i],
                                        fc.variances[m][:, i], realized[i])
            records.append(ForecastRecord(t, m, i, float(fc.point[m][i]),
                                          score, float(realized[i])))
    return records


def homoscedastic_benchmark_config(config: ForecastConfig, n):
    """Constant-coefficient, constant-variance comparator: all indicators
    clamped to zero and the volatility innovation variance pinned to ~0 (the
    initial level h0 is still estimated)."""
    return replace(config, preset=GammaConfig.preset(0, 0, n),
                   sigma2_h_clamp=HOMOSCEDASTIC_SIGMA2_H)


@dataclass
class ExerciseResult:
    records: list
    benchmark_records: list
    summary: list
    skipped_origins: list


def _summary_rows(records, bench_records, horizons, n):
    cand = evaluate(records)
    bench = evaluate(bench_records)
    gains = percentage_gains(cand, bench)
    by_key_c = {(r.origin, r.horizon, r.variable): r for r in records}
    by_key_b = {(r.origin, r.horizon, r.variable): r for r in bench_records}
    rows = []
    for i in range(n):
        for m in horizons:
            cell = (i, m)
            if cell not in cand["rmsfe"]:
                continue
            se_diff, lp_diff = [], []
            for (o, hm, v), rc in by_key_c.items():
                if hm == m and v == i and (o, hm, v) in by_key_b:
                    rb = by_key_b[(o, hm, v)]
                    se_diff.append((rc.realized - rc.point) ** 2
                                   - (rb.realized - rb.point) ** 2)
                    lp_diff.append(rb.log_score - rc.log_score)
            row = {"variable": i, "horizon": m,
                   "rmsfe": cand["rmsfe"][cell], "rmsfe_bench": bench["rmsfe"][cell],
                   "rmsfe_gain": gains[cell][0],
                   "alpl": cand["alpl"][cell], "alpl_bench": bench["alpl"][cell],
                   "alpl_gain": gains[cell][1],
                   "dm_se_stat": "", "dm_se_p": "",
                   "dm_lpl_stat": "", "dm_lpl_p": ""}
            try:
                row["dm_se_stat"], row["dm_se_p"] = dm_test(se_diff, m)
            except (InsufficientData, DegenerateVariance):
                pass
            try:
                row["dm_lpl_stat"], row["dm_lpl_p"] = dm_test(lp_diff, m)
            except (InsufficientData, DegenerateVariance):
                pass
            rows.append(row)
    return rows


SUMMARY_COLUMNS = ("variable", "horizon", "rmsfe", "rmsfe_bench", "rmsfe_gain",
                   "alpl", "alpl_bench", "alpl_gain",
                   "dm_se_stat", "dm_se_p", "dm_lpl_stat", "dm_lpl_p")


def summarize_records(records, bench_records):
    """Rebuild the per-(variable, horizon) summary from stored records."""
    horizons = sorted({r.horizon for r in records})
    n = max(r.variable for r in records) + 1
    return _summary_rows(records, bench_records, horizons, n)


def _write_records_csv(path, records):
    with open(path, "w") as fh:
        fh.write("origin,horizon,variable,point,log_score,realized\n")
        for r in records:
            fh.write(f"{r.origin},{r.horizon},{r.variable},"
                     f"{r.point!r},{r.log_score!r},{r.realized!r}\n")


def load_records_csv(path):
    records = []
    with open(path) as fh:
        next(fh)
        for line in fh:
            o, m, v, pt, ls, rz = line.strip().split(",")
            records.append(ForecastRecord(int(o), int(m), int(v),
                                          float(pt), float(ls), float(rz)))
    return records


def recursive_exercise(config: ForecastConfig, data: Dataset, out_dir=None,
                       include_benchmark=True):
    """Expanding-window evaluation over origins t = t0 .. T-1.  Each origin
    re-estimates on the first t rows and forecasts every configured horizon
    that stays inside the sample.  With a benchmark, the summary holds
    percentage gains and equal-accuracy test results per (variable, horizon);
    origins where estimation fails are skipped and reported."""
    t_raw, n = data.values.shape
    if config.t0 + min(config.horizons) > t_raw:
        raise InsufficientData("no origin admits any configured horizon")
    clamp = config.clamp_flat(n)
    origins = range(config.t0, t_raw)
    skipped = []

    def process(t):
        cand = _origin_records(config, data, t, clamp,
                               config.sigma2_h_clamp, salt=0)
        bench = []
        if include_benchmark:
            bcfg = homoscedastic_benchmark_config(config, n)
            bench = _origin_records(bcfg, data, t, bcfg.clamp_flat(n),
                                    bcfg.sigma2_h_clamp, salt=2)
        return cand, bench

    results = {}
    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            futures = {t: pool.submit(process, t) for t in origins}
            for t, fut in futures.items():
                try:
                    results[t] = fut.result()
                except HybridTvpError as exc:
                    skipped.append(t)
                    warnings.warn(f"origin {t} skipped: {exc}")
    else:
        for t in origins:
            try:
                results[t] = process(t)
            except HybridTvpError as exc:
                skipped.append(t)
                warnings.warn(f"origin {t} skipped: {exc}")
    records = [r for t in sorted(results) for r in results[t][0]]
    bench_records = [r for t in sorted(results) for r in results[t][1]]
    if not records:
        raise EmptyCell("every origin failed")
    summary = (_summary_rows(records, bench_records, config.horizons, n)
               if include_benchmark else [])
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        _write_records_csv(os.path.join(out_dir, "records.csv"), records)
        if include_benchmark:
            _write_records_csv(os.path.join(out_dir, "benchmark_records.csv"),
                               bench_records)
            with open(os.path.join(out_dir, "summary.csv"), "w") as fh:
                fh.write(",".join(SUMMARY_COLUMNS) + "\n")
                for row in summary:
                    fh.write(",".join(str(row[c]) for c in SUMMARY_COLUMNS) + "\n")
    return ExerciseResult(records, bench_records, summary, skipped)
