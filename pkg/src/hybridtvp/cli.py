"""Command-line surface: simulate / estimate / compare / forecast / summarize.

Configuration is resolved from four layers, later layers winning: built-in
defaults, a flat key=value (or JSON) config file, HYBRIDTVP_* environment
variables, then command-line flags.  The resolved configuration is echoed to
<out>/resolved_config.json before any work starts, and that echo is itself a
valid --config file, so every run can be reproduced from its output directory.

Exit codes: 0 ok, 2 usage problems, 3 data errors, 4 numeric failures.
Failures also leave a machine-readable error.json in the output directory.
"""
from __future__ import annotations

import argparse
import json
import os
import re
import sys

import numpy as np

from . import data_io, forecast_eval, model_compare, montecarlo
from .errors import DataError, HybridTvpError, InvalidParameters
from .priors import HyperParams
from .sampler import (
    PosteriorDraws,
    SamplerConfig,
    inefficiency_factors,
    run_mcmc,
)

ENV_PREFIX = "HYBRIDTVP_"

# subcommand-specific default budgets: forecasting re-estimates per origin,
# so its per-run budget is deliberately smaller
DEFAULTS = {
    "simulate": {"p": 2, "n": 12, "T": 400, "replications": 10,
                 "burn_in": 1000, "draws": 10000, "thin": 1, "warm_start": 100,
                 "workers": 1},
    "estimate": {"p": 2, "burn_in": 1000, "draws": 10000, "thin": 1,
                 "warm_start": 100, "workers": 1, "stationarity_check": False,
                 "store_theta_tilde": False},
    "compare": {"p": 2},
    "forecast": {"p": 2, "burn_in": 500, "draws": 2000, "warm_start": 100,
                 "horizons": "1,4",
                 "workers": 1, "hold_states": False, "benchmark": True},
    "summarize": {},
}

SEED_REQUIRED = ("simulate", "estimate", "forecast")


class UsageError(Exception):
    pass


# --- config resolution -----------------------------------------------------------


def parse_config_file(path):
    try:
        text = open(path).read()
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}")
    stripped = text.lstrip()
    if stripped.startswith("{"):
        return {str(k): v for k, v in json.loads(text).items()}
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def env_overrides(environ=None):
    environ = os.environ if environ is None else environ
    out = {}
    for raw, value in environ.items():
        if not raw.startswith(ENV_PREFIX):
            continue
        parts = raw[len(ENV_PREFIX):].split("__")
        if parts[0].lower() == "transform":
            # mnemonic case is significant
            key = "transform." + "__".join(parts[1:])
        else:
            key = ".".join(p.lower() for p in parts)
        out[key] = value
    return out


def _coerce_bool(value, key):
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"{key}: expected a boolean, got {value!r}")


def _coerce_int(value, key):
    try:
        return int(str(value))
    except ValueError:
        raise UsageError(f"{key}: expected an integer, got {value!r}")


def _coerce_float(value, key):
    try:
        return float(str(value))
    except ValueError:
        raise UsageError(f"{key}: expected a number, got {value!r}")


INT_KEYS = ("p", "burn_in", "draws", "thin", "warm_start", "seed",
            "workers", "n", "T", "replications", "t0")
BOOL_KEYS = ("stationarity_check", "store_theta_tilde", "hold_states",
             "benchmark")
FLOAT_KEYS = ("sigma2_h_clamp",)

_HYPER_FIELDS = {f.lower(): f for f in HyperParams.__dataclass_fields__}


def coerce(config):
    out = {}
    for key, value in config.items():
        if key in INT_KEYS:
            out[key] = _coerce_int(value, key)
        elif key in BOOL_KEYS:
            out[key] = _coerce_bool(value, key)
        elif key in FLOAT_KEYS:
            out[key] = _coerce_float(value, key)
        elif key.startswith("hyper."):
            field = _HYPER_FIELDS.get(key[6:].lower())
            if field is None:
                raise UsageError(f"unknown hyperparameter {key[6:]!r}")
            out["hyper." + field] = _coerce_float(value, key)
        else:
            out[key] = value if not isinstance(value, str) else value.strip()
    return out


def resolve_config(args, environ=None):
    """defaults < config file < environment < command-line flags."""
    merged = dict(DEFAULTS[args.command])
    if getattr(args, "config", None):
        merged.update(parse_config_file(args.config))
    merged.update(env_overrides(environ))
    for key, value in (getattr(args, "set", None) or []):
        merged[key] = value
    for key in ("data", "transforms", "out", "p", "burn_in", "draws", "thin",
                "warm_start", "seed", "workers", "n", "T", "replications", "pattern",
                "clamp", "t0", "horizons", "emit_data", "draws_dir",
                "records", "benchmark_records", "sigma2_h_clamp",
                "stationarity_check", "store_theta_tilde", "hold_states",
                "benchmark"):
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    merged["command"] = args.command  # never taken from a config echo
    config = coerce(merged)
    if args.command in SEED_REQUIRED and "seed" not in config:
        raise UsageError("seed is required (flag --seed, key seed=, or "
                         f"{ENV_PREFIX}SEED) so runs are reproducible")
    return config


def hyper_from(config):
    kwargs = {key[6:]: value for key, value in config.items()
              if key.startswith("hyper.")}
    try:
        return HyperParams(**kwargs)
    except InvalidParameters:
        raise
    except TypeError as exc:
        raise UsageError(str(exc))


def transform_spec_from(config):
    spec = {}
    if config.get("transforms"):
        spec.update(data_io.load_transform_spec(config["transforms"]))
    for key, value in config.items():
        if key.startswith("transform."):
            spec[key[10:]] = value
    return spec or None


def load_dataset(config):
    path = config.get("data")
    if not path:
        raise UsageError("a data CSV is required (--data)")
    if not os.path.exists(path):
        raise DataError(f"data file not found: {path}")
    return data_io.load_csv(path, transform_spec_from(config))


def parse_clamp(text, n):
    """'0,1,1,...' (2n-1 slots) or a preset name like HYB-(1,0)."""
    if text is None:
        return None
    text = text.strip()
    match = re.fullmatch(r"HYB-\((\d),\s*(\d)\)", text)
    if match:
        return [int(v) for v in
                model_compare.GammaConfig.preset(
                    int(match.group(1)), int(match.group(2)), n).flat]
    try:
        flat = [int(tok) for tok in text.split(",")]
    except ValueError:
        raise UsageError(f"cannot parse indicator clamp {text!r}")
    if len(flat) != 2 * n - 1 or not set(flat) <= {0, 1}:
        raise UsageError(
            f"clamp needs {2 * n - 1} comma-separated 0/1 slots for n={n}")
    return flat


def parse_pattern(text, n):
    if text is None:
        return None
    pairs = []
    for tok in text.split(","):
        tok = tok.strip()
        if not re.fullmatch(r"[01][01]", tok):
            raise UsageError(f"pattern entries are two digits of 0/1, got {tok!r}")
        pairs.append((int(tok[0]), int(tok[1])))
    if len(pairs) != n:
        raise UsageError(f"pattern must list {n} pairs, got {len(pairs)}")
    return pairs


def parse_horizons(value):
    if isinstance(value, (list, tuple)):
        return tuple(int(v) for v in value)
    try:
        return tuple(int(tok) for tok in str(value).split(","))
    except ValueError:
        raise UsageError(f"cannot parse horizons {value!r}")


def write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def echo_config(config):
    out = config.get("out")
    if out:
        os.makedirs(out, exist_ok=True)
        write_json(os.path.join(out, "resolved_config.json"), config)


# --- subcommands -----------------------------------------------------------------


def sampler_config_from(config, out_dir=None):
    return SamplerConfig(
        p=config["p"], burn_in=config["burn_in"], draws=config["draws"],
        thin=config.get("thin", 1), warm_start=config.get("warm_start", 100),
        seed=config["seed"],
        workers=config.get("workers", 1), hyper=hyper_from(config),
        indicator_clamp=config.get("_clamp_flat"),
        sigma2_h_clamp=config.get("sigma2_h_clamp"),
        stationarity_check=config.get("stationarity_check", False),
        store_theta_tilde=config.get("store_theta_tilde", False),
        out_dir=out_dir)


def _coefficient_labels(names, p, i):
    labels = ["const"]
    for lag in range(1, p + 1):
        labels.extend(f"{name}_l{lag}" for name in names)
    labels.extend(f"impact_{names[j]}" for j in range(i))
    return labels


def write_indicators_csv(path, draws, names):
    gamma = [float(v) for v in draws["gamma"].mean(axis=0)]
    with open(path, "w") as fh:
        fh.write("equation,variable,mean_gamma_beta,mean_gamma_alpha\n")
        fh.write(f"1,{names[0]},{gamma[0]!r},\n")
        for i in range(2, len(names) + 1):
            fh.write(f"{i},{names[i - 1]},{gamma[2 * i - 3]!r},"
                     f"{gamma[2 * i - 2]!r}\n")


def write_diagnostics_csv(path, draws, names, p):
    n = len(names)
    offs = draws.theta_offsets()
    rows = []
    for block in ("theta0", "scale_roots"):
        arr = draws[block]
        for i in range(n):
            labels = _coefficient_labels(names, p, i)
            for j, label in enumerate(labels):
                rows.append((f"{block}[{names[i]}:{label}]",
                             arr[:, offs[i] + j]))
    for block in ("sigma2_h", "h0", "p_beta"):
        for i in range(n):
            rows.append((f"{block}[{names[i]}]", draws[block][:, i]))
    for i in range(1, n):
        rows.append((f"p_alpha[{names[i]}]", draws["p_alpha"][:, i - 1]))
    rows.append(("kappa1", draws["kappa"][:, 0]))
    rows.append(("kappa2", draws["kappa"][:, 1]))
    with open(path, "w") as fh:
        fh.write("parameter,inefficiency_factor\n")
        for label, series in rows:
            fh.write(f"{label},{float(inefficiency_factors(series)[0])!r}\n")


def estimate_cmd(config):
    data = load_dataset(config)
    config["_clamp_flat"] = parse_clamp(config.get("clamp"), data.n)
    out = config["out"]
    scfg = sampler_config_from(config, out_dir=os.path.join(out, "draws"))
    draws = run_mcmc(scfg, data)
    write_indicators_csv(os.path.join(out, "indicators.csv"), draws, data.names)
    write_diagnostics_csv(os.path.join(out, "diagnostics.csv"), draws,
                          data.names, config["p"])
    print(f"retained {draws.n_draws} draws for n={data.n}, "
          f"T={draws.meta['T']}; outputs in {out}")
    return 0


def simulate_cmd(config):
    spec = montecarlo.DgpSpec(
        n=config["n"], T=config["T"], p=config["p"],
        pattern=parse_pattern(config.get("pattern"), config["n"]),
        seed=config["seed"])
    if config.get("emit_data"):
        dataset, _ = montecarlo.generate_dgp(spec)
        with open(config["emit_data"], "w") as fh:
            fh.write(",".join(dataset.names) + "\n")
            for row in dataset.values:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")
    reps = config["replications"]
    if reps > 0:
        est = SamplerConfig(
            p=config["p"], burn_in=config["burn_in"], draws=config["draws"],
            thin=config.get("thin", 1), warm_start=config.get("warm_start", 100),
            seed=config["seed"], hyper=hyper_from(config))
        result = montecarlo.recovery_study(
            spec, reps, est,
            csv_path=os.path.join(config["out"], "recovery.csv"))
        print(f"recovery study: {result.replications} replications done, "
              f"{result.failed} failed")
    return 0


def compare_cmd(config):
    if not config.get("draws_dir"):
        raise UsageError("compare needs --draws-dir from a previous estimate")
    draws = PosteriorDraws.load(config["draws_dir"])
    data = load_dataset(config)
    configs = model_compare.preset_configs(data.n)
    rows = model_compare.compare_table(configs, draws, data=data)
    path = os.path.join(config["out"], "compare.csv")
    with open(path, "w") as fh:
        fh.write("name,log_prior,log_posterior,log_bf_unrestricted\n")
        for name, prior, post, bf in rows:
            fh.write(f"\"{name}\",{float(prior)!r},{float(post)!r},"
                     f"{float(bf)!r}\n")
    print(f"wrote {path}")
    return 0


def forecast_cmd(config):
    data = load_dataset(config)
    fcfg = forecast_eval.ForecastConfig(
        t0=config["t0"], horizons=parse_horizons(config["horizons"]),
        burn_in=config["burn_in"], draws=config["draws"],
        warm_start=config.get("warm_start", 100),
        preset=parse_clamp(config.get("clamp"), data.n),
        sigma2_h_clamp=config.get("sigma2_h_clamp"),
        hold_states=config.get("hold_states", False), p=config["p"],
        seed=config["seed"], workers=config.get("workers", 1),
        hyper=hyper_from(config))
    result = forecast_eval.recursive_exercise(
        fcfg, data, out_dir=config["out"],
        include_benchmark=config.get("benchmark", True))
    print(f"{len(result.records)} forecast records over "
          f"{len({r.origin for r in result.records})} origins; "
          f"skipped {len(result.skipped_origins)}")
    return 0


def summarize_cmd(config):
    if not config.get("records"):
        raise UsageError("summarize needs --records from a forecast run")
    records = forecast_eval.load_records_csv(config["records"])
    out = config["out"]
    if config.get("benchmark_records"):
        bench = forecast_eval.load_records_csv(config["benchmark_records"])
        rows = forecast_eval.summarize_records(records, bench)
        with open(os.path.join(out, "summary.csv"), "w") as fh:
            fh.write(",".join(forecast_eval.SUMMARY_COLUMNS) + "\n")
            for row in rows:
                fh.write(",".join(str(row[c])
                                  for c in forecast_eval.SUMMARY_COLUMNS) + "\n")
        with open(os.path.join(out, "gains.csv"), "w") as fh:
            fh.write("variable,horizon,rmsfe_gain,alpl_gain\n")
            for row in rows:
                fh.write(f"{row['variable']},{row['horizon']},"
                         f"{row['rmsfe_gain']!r},{row['alpl_gain']!r}\n")
    else:
        metrics = forecast_eval.evaluate(records)
        with open(os.path.join(out, "metrics.csv"), "w") as fh:
            fh.write("variable,horizon,rmsfe,alpl\n")
            for (i, m) in sorted(metrics["rmsfe"]):
                fh.write(f"{i},{m},{metrics['rmsfe'][(i, m)]!r},"
                         f"{metrics['alpl'][(i, m)]!r}\n")
    return 0


DISPATCH = {
    "simulate": simulate_cmd,
    "estimate": estimate_cmd,
    "compare": compare_cmd,
    "forecast": forecast_cmd,
    "summarize": summarize_cmd,
}


# --- argument parsing ------------------------------------------------------------


class _SetAction(argparse.Action):
    def __call__(self, parser, namespace, value, option_string=None):
        if "=" not in value:
            raise argparse.ArgumentError(self, f"expected key=value, got {value!r}")
        key, val = value.split("=", 1)
        items = getattr(namespace, self.dest) or []
        items.append((key.strip(), val.strip()))
        setattr(namespace, self.dest, items)


def _common(sub):
    sub.add_argument("--config", help="flat key=value or JSON config file")
    sub.add_argument("--set", action=_SetAction, metavar="KEY=VALUE",
                     help="override any config key (repeatable)")
    sub.add_argument("--out", help="output directory")
    sub.add_argument("--seed", type=int)
    sub.add_argument("--workers", type=int)
    sub.add_argument("--p", type=int, help="lag order")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="hybridtvp",
        description="Hybrid time-varying-parameter VAR toolkit")
    subs = parser.add_subparsers(dest="command", required=True)

    est = subs.add_parser("estimate", help="run the sampler on a dataset")
    _common(est)
    est.add_argument("--data")
    est.add_argument("--transforms", help="sidecar mnemonic,tag CSV")
    est.add_argument("--burn-in", dest="burn_in", type=int)
    est.add_argument("--draws", type=int)
    est.add_argument("--thin", type=int)
    est.add_argument("--warm-start", dest="warm_start", type=int,
                     help="initial sweeps with selection closed (constant fit)")
    est.add_argument("--clamp", help="indicator clamp: 0/1 list or HYB-(b,a)")
    est.add_argument("--sigma2-h-clamp", dest="sigma2_h_clamp", type=float)
    est.add_argument("--stationarity-check", dest="stationarity_check",
                     action=argparse.BooleanOptionalAction)
    est.add_argument("--store-theta-tilde", dest="store_theta_tilde",
                     action=argparse.BooleanOptionalAction)

    sim = subs.add_parser("simulate", help="synthetic DGP and recovery study")
    _common(sim)
    sim.add_argument("--n", type=int)
    sim.add_argument("--T", type=int)
    sim.add_argument("--replications", "-R", dest="replications", type=int)
    sim.add_argument("--pattern", help="per-equation pairs, e.g. 00,01,10,11")
    sim.add_argument("--emit-data", dest="emit_data",
                     help="also write one simulated dataset CSV here")
    sim.add_argument("--burn-in", dest="burn_in", type=int)
    sim.add_argument("--draws", type=int)
    sim.add_argument("--warm-start", dest="warm_start", type=int)

    cmp_ = subs.add_parser("compare", help="preset Bayes factors from draws")
    _common(cmp_)
    cmp_.add_argument("--draws-dir", dest="draws_dir")
    cmp_.add_argument("--data")
    cmp_.add_argument("--transforms")

    fct = subs.add_parser("forecast", help="recursive out-of-sample exercise")
    _common(fct)
    fct.add_argument("--data")
    fct.add_argument("--transforms")
    fct.add_argument("--t0", type=int, help="first forecast origin")
    fct.add_argument("--horizons")
    fct.add_argument("--burn-in", dest="burn_in", type=int)
    fct.add_argument("--draws", type=int)
    fct.add_argument("--warm-start", dest="warm_start", type=int)
    fct.add_argument("--clamp")
    fct.add_argument("--sigma2-h-clamp", dest="sigma2_h_clamp", type=float)
    fct.add_argument("--hold-states", dest="hold_states",
                     action=argparse.BooleanOptionalAction)
    fct.add_argument("--benchmark", action=argparse.BooleanOptionalAction,
                     help="also run the homoscedastic constant benchmark")

    summ = subs.add_parser("summarize", help="rebuild tables from records CSVs")
    _common(summ)
    summ.add_argument("--records")
    summ.add_argument("--benchmark-records", dest="benchmark_records")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    config = None
    try:
        config = resolve_config(args)
        if not config.get("out") and args.command in DISPATCH:
            raise UsageError("an output directory is required (--out)")
        echo_config(config)
        return DISPATCH[args.command](config)
    except UsageError as exc:
        _report(config, exc, 2)
        return 2
    except DataError as exc:
        _report(config, exc, 3)
        return 3
    except HybridTvpError as exc:
        _report(config, exc, 4)
        return 4


def _report(config, exc, code):
    print(f"error: {exc}", file=sys.stderr)
    out = (config or {}).get("out")
    if out:
        try:
            os.makedirs(out, exist_ok=True)
            write_json(os.path.join(out, "error.json"),
                       {"error": type(exc).__name__, "message": str(exc),
                        "exit_code": code})
        except OSError:
            pass


if __name__ == "__main__":
    sys.exit(main())
