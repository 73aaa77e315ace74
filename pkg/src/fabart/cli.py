"""Command-line entry points tying the pipeline together.

Subcommands: simulate | montecarlo | estimate | forecast | girf |
evaluate, each driven by a sectioned key-value config file. Outputs land
under the configured directory in draws/, forecasts/, girf/, tables/.
Exit codes: 0 success, 1 runtime failure, 2 usage/config error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import os
import sys

import numpy as np

from . import evaluate as ev
from .data import DataError, align_instrument, load_instrument_series, load_panel, load_run_config
from .favar import ConfigError, FavarConfig, forecast as favar_forecast, load_chain, run_chain, save_chain
from .identify import Instrument, girf as run_girf
from .sim import (
    KINDS,
    format_rmse_table,
    monte_carlo,
    recursive_forecast_experiment,
    simulate_factor,
    simulate_panel,
)

SUBCOMMANDS = ("simulate", "montecarlo", "estimate", "forecast", "girf", "evaluate")


def _ensure_dirs(out_dir):
    for sub in ("draws", "forecasts", "girf", "tables"):
        os.makedirs(os.path.join(out_dir, sub), exist_ok=True)


def _write_matrix(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _load_run_panel(cfg):
    if not cfg.panel_csv:
        raise ConfigError("[data] panel_csv is required for this subcommand")
    return load_panel(cfg.panel_csv, z_name=cfg.z_column, z_code_override=cfg.z_code)


def cmd_simulate(cfg):
    from dataclasses import replace

    out = cfg.out_dir
    factor_rng = np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(3)[0])
    F = simulate_factor(cfg.dgp, factor_rng)
    _write_matrix(os.path.join(out, "tables", "true_factor.csv"), ["t", "factor"],
                  [(t, repr(float(v))) for t, v in enumerate(F)])

    panel_ss = np.random.SeedSequence(cfg.seed).spawn(3)[1]
    for kind in KINDS:
        X, B, R = simulate_panel(F, replace(cfg.dgp, kind=kind), np.random.default_rng(panel_ss))
        header = ["t"] + [f"x{j + 1}" for j in range(X.shape[1])]
        rows = [[t] + [repr(float(v)) for v in X[t]] for t in range(X.shape[0])]
        _write_matrix(os.path.join(out, "tables", f"panel_{kind}.csv"), header, rows)
    print(f"simulate: wrote true factor and {len(KINDS)} panels (T={cfg.dgp.n_obs}, N={cfg.dgp.n_vars})")

    result = recursive_forecast_experiment(cfg.dgp, cfg.seed, cfg.experiment)
    table_path = os.path.join(out, "tables", "rmse_ratios.csv")
    with open(table_path, "w") as fh:
        fh.write(format_rmse_table(result["ratios"]))
    raw_path = os.path.join(out, "tables", "rmse_raw.csv")
    with open(raw_path, "w") as fh:
        fh.write(format_rmse_table(result["raw_rmse"]))
    ratios = {k: round(v["FABART"], 3) for k, v in result["ratios"].items()}
    print(f"simulate: forecast experiment done, FABART/RW ratios {ratios}")
    return 0


def cmd_montecarlo(cfg):
    from fabart.bart import BartPrior

    chain_config = FavarConfig(
        n_factors=1, n_lags=cfg.mc_lags, n_draws=cfg.mc_draws, n_burn=cfg.mc_burn,
        thin=2, training_obs=cfg.favar.training_obs,
        bart_prior=BartPrior(n_trees=cfg.mc_trees), measurement="bart",
        keep_forests=False, threads=cfg.threads,
    )
    rng = np.random.default_rng(cfg.seed)
    out = monte_carlo(cfg.dgp, cfg.mc_reps, rng, chain_config)
    path = os.path.join(cfg.out_dir, "tables", f"mc_correlations_{cfg.dgp.kind}.csv")
    _write_matrix(path, ["rep", "correlation"],
                  [(i, repr(float(c))) for i, c in enumerate(out["correlations"])])
    print(
        f"montecarlo: {cfg.mc_reps} reps ({cfg.dgp.kind}), mean correlation "
        f"{out['mean_correlation']:.4f}, error grand mean {out['error_grand_mean']:+.4f}"
    )
    return 0


def cmd_estimate(cfg):
    panel = _load_run_panel(cfg)
    favar_cfg = dataclasses.replace(cfg.favar, threads=cfg.threads)
    result = run_chain(panel, favar_cfg, np.random.default_rng(cfg.seed))
    draws_dir = os.path.join(cfg.out_dir, "draws")
    save_chain(result, draws_dir)
    sig = result.diagnostics["sigma_mean"]
    print(
        f"estimate: retained {len(result.draws)} draws "
        f"(T={panel.n_obs}, N={panel.n_vars}, J={favar_cfg.n_factors}); "
        f"mean measurement sd {np.mean(sig):.4f}"
    )
    return 0


def _target_labels(panel, horizon):
    if panel.dates is None:
        T = panel.n_obs
        return [str(T + h) for h in range(1, horizon + 1)]
    import pandas as pd

    last = pd.Timestamp(panel.dates[-1])
    return [(last + pd.DateOffset(months=h)).strftime("%Y-%m-%d") for h in range(1, horizon + 1)]


def cmd_forecast(cfg):
    panel = _load_run_panel(cfg)
    result = load_chain(os.path.join(cfg.out_dir, "draws"), panel, cfg.favar)
    ens = favar_forecast(result, cfg.forecast_horizon, np.random.default_rng(cfg.seed + 1))
    origin_dir = os.path.join(cfg.out_dir, "forecasts", "origin_final")
    os.makedirs(origin_dir, exist_ok=True)
    labels = _target_labels(panel, cfg.forecast_horizon)
    _write_matrix(os.path.join(origin_dir, "meta.csv"), ["horizon", "target_label"],
                  [(h + 1, labels[h]) for h in range(cfg.forecast_horizon)])
    header = [f"h{h + 1}" for h in range(cfg.forecast_horizon)]
    for j, name in enumerate(panel.names):
        rows = [[repr(float(v)) for v in ens["observables"][g, :, j]]
                for g in range(ens["observables"].shape[0])]
        _write_matrix(os.path.join(origin_dir, f"{name}.csv"), header, rows)
    if "z" in ens:
        zname = panel.z_name or "z"
        rows = [[repr(float(v)) for v in ens["z"][g]] for g in range(ens["z"].shape[0])]
        _write_matrix(os.path.join(origin_dir, f"{zname}.csv"), header, rows)
    print(
        f"forecast: wrote {ens['observables'].shape[0]}-draw ensembles for "
        f"{len(panel.names) + (1 if 'z' in ens else 0)} variables, horizon {cfg.forecast_horizon}"
    )
    return 0


def cmd_girf(cfg):
    panel = _load_run_panel(cfg)
    if cfg.instrument_csv is None:
        raise ConfigError("[data] instrument_csv is required for the girf subcommand")
    inst_dates, inst_values = load_instrument_series(cfg.instrument_csv)
    if panel.dates is not None:
        values = align_instrument(inst_dates, inst_values, panel.dates)
    else:
        values = inst_values
    instrument = Instrument(values)
    result = load_chain(os.path.join(cfg.out_dir, "draws"), panel, cfg.favar)
    out = run_girf(
        result, instrument,
        shock_size=cfg.girf_shock_size, shock_sign=cfg.girf_shock_sign,
        horizons=cfg.girf_horizons, n_sim=cfg.girf_n_sim,
        rng=np.random.default_rng(cfg.seed + 2), max_draws=cfg.girf_max_draws,
        mirror_negative=cfg.girf_mirror_negative,
        min_first_stage_f=cfg.girf_min_first_stage_f,
    )
    path = os.path.join(cfg.out_dir, "girf", "girf_table.csv")
    with open(path, "w") as fh:
        fh.write(out.to_table())
    used = len(next(iter(out.responses.values())))
    print(
        f"girf: {used} draws used, {out.n_excluded_explosive} explosive and "
        f"{out.n_excluded_weak} weak-instrument draws excluded"
    )
    return 0


def _read_ensemble_csv(path):
    with open(path) as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = np.array([[float(v) for v in row] for row in reader])
    return header, rows


def cmd_evaluate(cfg):
    forecast_root = cfg.eval_forecast_dir or os.path.join(cfg.out_dir, "forecasts")
    if cfg.eval_actuals_csv is None:
        raise ConfigError("[evaluate] actuals_csv is required for the evaluate subcommand")
    import pandas as pd

    actuals = pd.read_csv(cfg.eval_actuals_csv, dtype={0: str})
    actuals.iloc[:, 0] = actuals.iloc[:, 0].astype(str).str.strip()
    actuals = actuals.set_index(actuals.columns[0])

    origins = sorted(
        d for d in os.listdir(forecast_root)
        if os.path.isdir(os.path.join(forecast_root, d)) and d.startswith("origin_")
    )
    if not origins:
        raise DataError(f"no origin_* forecast directories under {forecast_root}")

    records = {}
    score_series = {}
    n_floored = 0
    for origin in origins:
        origin_dir = os.path.join(forecast_root, origin)
        with open(os.path.join(origin_dir, "meta.csv")) as fh:
            reader = csv.reader(fh)
            next(reader)
            targets = {int(h): label for h, label in reader}
        for fname in sorted(os.listdir(origin_dir)):
            if not fname.endswith(".csv") or fname == "meta.csv":
                continue
            var = fname[:-4]
            if var not in actuals.columns:
                continue
            _, draws = _read_ensemble_csv(os.path.join(origin_dir, fname))
            for h in cfg.eval_horizons:
                if h < 1 or h > draws.shape[1]:
                    continue
                label = targets.get(h)
                if label is None or label not in actuals.index:
                    continue
                realized = float(actuals.loc[label, var])
                ensemble = draws[:, h - 1]
                err = float(np.mean(ensemble)) - realized
                score = ev.log_score(ensemble, realized)
                if score <= ev.LOG_SCORE_FLOOR:
                    n_floored += 1
                records.setdefault((var, h), []).append((err, score))
                score_series.setdefault((var, h), []).append((origin, score))

    if not records:
        raise DataError("no (variable, horizon) pairs matched between forecasts and actuals")

    table_rows = []
    for (var, h), pairs in sorted(records.items()):
        errs = np.array([p[0] for p in pairs])
        scores = np.array([p[1] for p in pairs])
        ls = scores.mean() if cfg.eval_score_stat == "mean" else scores.sum()
        table_rows.append([var, h, repr(float(np.sqrt(np.mean(errs**2)))),
                           repr(float(ls)), len(pairs), n_floored])
    _write_matrix(os.path.join(cfg.out_dir, "tables", "forecast_eval.csv"),
                  ["variable", "horizon", "rmse", "log_score", "n_origins", "n_floored"],
                  table_rows)

    for (var, h), series in sorted(score_series.items()):
        scores = np.array([s for _, s in series])
        cum = ev.cumulative_abs_log_scores(scores)
        _write_matrix(
            os.path.join(cfg.out_dir, "tables", f"log_scores_{var}_h{h}.csv"),
            ["origin", "log_score", "cumulative_abs_log_score"],
            [(origin, repr(float(s)), repr(float(c))) for (origin, s), c in zip(series, cum)],
        )
    print(f"evaluate: scored {len(records)} variable/horizon pairs over {len(origins)} origins "
          f"({n_floored} floored log scores)")
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "montecarlo": cmd_montecarlo,
    "estimate": cmd_estimate,
    "forecast": cmd_forecast,
    "girf": cmd_girf,
    "evaluate": cmd_evaluate,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="fabart", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="path to the run config file")
        p.add_argument("--seed", type=int, default=None, help="override [run] seed")
        p.add_argument("--threads", type=int, default=None, help="override [run] threads")
        p.add_argument("--out-dir", default=None, help="override [run] out_dir")
    return parser


def cli_dispatch(argv) -> int:
    """Run one subcommand; returns the process exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return 2 if err.code not in (0, None) else 0
    try:
        cfg = load_run_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.threads is not None:
            cfg.threads = args.threads
        if args.out_dir is not None:
            cfg.out_dir = args.out_dir
        _ensure_dirs(cfg.out_dir)
        return COMMANDS[args.command](cfg)
    except (ConfigError, DataError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except Exception as err:  # runtime failure
        print(f"error: {err}", file=sys.stderr)
        return 1


def main():
    sys.exit(cli_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
