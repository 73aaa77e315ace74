"""Panel ingestion, transform codes, and run configuration.

CSV layout: first column ISO dates, header row of variable names, and an
optional second header row of integer transform codes (detected by a
non-date first cell). Codes follow the FRED-MD convention subset used
here: 1 none, 2 first difference, 4 log, 5 log first difference,
7 first difference of the period-on-period ratio change.

Run configuration is a sectioned key-value (INI) file; every pipeline
parameter has a key, with defaults matching the estimation design
(L=12, J=7, iota=0.1, lambda=10*iota, 250 trees, 30,000/15,000 draws,
40 training observations).
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .bart import BartPrior
from .favar import ConfigError, FavarConfig, PanelData
from .sim import DgpSpec, ExperimentConfig

VALID_CODES = (1, 2, 4, 5, 7)


class DataError(ValueError):
    """Malformed input data (named row/variable where possible)."""


def apply_transform(series, code: int) -> np.ndarray:
    """Apply one FRED-MD-style transform; differencing aligns to later dates.

    Codes 2 and 5 shorten the series by one, code 7 by two.
    """
    if code not in VALID_CODES:
        raise DataError(f"unknown transform code {code}; valid: {VALID_CODES}")
    x = np.asarray(series, dtype=float)
    if code == 1:
        return x.copy()
    if code == 2:
        return np.diff(x)
    if code in (4, 5, 7):
        bad = np.flatnonzero(x <= 0)
        if bad.size:
            raise DataError(f"non-positive value at row {int(bad[0])} under transform code {code}")
    if code == 4:
        return np.log(x)
    if code == 5:
        return np.diff(np.log(x))
    # code 7: first difference of the gross-rate change
    return np.diff(x[1:] / x[:-1] - 1.0)


def transform_offset(code: int) -> int:
    """Rows lost at the start of the series by the transform."""
    return {1: 0, 2: 1, 4: 0, 5: 1, 7: 2}[code]


def _parse_dates(values, path):
    try:
        return pd.to_datetime(list(values), format="ISO8601")
    except (ValueError, TypeError):
        try:
            return pd.to_datetime(list(values))
        except (ValueError, TypeError) as err:
            raise DataError(f"unparseable dates in {path}: {err}") from err


def load_panel(path, z_name: str | None = None, codes: list[int] | None = None,
               z_code_override: int | None = None) -> PanelData:
    """Read a dated CSV panel, apply transforms, standardize, single out Z.

    ``codes`` overrides the file's code row; ``z_code_override`` lets the
    observed-factor column use a different transform than its code row
    entry (levels for forecasting runs, log difference for structural
    runs).
    """
    raw = pd.read_csv(path, header=0, dtype=str)
    if raw.shape[1] < 2:
        raise DataError(f"{path}: need a date column plus at least one variable")
    names = [c.strip() for c in raw.columns[1:]]

    first_cell = str(raw.iloc[0, 0]).strip().lower()
    has_code_row = False
    if first_cell in ("", "nan", "tcode", "code", "transform"):
        has_code_row = True
    else:
        try:
            pd.to_datetime(raw.iloc[0, 0])
        except (ValueError, TypeError):
            has_code_row = True

    file_codes = None
    if has_code_row:
        try:
            file_codes = [int(float(v)) for v in raw.iloc[0, 1:]]
        except ValueError as err:
            raise DataError(f"{path}: malformed transform-code row: {err}") from err
        raw = raw.iloc[1:]

    if codes is None:
        codes = file_codes if file_codes is not None else [1] * len(names)
    if len(codes) != len(names):
        raise DataError(f"{path}: {len(codes)} codes for {len(names)} variables")

    dates = _parse_dates(raw.iloc[:, 0], path)
    try:
        values = raw.iloc[:, 1:].astype(float).to_numpy()
    except ValueError as err:
        raise DataError(f"{path}: non-numeric cell: {err}") from err
    if np.isnan(values).any():
        rows, cols = np.nonzero(np.isnan(values))
        raise DataError(
            f"{path}: missing value for {names[cols[0]]} at {dates[rows[0]].date()}"
        )

    z_idx = None
    if z_name is not None:
        if z_name not in names:
            raise DataError(f"{path}: observed-factor column {z_name!r} not found")
        z_idx = names.index(z_name)

    transformed = []
    offsets = []
    for j, name in enumerate(names):
        code = codes[j]
        if j == z_idx and z_code_override is not None:
            code = z_code_override
        try:
            transformed.append(apply_transform(values[:, j], code))
        except DataError as err:
            raise DataError(f"{path}: variable {name}: {err}") from err
        offsets.append(transform_offset(code))

    # panel start is the max over variables' first usable dates
    start = max(offsets)
    aligned = np.column_stack([
        series[start - off :] if start > off else series
        for series, off in zip(transformed, offsets)
    ])
    out_dates = list(dates[start:])
    first_usable = {name: dates[off] for name, off in zip(names, offsets)}

    if z_idx is not None:
        z_values = aligned[:, z_idx]
        keep = [j for j in range(len(names)) if j != z_idx]
        panel = PanelData.from_raw(
            aligned[:, keep], z_values,
            names=[names[j] for j in keep],
            transform_codes=[codes[j] for j in keep],
            dates=out_dates, z_name=z_name,
        )
    else:
        panel = PanelData.from_raw(aligned, names=names, transform_codes=codes, dates=out_dates)
    panel.first_usable = first_usable
    return panel


def load_instrument_series(path) -> tuple[list, np.ndarray]:
    """Two-column dated series file: dates plus instrument values."""
    raw = pd.read_csv(path, header=0, dtype=str)
    if raw.shape[1] != 2:
        raise DataError(f"{path}: instrument file must have exactly two columns")
    dates = _parse_dates(raw.iloc[:, 0], path)
    try:
        values = raw.iloc[:, 1].astype(float).to_numpy()
    except ValueError as err:
        raise DataError(f"{path}: non-numeric instrument value: {err}") from err
    return list(dates), values


def align_instrument(inst_dates, inst_values, panel_dates) -> np.ndarray:
    """Instrument values re-indexed to panel dates; NaN where unavailable."""
    lookup = {pd.Timestamp(d): v for d, v in zip(inst_dates, inst_values)}
    return np.array([lookup.get(pd.Timestamp(d), np.nan) for d in panel_dates])


@dataclass
class RunConfig:
    """Typed view of the sectioned key-value run file."""

    seed: int = 0
    out_dir: str = "out"
    threads: int = 1
    panel_csv: str = ""
    z_column: str | None = None
    z_code: int | None = None
    instrument_csv: str | None = None
    favar: FavarConfig = field(default_factory=FavarConfig)
    dgp: DgpSpec = field(default_factory=DgpSpec)
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)
    mc_reps: int = 100
    mc_draws: int = 400
    mc_burn: int = 200
    mc_trees: int = 25
    mc_lags: int = 6
    forecast_horizon: int = 12
    girf_horizons: int = 40
    girf_n_sim: int = 500
    girf_shock_size: float = 0.10
    girf_shock_sign: int = 1
    girf_max_draws: int | None = 100
    girf_min_first_stage_f: float = 4.0
    girf_mirror_negative: bool = False
    eval_forecast_dir: str | None = None
    eval_actuals_csv: str | None = None
    eval_horizons: tuple = (1, 3, 12)
    eval_score_stat: str = "mean"  # or "sum"


def _get(parser, section, key, cast, default):
    if parser.has_option(section, key):
        raw = parser.get(section, key)
        if cast is bool:
            return raw.strip().lower() in ("1", "true", "yes", "on")
        return cast(raw)
    return default


def load_run_config(path) -> RunConfig:
    """Parse the INI run file into a RunConfig (usage errors -> ConfigError)."""
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read(path)
    except configparser.Error as err:
        raise ConfigError(f"malformed config {path}: {err}") from err

    cfg = RunConfig()
    cfg.seed = _get(parser, "run", "seed", int, cfg.seed)
    cfg.out_dir = _get(parser, "run", "out_dir", str, cfg.out_dir)
    cfg.threads = _get(parser, "run", "threads", int, cfg.threads)

    cfg.panel_csv = _get(parser, "data", "panel_csv", str, cfg.panel_csv)
    cfg.z_column = _get(parser, "data", "z_column", str, cfg.z_column)
    z_code = _get(parser, "data", "z_code", str, None)
    cfg.z_code = int(z_code) if z_code not in (None, "", "auto") else None
    cfg.instrument_csv = _get(parser, "data", "instrument_csv", str, cfg.instrument_csv)

    iota = _get(parser, "favar", "iota", float, 0.1)
    lam = _get(parser, "favar", "lambda_soc", float, 10.0 * iota)
    bart = BartPrior(
        alpha=_get(parser, "bart", "alpha", float, 0.95),
        beta=_get(parser, "bart", "beta", float, 2.0),
        kappa=_get(parser, "bart", "kappa", float, 2.0),
        n_trees=_get(parser, "bart", "n_trees", int, 250),
        quantile_v=_get(parser, "bart", "quantile_v", float, 0.75),
        leaf_scale_rule=_get(parser, "bart", "leaf_scale_rule", str, "range-kappa"),
    )
    cfg.favar = FavarConfig(
        n_factors=_get(parser, "favar", "n_factors", int, 7),
        n_lags=_get(parser, "favar", "n_lags", int, 12),
        n_draws=_get(parser, "favar", "n_draws", int, 30_000),
        n_burn=_get(parser, "favar", "n_burn", int, 15_000),
        thin=_get(parser, "favar", "thin", int, 5),
        training_obs=_get(parser, "favar", "training_obs", int, 40),
        iota=iota,
        lambda_soc=lam,
        bart_prior=bart,
        measurement=_get(parser, "favar", "measurement", str, "bart"),
        keep_forests=_get(parser, "favar", "keep_forests", bool, True),
    )

    ar = _get(parser, "sim", "ar_coefs", str, "0.6,-0.3,0.2")
    cfg.dgp = DgpSpec(
        intercept=_get(parser, "sim", "intercept", float, 0.0),
        ar_coefs=tuple(float(v) for v in ar.split(",")),
        innov_sd=_get(parser, "sim", "innov_sd", float, 1.0),
        n_obs=_get(parser, "sim", "n_obs", int, 300),
        n_vars=_get(parser, "sim", "n_vars", int, 20),
        loading_low=_get(parser, "sim", "loading_low", float, -0.9),
        loading_high=_get(parser, "sim", "loading_high", float, 0.9),
        idio_low=_get(parser, "sim", "idio_low", float, 0.1),
        idio_high=_get(parser, "sim", "idio_high", float, 1.0),
        kind=_get(parser, "sim", "kind", str, "linear"),
    )
    cfg.experiment = ExperimentConfig(
        n_draws=_get(parser, "sim", "chain_draws", int, 2000),
        n_burn=_get(parser, "sim", "chain_burn", int, 1000),
        thin=_get(parser, "sim", "chain_thin", int, 5),
        n_trees=_get(parser, "sim", "chain_trees", int, 50),
        n_lags=_get(parser, "sim", "chain_lags", int, 12),
        training_obs=_get(parser, "sim", "chain_training_obs", int, 40),
        eval_start=_get(parser, "sim", "eval_start", int, 100),
        rw_convention=_get(parser, "sim", "rw_convention", str, "sign-agnostic"),
        forecast_stat=_get(parser, "sim", "forecast_stat", str, "per-draw"),
    )
    cfg.mc_reps = _get(parser, "sim", "mc_reps", int, cfg.mc_reps)
    cfg.mc_draws = _get(parser, "sim", "mc_draws", int, cfg.mc_draws)
    cfg.mc_burn = _get(parser, "sim", "mc_burn", int, cfg.mc_burn)
    cfg.mc_trees = _get(parser, "sim", "mc_trees", int, cfg.mc_trees)
    cfg.mc_lags = _get(parser, "sim", "mc_lags", int, cfg.mc_lags)

    cfg.forecast_horizon = _get(parser, "forecast", "horizon", int, cfg.forecast_horizon)
    cfg.girf_horizons = _get(parser, "girf", "horizons", int, cfg.girf_horizons)
    cfg.girf_n_sim = _get(parser, "girf", "n_sim", int, cfg.girf_n_sim)
    cfg.girf_shock_size = _get(parser, "girf", "shock_size", float, cfg.girf_shock_size)
    cfg.girf_shock_sign = _get(parser, "girf", "shock_sign", int, cfg.girf_shock_sign)
    cfg.girf_max_draws = _get(parser, "girf", "max_draws", int, cfg.girf_max_draws)
    cfg.girf_min_first_stage_f = _get(parser, "girf", "min_first_stage_f", float, cfg.girf_min_first_stage_f)
    cfg.girf_mirror_negative = _get(parser, "girf", "mirror_negative", bool, cfg.girf_mirror_negative)

    cfg.eval_forecast_dir = _get(parser, "evaluate", "forecast_dir", str, cfg.eval_forecast_dir)
    cfg.eval_actuals_csv = _get(parser, "evaluate", "actuals_csv", str, cfg.eval_actuals_csv)
    horizons = _get(parser, "evaluate", "horizons", str, "1,3,12")
    cfg.eval_horizons = tuple(int(v) for v in horizons.split(","))
    cfg.eval_score_stat = _get(parser, "evaluate", "score_stat", str, cfg.eval_score_stat)

    if cfg.girf_shock_sign not in (1, -1):
        raise ConfigError("girf shock_sign must be 1 or -1")
    return cfg
