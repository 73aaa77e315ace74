"""Regenerate the bundled 10-variable synthetic panel fixture.

Writes tests/fixtures/{minifred.csv, minifred_instrument.csv,
minifred_actuals.csv, minifred.ini}. The panel mimics a monthly
macro-financial layout: an observed oil-price series driven by a
persistent shock, a handful of real/nominal indicators loading on two
latent factors, and an instrument correlated with the oil shock over a
late subsample. Deterministic; run from the repository root.
"""

import os

import numpy as np
import pandas as pd

HERE = os.path.dirname(os.path.abspath(__file__))
FIXDIR = os.path.join(HERE, "..", "tests", "fixtures")

T = 220
H_ACTUALS = 12
START = "1998-01-01"


def main():
    rng = np.random.default_rng(20240901)
    dates = pd.date_range(START, periods=T + H_ACTUALS, freq="MS")

    # two latent factors + the oil shock
    e_oil = rng.normal(size=T + H_ACTUALS)
    f1 = np.zeros(T + H_ACTUALS)
    f2 = np.zeros(T + H_ACTUALS)
    oil = np.zeros(T + H_ACTUALS)
    for t in range(1, T + H_ACTUALS):
        oil[t] = 0.85 * oil[t - 1] + e_oil[t]
        f1[t] = 0.7 * f1[t - 1] - 0.25 * oil[t - 1] + rng.normal()
        f2[t] = 0.5 * f2[t - 1] + 0.15 * oil[t - 1] + rng.normal()

    def level_series(base, trend, signal, scale, noise):
        drift = trend * np.arange(T + H_ACTUALS)
        return base * np.exp(0.002 * (drift + scale * signal + noise * rng.normal(size=T + H_ACTUALS)))

    cols = {
        "real_oil": 40.0 + 6.0 * oil + rng.normal(scale=1.0, size=T + H_ACTUALS),  # code 1
        "indpro": level_series(95.0, 1.0, 4.0 * f1 - 1.5 * oil, 1.0, 1.0),  # code 5
        "payrolls": level_series(130.0, 1.2, 3.0 * f1, 1.0, 0.7),  # code 5
        "cpi": level_series(80.0, 1.5, 1.2 * f2 + 0.8 * oil, 1.0, 0.5),  # code 5
        "ffr": 3.0 + 0.8 * f2 + 0.3 * f1 + rng.normal(scale=0.3, size=T + H_ACTUALS),  # code 2
        "spread": 1.5 - 0.5 * f1 + rng.normal(scale=0.4, size=T + H_ACTUALS),  # code 1
        "sp500": level_series(900.0, 2.0, 5.0 * f1 - 2.0 * f2, 1.0, 2.0),  # code 5
        "housing": level_series(1300.0, 0.5, 6.0 * f1, 1.0, 3.0),  # code 4
        "m2": level_series(4000.0, 2.5, 1.0 * f2, 1.0, 0.8),  # code 5
        "reserves": level_series(60.0, 1.8, 2.0 * f2, 1.0, 2.5),  # code 7
    }
    codes = {"real_oil": 1, "indpro": 5, "payrolls": 5, "cpi": 5, "ffr": 2,
             "spread": 1, "sp500": 5, "housing": 4, "m2": 5, "reserves": 7}

    frame = pd.DataFrame(cols, index=dates)
    os.makedirs(FIXDIR, exist_ok=True)

    panel = frame.iloc[:T]
    with open(os.path.join(FIXDIR, "minifred.csv"), "w") as fh:
        fh.write("date," + ",".join(frame.columns) + "\n")
        fh.write("tcode," + ",".join(str(codes[c]) for c in frame.columns) + "\n")
        for date, row in panel.iterrows():
            fh.write(date.strftime("%Y-%m-%d") + "," + ",".join(f"{v:.6f}" for v in row) + "\n")

    # instrument: oil shock plus noise, available over the last 140 months
    inst = e_oil[:T] + rng.normal(scale=1.0, size=T)
    avail_from = T - 140
    with open(os.path.join(FIXDIR, "minifred_instrument.csv"), "w") as fh:
        fh.write("date,instrument\n")
        for t in range(avail_from, T):
            fh.write(dates[t].strftime("%Y-%m-%d") + f",{inst[t]:.6f}\n")

    # realized continuation in transformed units, matching forecast targets
    actual_rows = []
    for h in range(1, H_ACTUALS + 1):
        t = T - 1 + h
        label = dates[t].strftime("%Y-%m-%d")
        row = {"date": label}
        for name in frame.columns:
            x = frame[name].to_numpy()
            code = codes[name]
            if code == 1:
                row[name] = x[t]
            elif code == 2:
                row[name] = x[t] - x[t - 1]
            elif code == 4:
                row[name] = np.log(x[t])
            elif code == 5:
                row[name] = np.log(x[t]) - np.log(x[t - 1])
            else:  # 7
                row[name] = (x[t] / x[t - 1] - 1.0) - (x[t - 1] / x[t - 2] - 1.0)
        actual_rows.append(row)
    pd.DataFrame(actual_rows).to_csv(
        os.path.join(FIXDIR, "minifred_actuals.csv"), index=False, float_format="%.8f"
    )

    ini = """# mini panel end-to-end fixture: small chain, every subcommand
[run]
seed = 7
out_dir = out
threads = 1

[data]
panel_csv = tests/fixtures/minifred.csv
z_column = real_oil
instrument_csv = tests/fixtures/minifred_instrument.csv

[favar]
n_factors = 2
n_lags = 3
n_draws = 260
n_burn = 140
thin = 1
training_obs = 30
iota = 0.1
measurement = bart
keep_forests = true

[bart]
n_trees = 15
alpha = 0.95
beta = 2.0
kappa = 2.0

[sim]
n_obs = 160
n_vars = 8
chain_draws = 60
chain_burn = 30
chain_thin = 2
chain_trees = 8
chain_lags = 4
chain_training_obs = 25
eval_start = 60
mc_reps = 2
mc_draws = 60
mc_burn = 30
mc_trees = 8
mc_lags = 3

[forecast]
horizon = 6

[girf]
horizons = 8
n_sim = 100
shock_size = 0.10
max_draws = 20
min_first_stage_f = 4.0

[evaluate]
actuals_csv = tests/fixtures/minifred_actuals.csv
horizons = 1,3,6
"""
    with open(os.path.join(FIXDIR, "minifred.ini"), "w") as fh:
        fh.write(ini)
    print(f"fixtures written to {os.path.normpath(FIXDIR)}")


if __name__ == "__main__":
    main()
