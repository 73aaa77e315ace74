import math
import os

import numpy as np
import pytest

from fabart.data import (
    DataError,
    align_instrument,
    apply_transform,
    load_instrument_series,
    load_panel,
    load_run_config,
    transform_offset,
)
from fabart.favar import ConfigError

FIXDIR = os.path.join(os.path.dirname(__file__), "fixtures")


class TestApplyTransform:
    def test_identity(self):
        assert np.allclose(apply_transform([1.0, 2.0, 3.0], 1), [1.0, 2.0, 3.0])

    def test_first_difference(self):
        assert np.allclose(apply_transform([5.0, 7.0, 4.0], 2), [2.0, -3.0])

    def test_log(self):
        assert np.allclose(apply_transform([1.0, math.e], 4), [0.0, 1.0])

    def test_log_difference_geometric(self):
        series = [1.0, math.e, math.e**2]
        assert np.allclose(apply_transform(series, 5), [1.0, 1.0])

    def test_code7_ratio_change_difference(self):
        x = np.array([100.0, 110.0, 99.0, 108.9])
        expected = np.diff(x[1:] / x[:-1] - 1.0)
        got = apply_transform(x, 7)
        assert got.shape == (2,)
        assert np.allclose(got, expected)

    def test_nonpositive_under_log_names_row(self):
        with pytest.raises(DataError, match="row 2"):
            apply_transform([1.0, 2.0, -3.0], 5)

    def test_unknown_code(self):
        with pytest.raises(DataError):
            apply_transform([1.0], 3)

    def test_offsets(self):
        assert [transform_offset(c) for c in (1, 2, 4, 5, 7)] == [0, 1, 0, 1, 2]


def write_csv(path, text):
    with open(path, "w") as fh:
        fh.write(text)
    return str(path)


class TestLoadPanel:
    def test_toy_identity_panel(self, tmp_path):
        path = write_csv(tmp_path / "p.csv", (
            "date,a,b,c\n"
            "2020-01-01,1.0,4.0,0.5\n"
            "2020-02-01,2.0,5.0,0.7\n"
            "2020-03-01,3.0,6.0,0.2\n"
            "2020-04-01,2.5,5.5,0.4\n"
        ))
        panel = load_panel(path)
        assert panel.X.shape == (4, 3)
        assert panel.names == ["a", "b", "c"]
        assert panel.transform_codes == [1, 1, 1]
        # standardization round trip
        back = panel.destandardize_x(panel.X)
        assert np.max(np.abs(back[:, 0] - [1.0, 2.0, 3.0, 2.5])) < 1e-10

    def test_code_row_detected_and_applied(self, tmp_path):
        path = write_csv(tmp_path / "p.csv", (
            "date,a,b\n"
            "tcode,1,2\n"
            "2020-01-01,1.0,10.0\n"
            "2020-02-01,2.0,12.0\n"
            "2020-03-01,3.0,15.0\n"
        ))
        panel = load_panel(path)
        # differencing trims the first row; later dates kept
        assert panel.X.shape == (2, 2)
        assert panel.dates[0].strftime("%Y-%m") == "2020-02"
        back = panel.destandardize_x(panel.X)
        assert np.allclose(back[:, 1], [2.0, 3.0])
        # per-variable first usable dates reported; panel start is their max
        assert panel.first_usable["a"].strftime("%Y-%m") == "2020-01"
        assert panel.first_usable["b"].strftime("%Y-%m") == "2020-02"

    def test_negative_under_log_names_variable(self, tmp_path):
        path = write_csv(tmp_path / "p.csv", (
            "date,a,b\n"
            "tcode,1,5\n"
            "2020-01-01,1.0,10.0\n"
            "2020-02-01,2.0,-1.0\n"
            "2020-03-01,3.0,12.0\n"
        ))
        with pytest.raises(DataError, match="variable b"):
            load_panel(path)

    def test_missing_value_named(self, tmp_path):
        path = write_csv(tmp_path / "p.csv", (
            "date,a,b\n"
            "2020-01-01,1.0,10.0\n"
            "2020-02-01,,11.0\n"
        ))
        with pytest.raises(DataError, match="a"):
            load_panel(path)

    def test_z_column_extracted(self, tmp_path):
        path = write_csv(tmp_path / "p.csv", (
            "date,oil,a,b\n"
            "2020-01-01,30.0,1.0,5.0\n"
            "2020-02-01,32.0,2.0,6.0\n"
            "2020-03-01,29.0,3.0,4.0\n"
        ))
        panel = load_panel(path, z_name="oil")
        assert panel.Z is not None
        assert panel.names == ["a", "b"]
        assert np.allclose(panel.destandardize_z(panel.Z), [30.0, 32.0, 29.0])

    def test_z_code_override(self, tmp_path):
        path = write_csv(tmp_path / "p.csv", (
            "date,oil,a\n"
            "tcode,1,1\n"
            "2020-01-01,1.0,1.0\n"
            "2020-02-01,2.7182818284590451,2.0\n"
            "2020-03-01,20.085536923187668,3.0\n"
        ))
        panel = load_panel(path, z_name="oil", z_code_override=5)
        assert np.allclose(panel.destandardize_z(panel.Z), [1.0, 2.0])

    def test_missing_z_column(self, tmp_path):
        path = write_csv(tmp_path / "p.csv", "date,a\n2020-01-01,1.0\n2020-02-01,2.0\n")
        with pytest.raises(DataError, match="oil"):
            load_panel(path, z_name="oil")

    def test_bad_dates(self, tmp_path):
        path = write_csv(tmp_path / "p.csv", "date,a\nnonsense-date,1.0\nworse,2.0\n")
        with pytest.raises(DataError):
            load_panel(path)

    def test_mini_fixture_loads(self):
        panel = load_panel(os.path.join(FIXDIR, "minifred.csv"), z_name="real_oil")
        assert panel.n_vars == 9
        assert panel.Z is not None
        # code 7 on reserves drops two leading rows from the common window
        assert panel.n_obs == 218


class TestInstrument:
    def test_load_and_align(self, tmp_path):
        path = write_csv(tmp_path / "inst.csv", (
            "date,instrument\n"
            "2020-02-01,0.5\n"
            "2020-03-01,-0.2\n"
        ))
        dates, values = load_instrument_series(path)
        panel_dates = [np.datetime64("2020-01-01"), np.datetime64("2020-02-01"),
                       np.datetime64("2020-03-01"), np.datetime64("2020-04-01")]
        aligned = align_instrument(dates, values, panel_dates)
        assert np.isnan(aligned[0]) and np.isnan(aligned[3])
        assert aligned[1] == 0.5 and aligned[2] == -0.2

    def test_wrong_shape(self, tmp_path):
        path = write_csv(tmp_path / "inst.csv", "date,a,b\n2020-01-01,1,2\n")
        with pytest.raises(DataError):
            load_instrument_series(path)


class TestRunConfig:
    def test_defaults_match_design_values(self, tmp_path):
        path = write_csv(tmp_path / "c.ini", "[run]\nseed = 3\n")
        cfg = load_run_config(path)
        assert cfg.seed == 3
        assert cfg.favar.n_factors == 7
        assert cfg.favar.n_lags == 12
        assert cfg.favar.n_draws == 30_000
        assert cfg.favar.n_burn == 15_000
        assert cfg.favar.iota == pytest.approx(0.1)
        assert cfg.favar.lambda_soc == pytest.approx(1.0)  # 10 * iota
        assert cfg.favar.training_obs == 40
        assert cfg.favar.bart_prior.n_trees == 250
        assert cfg.favar.bart_prior.alpha == pytest.approx(0.95)
        assert cfg.favar.bart_prior.beta == pytest.approx(2.0)
        assert cfg.dgp.ar_coefs == (0.6, -0.3, 0.2)
        assert cfg.dgp.n_obs == 300
        assert cfg.dgp.n_vars == 20
        assert cfg.girf_n_sim == 500
        assert cfg.girf_horizons == 40
        assert cfg.girf_shock_size == pytest.approx(0.10)

    def test_lambda_follows_iota(self, tmp_path):
        path = write_csv(tmp_path / "c.ini", "[favar]\niota = 0.2\n")
        cfg = load_run_config(path)
        assert cfg.favar.lambda_soc == pytest.approx(2.0)

    def test_missing_file(self):
        with pytest.raises(ConfigError):
            load_run_config("/nonexistent/config.ini")

    def test_fixture_config_parses(self):
        cfg = load_run_config(os.path.join(FIXDIR, "minifred.ini"))
        assert cfg.z_column == "real_oil"
        assert cfg.favar.n_factors == 2
        assert cfg.experiment.n_trees == 8
        assert cfg.eval_horizons == (1, 3, 6)
