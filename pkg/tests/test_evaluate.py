import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fabart.evaluate import (
    LOG_SCORE_FLOOR,
    PredictiveEnsemble,
    cumulative_abs_log_scores,
    log_score,
    rmse,
    rw_benchmark,
    silverman_bandwidth,
)


class TestRmse:
    def test_perfect_forecast(self):
        assert rmse([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 0.0

    def test_known_errors(self):
        # errors (3, -4) -> sqrt(25/2)
        assert rmse([3.0, -4.0], [0.0, 0.0]) == pytest.approx(3.5355, abs=1e-4)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            rmse([1.0], [1.0, 2.0])

    def test_empty(self):
        with pytest.raises(ValueError):
            rmse([], [])


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(1, 50))
def test_rmse_matches_two_pass_recomputation(seed, n):
    rng = np.random.default_rng(seed)
    f, a = rng.normal(size=n), rng.normal(size=n)
    direct = math.sqrt(sum((x - y) ** 2 for x, y in zip(f, a)) / n)
    assert rmse(f, a) == pytest.approx(direct, rel=1e-12)


class TestLogScore:
    def test_gaussian_density_oracle(self):
        rng = np.random.default_rng(0)
        draws = rng.standard_normal(100_000)
        got = log_score(draws, 0.0)
        assert abs(got - math.log(1.0 / math.sqrt(2 * math.pi))) < 0.02

    def test_mode_beats_tail(self):
        rng = np.random.default_rng(1)
        draws = rng.standard_normal(5_000)
        assert log_score(draws, float(draws.mean())) > log_score(draws, 8.0)

    def test_determinism(self):
        rng = np.random.default_rng(2)
        draws = rng.standard_normal(2_000)
        assert log_score(draws, 0.3) == log_score(draws.copy(), 0.3)

    def test_zero_variance_rejected(self):
        with pytest.raises(ValueError):
            log_score(np.ones(500), 1.0)

    def test_floor_far_outside_support(self):
        rng = np.random.default_rng(3)
        draws = rng.standard_normal(1_000)
        assert log_score(draws, 1e6) == pytest.approx(LOG_SCORE_FLOOR)

    def test_floor_inactive_on_calibrated_ensemble(self):
        rng = np.random.default_rng(4)
        draws = rng.standard_normal(10_000)
        for realized in rng.standard_normal(50):
            assert log_score(draws, float(realized)) > LOG_SCORE_FLOOR

    def test_explicit_bandwidth(self):
        rng = np.random.default_rng(5)
        draws = rng.standard_normal(1_000)
        got = log_score(draws, 0.0, bandwidth=0.25)
        z = (0.0 - draws) / 0.25
        direct = math.log(np.mean(np.exp(-0.5 * z**2)) / (0.25 * math.sqrt(2 * math.pi)))
        assert got == pytest.approx(direct, rel=1e-12)

    def test_silverman_bandwidth_formula(self):
        rng = np.random.default_rng(6)
        draws = rng.standard_normal(4_000)
        sd = draws.std()
        iqr = np.percentile(draws, 75) - np.percentile(draws, 25)
        expected = 0.9 * min(sd, iqr / 1.34) * 4_000 ** (-0.2)
        assert silverman_bandwidth(draws) == pytest.approx(expected, rel=1e-12)


class TestCumulativeScores:
    def test_known_values(self):
        assert np.allclose(cumulative_abs_log_scores([-1.0, -2.0]), [1.0, 3.0])

    def test_all_zero(self):
        assert np.allclose(cumulative_abs_log_scores(np.zeros(5)), np.zeros(5))

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 10_000), n=st.integers(1, 40))
    def test_prefix_sum_recomputation(self, seed, n):
        rng = np.random.default_rng(seed)
        scores = rng.normal(size=n)
        got = cumulative_abs_log_scores(scores)
        acc, expected = 0.0, []
        for s in scores:
            acc += abs(s)
            expected.append(acc)
        assert np.allclose(got, expected)


class TestRwBenchmark:
    def test_constant_series_zero_error(self):
        series = np.full(10, 3.0)
        forecasts = rw_benchmark(series, 2)
        assert rmse(forecasts, series[2:]) == 0.0

    def test_h1_alignment(self):
        assert np.allclose(rw_benchmark([1.0, 2.0, 3.0], 1), [1.0, 2.0])

    def test_insufficient_history(self):
        with pytest.raises(ValueError):
            rw_benchmark([1.0, 2.0], 2)

    def test_rmse_on_ar_data_matches_direct(self):
        rng = np.random.default_rng(7)
        y = np.zeros(500)
        for t in range(1, 500):
            y[t] = 0.6 * y[t - 1] + rng.normal()
        forecasts = rw_benchmark(y, 1)
        direct = math.sqrt(np.mean((y[1:] - y[:-1]) ** 2))
        assert rmse(forecasts, y[1:]) == pytest.approx(direct, rel=1e-12)


def test_predictive_ensemble_minimum_draws():
    with pytest.raises(ValueError):
        PredictiveEnsemble(np.zeros(50))
    ens = PredictiveEnsemble(np.random.default_rng(0).standard_normal(200),
                             target_name="indpro", horizon=3)
    assert ens.draws.shape == (200,)
    assert log_score(ens, 0.0) > LOG_SCORE_FLOOR
