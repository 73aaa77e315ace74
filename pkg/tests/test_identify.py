import numpy as np
import pytest

from fabart.bart import BartPrior
from fabart.favar import ChainDraw, ChainResult, FavarConfig, PanelData, StateSpace
from fabart.identify import (
    ExplosiveDrawError,
    GirfResult,
    Instrument,
    StructuralDraw,
    WeakInstrumentError,
    girf,
    instrument_impact,
    long_run_mean,
    reliability,
)


class TestReliability:
    def test_equal_signal_noise(self):
        assert reliability(1.0, 1.0) == pytest.approx(0.5)

    def test_noiseless(self):
        assert reliability(2.0, 0.0) == pytest.approx(1.0)

    def test_pure_noise(self):
        assert reliability(0.0, 3.0) == pytest.approx(0.0)

    def test_undefined(self):
        with pytest.raises(ValueError):
            reliability(0.0, 0.0)


class TestLongRunMean:
    def test_univariate_closed_form(self):
        got = long_run_mean(np.array([[[0.5]]]), np.array([0.5]))
        assert got[0] == pytest.approx(1.0)

    def test_zero_intercept(self):
        got = long_run_mean(np.array([[[0.7]]]), np.array([0.0]))
        assert got[0] == pytest.approx(0.0)

    def test_explosive_draw_flagged(self):
        with pytest.raises(ExplosiveDrawError):
            long_run_mean(np.array([[[1.01]]]), np.array([0.1]))

    def test_bivariate_var2_against_long_simulation(self):
        rng = np.random.default_rng(0)
        phi1 = np.array([[0.4, 0.1], [-0.2, 0.3]])
        phi2 = np.array([[0.1, 0.0], [0.05, 0.15]])
        c = np.array([0.3, -0.2])
        var_coef = np.stack([phi1, phi2])
        mean = long_run_mean(var_coef, c)

        T = 1_000_000
        e = rng.normal(size=(T, 2)) * 0.5
        y = np.zeros((T, 2))
        for t in range(2, T):
            y[t] = c + phi1 @ y[t - 1] + phi2 @ y[t - 2] + e[t]
        sims = y[1000:]
        sim_mean = sims.mean(axis=0)
        se = sims.std(axis=0) / np.sqrt(len(sims) / 50)  # crude autocorrelation discount
        assert np.all(np.abs(mean - sim_mean) < 3 * se)


def simulate_proxy_system(rng, T=2000, rho_sq=0.5):
    """VAR(1) with lower-triangular impact A and an instrument for shock 1."""
    A = np.array([[1.0, 0.0, 0.0], [0.6, 0.8, 0.0], [-0.4, 0.3, 0.7]])
    phi = np.array([[0.5, 0.1, 0.0], [0.0, 0.4, 0.1], [0.1, 0.0, 0.3]])
    eps = rng.normal(size=(T, 3))
    u = eps @ A.T
    y = np.zeros((T, 3))
    for t in range(1, T):
        y[t] = phi @ y[t - 1] + u[t]
    beta = 1.0
    sigma = beta * np.sqrt(1.0 / rho_sq - 1.0)
    m = beta * eps[:, 0] + sigma * rng.normal(size=T)
    resid = u[1:]
    return A, phi, y, resid, m[1:]


class TestInstrumentImpact:
    def test_recovers_known_impact_column(self):
        rng = np.random.default_rng(1)
        A, _, _, resid, m = simulate_proxy_system(rng, T=2000, rho_sq=0.5)
        draw = instrument_impact(resid, Instrument(m))
        expected = A[:, 0] / A[0, 0]
        assert np.all(np.abs(draw.impact_column - expected) <= 0.05 * np.maximum(np.abs(expected), 1.0))
        # reliability proxy should sit near the constructed value
        assert draw.rho_sq == pytest.approx(0.5, abs=0.08)

    def test_unit_first_entry_contract(self):
        rng = np.random.default_rng(2)
        _, _, _, resid, m = simulate_proxy_system(rng)
        draw = instrument_impact(resid, Instrument(m))
        assert draw.impact_column[0] == pytest.approx(1.0)

    def test_pure_noise_triggers_weak_instrument(self):
        rng = np.random.default_rng(3)
        _, _, _, resid, _ = simulate_proxy_system(rng, T=600)
        noise = rng.normal(size=len(resid))
        with pytest.raises(WeakInstrumentError) as err:
            instrument_impact(resid, Instrument(noise))
        assert err.value.f_stat is not None

    def test_short_overlap_rejected(self):
        rng = np.random.default_rng(4)
        _, _, _, resid, m = simulate_proxy_system(rng, T=400)
        values = np.full(len(resid), np.nan)
        values[:10] = m[:10]
        with pytest.raises(ValueError, match="overlap"):
            instrument_impact(resid, Instrument(values))

    def test_availability_window_respected(self):
        rng = np.random.default_rng(5)
        _, _, _, resid, m = simulate_proxy_system(rng, T=1500)
        values = np.full(len(resid), np.nan)
        values[400:] = m[400:]  # late-sample availability only
        draw = instrument_impact(resid, Instrument(values))
        assert draw.first_stage_f > 4.0

    def test_rho_sq_bounds_enforced(self):
        with pytest.raises(ValueError):
            StructuralDraw(np.array([1.0]), rho_sq=1.2)


def linear_chain_result(rng, n_draws=3, T=400, phi=0.6, n_obs_vars=4):
    """Hand-built linear-measurement chain on an exactly standardized scale."""
    m = 2  # observed series + one factor
    A12, A21 = 0.15, -0.1
    var_coef = np.array([[[phi, A12], [A21, 0.5]]])
    intercept = np.zeros(m)
    innov = np.array([[1.0, 0.3], [0.3, 0.8]])
    chol = np.linalg.cholesky(innov)

    y = np.zeros((T, m))
    eps = rng.normal(size=(T, m))
    for t in range(1, T):
        y[t] = var_coef[0] @ y[t - 1] + chol @ eps[t]

    lam = np.column_stack([rng.uniform(0.2, 0.6, n_obs_vars), rng.uniform(0.3, 0.9, n_obs_vars)])
    X = y @ lam.T + rng.normal(scale=0.3, size=(T, n_obs_vars))
    panel = PanelData(
        X=X, Z=y[:, 0], names=[f"x{j}" for j in range(n_obs_vars)],
        transform_codes=[1] * n_obs_vars, x_mean=np.zeros(n_obs_vars),
        x_scale=np.ones(n_obs_vars), z_mean=0.0, z_scale=1.0, z_name="z",
    )
    loadings = np.vstack([[1.0, 0.0], lam])
    draws = [
        ChainDraw(
            state=StateSpace(loadings=loadings.copy(), meas_var=np.full(n_obs_vars, 0.09),
                             var_coef=var_coef.copy(), intercept=intercept.copy(),
                             innov_cov=innov.copy(), has_z=True),
            factors=y[:, 1:].copy(), forests=None,
        )
        for _ in range(n_draws)
    ]
    config = FavarConfig(n_factors=1, n_lags=1, n_draws=10, n_burn=5, thin=1,
                         training_obs=20, bart_prior=BartPrior(n_trees=5), measurement="linear")
    result = ChainResult(draws=draws, config=config, panel=panel,
                         eq_offset=X.min(axis=0), eq_span=X.max(axis=0) - X.min(axis=0),
                         pca_anchor=y[:, 1:].copy(), diagnostics={})
    return result, eps


class TestGirf:
    def make_instrument(self, result, eps, rng, noise=1.0):
        # instrument = first structural shock (+ noise), aligned to panel rows;
        # girf slices rows L.. to match the residual sample
        T = result.panel.n_obs
        values = np.full(T, np.nan)
        values[1:] = eps[1:, 0] + noise * rng.normal(size=T - 1)
        return Instrument(values)

    def test_linear_girf_matches_closed_form(self):
        rng = np.random.default_rng(6)
        result, eps = linear_chain_result(rng)
        instrument = self.make_instrument(result, eps, rng, noise=0.5)
        out = girf(result, instrument, shock_size=0.10, horizons=10, n_sim=50,
                   rng=np.random.default_rng(0), include_observables=True)

        draw = result.draws[0]
        from fabart.favar import reduced_form_residuals, stack_path

        resid = reduced_form_residuals(draw.state, stack_path(result.panel.Z, draw.factors))
        impact = instrument_impact(resid, instrument, residual_offset=1).impact_column * 0.10
        phi = draw.state.var_coef[0]
        expected = [impact]
        for _ in range(10):
            expected.append(phi @ expected[-1])
        expected = np.stack(expected)

        z_resp = out.responses["z"]
        f_resp = out.responses["factor_1"]
        for g in range(z_resp.shape[0]):
            assert np.allclose(z_resp[g], expected[:, 0], atol=1e-8)
            assert np.allclose(f_resp[g], expected[:, 1], atol=1e-8)
        # observables: linear map of the state response
        lam = draw.state.loadings[1:]
        x_expected = expected @ lam.T
        for j, name in enumerate(result.panel.names):
            assert np.allclose(out.responses[name][0], x_expected[:, j], atol=1e-8)

    def test_impact_normalization_at_horizon_zero(self):
        rng = np.random.default_rng(7)
        result, eps = linear_chain_result(rng)
        instrument = self.make_instrument(result, eps, rng)
        out = girf(result, instrument, shock_size=0.10, horizons=5, n_sim=30,
                   rng=np.random.default_rng(1))
        assert np.allclose(out.responses["z"][:, 0], 0.10, atol=1e-10)
        neg = girf(result, instrument, shock_size=0.10, shock_sign=-1, horizons=5,
                   n_sim=30, rng=np.random.default_rng(1))
        assert np.allclose(neg.responses["z"][:, 0], -0.10, atol=1e-10)

    def test_sign_flip_is_mirror_in_linear_model(self):
        rng = np.random.default_rng(8)
        result, eps = linear_chain_result(rng)
        instrument = self.make_instrument(result, eps, rng)
        pos = girf(result, instrument, horizons=8, n_sim=40, rng=np.random.default_rng(2))
        neg = girf(result, instrument, horizons=8, n_sim=40, rng=np.random.default_rng(3),
                   shock_sign=-1)
        for name in pos.names:
            assert np.allclose(pos.responses[name], -neg.responses[name], atol=1e-8)
        mirrored = girf(result, instrument, horizons=8, n_sim=40,
                        rng=np.random.default_rng(3), shock_sign=-1, mirror_negative=True)
        for name in pos.names:
            assert np.allclose(mirrored.responses[name], pos.responses[name], atol=1e-8)

    def test_zero_size_shock_gives_zero_girf(self):
        rng = np.random.default_rng(9)
        result, eps = linear_chain_result(rng)
        instrument = self.make_instrument(result, eps, rng)
        out = girf(result, instrument, shock_size=0.0, horizons=6, n_sim=30,
                   rng=np.random.default_rng(4))
        for name in out.names:
            assert np.max(np.abs(out.responses[name])) < 1e-12

    def test_band_ordering(self):
        rng = np.random.default_rng(10)
        result, eps = linear_chain_result(rng, n_draws=9)
        # perturb each draw's coefficients so bands have width
        for i, d in enumerate(result.draws):
            d.state.var_coef = d.state.var_coef * (1.0 + 0.02 * (i - 4))
        instrument = self.make_instrument(result, eps, rng)
        out = girf(result, instrument, horizons=8, n_sim=30, rng=np.random.default_rng(5))
        for name in out.names:
            lo, med, hi = out.bands(name)
            assert np.all(lo <= med + 1e-12) and np.all(med <= hi + 1e-12)

    def test_explosive_draws_excluded_and_reported(self):
        rng = np.random.default_rng(11)
        result, eps = linear_chain_result(rng, n_draws=4)
        result.draws[2].state.var_coef = np.array([[[1.05, 0.0], [0.0, 0.9]]])
        instrument = self.make_instrument(result, eps, rng)
        out = girf(result, instrument, horizons=4, n_sim=20, rng=np.random.default_rng(6))
        assert out.n_excluded_explosive == 1
        assert out.responses["z"].shape[0] == 3

    def test_all_draws_unusable_raises(self):
        rng = np.random.default_rng(12)
        result, eps = linear_chain_result(rng, n_draws=2)
        for d in result.draws:
            d.state.var_coef = np.array([[[1.2, 0.0], [0.0, 1.1]]])
        instrument = self.make_instrument(result, eps, rng)
        with pytest.raises(ValueError, match="no usable draws"):
            girf(result, instrument, horizons=4, n_sim=10, rng=np.random.default_rng(7))

    def test_girf_table_format(self):
        rng = np.random.default_rng(13)
        result, eps = linear_chain_result(rng)
        instrument = self.make_instrument(result, eps, rng)
        out = girf(result, instrument, horizons=3, n_sim=20, rng=np.random.default_rng(8),
                   include_observables=False)
        text = out.to_table()
        lines = text.strip().splitlines()
        assert lines[0] == "variable,horizon,quantile,value,shock_sign"
        assert len(lines) == 1 + len(out.names) * 3 * 4
