"""Gibbs sampler for the factor-augmented VAR with tree-ensemble measurement.

One iteration alternates: (1) VAR coefficients on the stacked observed
factor and latent factors, via dummy-observation conjugate priors;
(2)-(3) a backfitting sweep of every measurement equation's forest (or a
linear refit); (4) factor loadings read off by least-squares projection;
(5) a Carter-Kohn simulation-smoother draw of the latent factor path.
Forecasts iterate the transition equation forward and map the simulated
states through each draw's forests.
"""

from __future__ import annotations

import dataclasses
import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, stats

from ._kernels import ck_core
from .bart import (
    BartPrior,
    Forest,
    backfit_sweep,
    calibrate_xi,
    column_spans,
    dump_forest,
    parse_forest,
    sample_sigma,
    to_unit_interval,
)


class ConfigError(ValueError):
    """Invalid run configuration (caught by the CLI as a usage error)."""


@dataclass
class PanelData:
    """Observation panel: standardized columns plus the observed factor.

    ``X`` is T x N with zero mean and unit variance per column; the
    original location/scale pairs are stored for back-transformation.
    ``Z`` (optional) is the observed factor, standardized the same way.
    """

    X: np.ndarray
    Z: np.ndarray | None
    names: list[str]
    transform_codes: list[int]
    x_mean: np.ndarray
    x_scale: np.ndarray
    z_mean: float = 0.0
    z_scale: float = 1.0
    z_name: str = ""
    dates: list | None = None
    first_usable: dict | None = None  # per-variable first date after transforms

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        if self.X.ndim != 2:
            raise ValueError("X must be T x N")
        if np.isnan(self.X).any():
            raise ValueError("panel contains missing values after ingestion")
        if self.Z is not None:
            self.Z = np.asarray(self.Z, dtype=float).ravel()
            if len(self.Z) != len(self.X):
                raise ValueError("Z length does not match panel rows")
            if np.isnan(self.Z).any():
                raise ValueError("observed factor contains missing values")

    @property
    def n_obs(self) -> int:
        return self.X.shape[0]

    @property
    def n_vars(self) -> int:
        return self.X.shape[1]

    @classmethod
    def from_raw(cls, X_raw, Z_raw=None, names=None, transform_codes=None,
                 dates=None, z_name=""):
        X_raw = np.asarray(X_raw, dtype=float)
        mean = X_raw.mean(axis=0)
        scale = X_raw.std(axis=0)
        if np.any(scale <= 0):
            bad = [i for i, s in enumerate(scale) if s <= 0]
            raise ValueError(f"constant columns cannot be standardized: {bad}")
        X = (X_raw - mean) / scale
        if names is None:
            names = [f"x{i + 1}" for i in range(X.shape[1])]
        if transform_codes is None:
            transform_codes = [1] * X.shape[1]
        z = z_mean = z_scale = None
        if Z_raw is not None:
            Z_raw = np.asarray(Z_raw, dtype=float).ravel()
            z_mean, z_scale = float(Z_raw.mean()), float(Z_raw.std())
            if z_scale <= 0:
                raise ValueError("observed factor is constant")
            z = (Z_raw - z_mean) / z_scale
        return cls(X, z, list(names), list(transform_codes), mean, scale,
                   z_mean or 0.0, z_scale or 1.0, z_name, dates)

    def destandardize_x(self, values: np.ndarray) -> np.ndarray:
        return values * self.x_scale + self.x_mean

    def destandardize_z(self, values: np.ndarray) -> np.ndarray:
        return values * self.z_scale + self.z_mean


@dataclass
class FavarConfig:
    """Estimation settings; defaults follow the empirical design."""

    n_factors: int = 7
    n_lags: int = 12
    n_draws: int = 30_000
    n_burn: int = 15_000
    thin: int = 5
    training_obs: int = 40
    iota: float = 0.1
    lambda_soc: float | None = None  # defaults to 10 * iota
    bart_prior: BartPrior = field(default_factory=BartPrior)
    measurement: str = "bart"  # "bart" | "linear"
    keep_forests: bool = True
    threads: int = 1

    def __post_init__(self):
        if self.lambda_soc is None:
            self.lambda_soc = 10.0 * self.iota
        if self.measurement not in ("bart", "linear"):
            raise ConfigError(f"unknown measurement mode {self.measurement!r}")

    def validate(self):
        if self.n_burn >= self.n_draws:
            raise ConfigError(f"n_burn={self.n_burn} must be < n_draws={self.n_draws}")
        if self.n_factors < 1 or self.n_lags < 1 or self.thin < 1:
            raise ConfigError("n_factors, n_lags and thin must be positive")
        if self.iota <= 0:
            raise ConfigError("iota must be positive")
        if self.training_obs < 5:
            raise ConfigError("training_obs too small to calibrate AR(1) priors")


@dataclass
class StateSpace:
    """Measurement loadings plus transition-equation parameters.

    ``loadings`` is (N + 1) x M with first row (1, 0, ..., 0) when an
    observed factor is present, otherwise N x M. ``var_coef`` stacks the
    per-lag coefficient matrices (L, M, M) so that
    Y_t = intercept + sum_l var_coef[l] @ Y_{t-l} + innovation.
    """

    loadings: np.ndarray
    meas_var: np.ndarray
    var_coef: np.ndarray
    intercept: np.ndarray
    innov_cov: np.ndarray
    has_z: bool = True

    def __post_init__(self):
        if self.has_z:
            first = np.zeros(self.loadings.shape[1])
            first[0] = 1.0
            if not np.allclose(self.loadings[0], first):
                raise ValueError("first loading row must be (1, 0, ..., 0)")
        if np.any(self.meas_var <= 0):
            raise ValueError("measurement variances must be positive")

    @property
    def n_lags(self) -> int:
        return self.var_coef.shape[0]

    @property
    def n_series(self) -> int:
        return self.var_coef.shape[1]


@dataclass
class ChainDraw:
    """One retained Gibbs iteration: parameters plus the factor path."""

    state: StateSpace
    factors: np.ndarray
    forests: list[Forest] | None = None


@dataclass
class ChainResult:
    """Post-burn-in, thinned posterior sample plus replay metadata."""

    draws: list[ChainDraw]
    config: FavarConfig
    panel: PanelData
    eq_offset: np.ndarray
    eq_span: np.ndarray
    pca_anchor: np.ndarray
    diagnostics: dict

    @property
    def has_z(self) -> bool:
        return self.panel.Z is not None

    def stacked_paths(self) -> list[np.ndarray]:
        """Per-draw [Z, F] history (T x M)."""
        return [stack_path(self.panel.Z, d.factors) for d in self.draws]


def stack_path(Z, factors) -> np.ndarray:
    if Z is None:
        return np.asarray(factors, dtype=float)
    return np.column_stack([Z, factors])


def pca_factors(X: np.ndarray, n_factors: int) -> np.ndarray:
    """First principal components, unit variance, deterministic signs.

    Sign convention: the largest-magnitude loading of each component is
    positive.
    """
    T = X.shape[0]
    u, s, vt = np.linalg.svd(X, full_matrices=False)
    F = u[:, :n_factors] * math.sqrt(T)
    for j in range(n_factors):
        k = int(np.argmax(np.abs(vt[j])))
        if vt[j, k] < 0:
            F[:, j] = -F[:, j]
    return F


# -- transition equation ---------------------------------------------------


def build_dummy_observations(prior_means, prior_scales, iota, lambda_soc,
                             n_lags, const_scale=0.0):
    """Dummy-observation blocks implementing the conjugate VAR prior.

    Stacks the Minnesota block (lag decay diag(1..L), tightness ``iota``),
    the residual-covariance block, one constant row (flat prior when
    ``const_scale`` is 0), and the sum-of-coefficients block with
    tightness ``lambda_soc``. Row count is M*L + M + 1 + M.
    """
    mu = np.asarray(prior_means, dtype=float)
    sig = np.asarray(prior_scales, dtype=float)
    m = len(mu)
    if np.any(sig <= 0):
        raise ValueError("zero prior scale: degenerate AR(1) calibration")
    k = m * n_lags + 1

    y_minn = np.zeros((m * n_lags, m))
    x_minn = np.zeros((m * n_lags, k))
    y_minn[:m, :] = np.diag(sig * mu) / iota
    for lag in range(n_lags):
        block = slice(lag * m, (lag + 1) * m)
        x_minn[block, block] = (lag + 1) * np.diag(sig) / iota

    y_cov = np.diag(sig)
    x_cov = np.zeros((m, k))

    y_const = np.zeros((1, m))
    x_const = np.zeros((1, k))
    x_const[0, -1] = const_scale

    y_soc = np.diag(sig * mu) / lambda_soc
    x_soc = np.zeros((m, k))
    x_soc[:, : m * n_lags] = np.tile(np.diag(sig * mu) / lambda_soc, (1, n_lags))

    Y_D = np.vstack([y_minn, y_cov, y_const, y_soc])
    X_D = np.vstack([x_minn, x_cov, x_const, x_soc])
    return Y_D, X_D


def lagged_design(Y_path: np.ndarray, n_lags: int, start: int):
    """Regression matrices for the VAR: x rows are [Y_{t-1}, ..., Y_{t-L}, 1]."""
    T, m = Y_path.shape
    if start < n_lags:
        raise ValueError("start must be >= n_lags")
    rows = T - start
    if rows < 1:
        raise ValueError("no usable observations after lag/training trimming")
    X = np.ones((rows, m * n_lags + 1))
    for lag in range(1, n_lags + 1):
        X[:, (lag - 1) * m : lag * m] = Y_path[start - lag : T - lag]
    return Y_path[start:], X


def ar1_calibration(Y_train: np.ndarray):
    """Per-variable AR(1) slope and residual sd from the training sample."""
    mus, sigs = [], []
    for j in range(Y_train.shape[1]):
        y = Y_train[1:, j]
        x = np.column_stack([np.ones(len(y)), Y_train[:-1, j]])
        beta, *_ = np.linalg.lstsq(x, y, rcond=None)
        resid = y - x @ beta
        mus.append(float(beta[1]))
        sigs.append(float(np.std(resid)))
    return np.array(mus), np.array(sigs)


def dummy_posterior(Y, X, Y_D, X_D):
    """Posterior moments of the dummy-augmented regression.

    Returns (coef_mean, xtx_inverse, scale_matrix, dof) of the
    Normal-Inverse-Wishart posterior.
    """
    Ys = np.vstack([Y_D, Y])
    Xs = np.vstack([X_D, X])
    xtx = Xs.T @ Xs
    xtx_inv = np.linalg.inv(xtx)
    coef = xtx_inv @ (Xs.T @ Ys)
    resid = Ys - Xs @ coef
    scale = resid.T @ resid
    dof = Ys.shape[0] - Xs.shape[1]
    return coef, xtx_inv, scale, dof


def sample_var_coefficients(Y_path, config: FavarConfig, rng, start=None):
    """Conjugate posterior draw of (var_coef, intercept, innov_cov).

    The AR(1) prior means/scales come from the first ``training_obs``
    rows, which are then excluded from the likelihood sample.
    """
    Y_path = np.asarray(Y_path, dtype=float)
    T, m = Y_path.shape
    L = config.n_lags
    if start is None:
        start = max(L, config.training_obs)
    mus, sigs = ar1_calibration(Y_path[: config.training_obs])
    if np.any(sigs <= 1e-12):
        raise ValueError("zero prior scale: degenerate AR(1) calibration")
    Y_D, X_D = build_dummy_observations(mus, sigs, config.iota, config.lambda_soc, L)
    Y, X = lagged_design(Y_path, L, start)
    if Y.shape[0] < m:
        raise ValueError(f"too few observations ({Y.shape[0]}) for a VAR({L}) in {m} variables")
    coef, xtx_inv, scale, dof = dummy_posterior(Y, X, Y_D, X_D)
    if dof <= m + 1:
        raise ValueError("posterior degrees of freedom too small")

    scale = 0.5 * (scale + scale.T)
    innov = stats.invwishart.rvs(df=dof, scale=scale, random_state=rng)
    innov = np.atleast_2d(innov)
    try:
        chol_x = np.linalg.cholesky(0.5 * (xtx_inv + xtx_inv.T))
        chol_s = np.linalg.cholesky(innov)
    except np.linalg.LinAlgError as err:
        raise ValueError("singular cross-product in VAR posterior") from err
    B = coef + chol_x @ rng.standard_normal(coef.shape) @ chol_s.T

    var_coef = np.empty((L, m, m))
    for lag in range(L):
        var_coef[lag] = B[lag * m : (lag + 1) * m, :].T
    intercept = B[-1, :].copy()
    return var_coef, intercept, innov


def companion_matrix(var_coef: np.ndarray) -> np.ndarray:
    L, m, _ = var_coef.shape
    comp = np.zeros((m * L, m * L))
    for lag in range(L):
        comp[:m, lag * m : (lag + 1) * m] = var_coef[lag]
    if L > 1:
        comp[m:, : m * (L - 1)] = np.eye(m * (L - 1))
    return comp


def reduced_form_residuals(state: StateSpace, Y_path: np.ndarray) -> np.ndarray:
    """One-step-ahead transition-equation residuals over t = L..T-1."""
    L = state.n_lags
    Y, X = lagged_design(Y_path, L, L)
    k = Y.shape[1]
    B = np.empty((k * L + 1, k))
    for lag in range(L):
        B[lag * k : (lag + 1) * k, :] = state.var_coef[lag].T
    B[-1] = state.intercept
    return Y - X @ B


# -- measurement equation ---------------------------------------------------


def project_loadings(factors_aug: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Least-squares projection of each panel column on [Z, F].

    Returns the (J+1) x N coefficient matrix via the Moore-Penrose
    inverse; reduces to the normal-equation solution under full rank, and
    to the minimum-norm solution otherwise.
    """
    factors_aug = np.asarray(factors_aug, dtype=float)
    if factors_aug.shape[0] < factors_aug.shape[1]:
        raise ValueError("need at least as many observations as regressors")
    return np.linalg.pinv(factors_aug) @ np.asarray(X, dtype=float)


def _stationary_init(comp, Q, dim):
    radius = np.max(np.abs(np.linalg.eigvals(comp)))
    if radius < 0.999:
        try:
            P0 = linalg.solve_discrete_lyapunov(comp, Q)
            return 0.5 * (P0 + P0.T)
        except Exception:
            pass
    return 10.0 * np.eye(dim)


def carter_kohn(state: StateSpace, X: np.ndarray, Z: np.ndarray | None, rng):
    """Joint simulation-smoother draw of the latent factor path.

    Forward Kalman filter on the companion-form state, then backward
    sampling of each period's current block conditional on the next
    drawn block. The observed factor enters as a noiseless measurement
    row, so its coordinate stays pinned to the data.
    """
    X = np.asarray(X, dtype=float)
    T, N = X.shape
    has_z = Z is not None
    m = state.n_series
    L = state.n_lags
    J = m - 1 if has_z else m
    dim = m * L

    comp = companion_matrix(state.var_coef)
    c_comp = np.zeros(dim)
    c_comp[:m] = state.intercept
    Q = np.zeros((dim, dim))
    Q[:m, :m] = state.innov_cov

    obs = np.column_stack([Z, X]) if has_z else X
    n_obs = obs.shape[1]
    H = np.zeros((n_obs, dim))
    H[:, :m] = state.loadings
    R = np.concatenate([[0.0], state.meas_var]) if has_z else state.meas_var.copy()

    mean0 = np.zeros(dim)
    if np.max(np.abs(np.linalg.eigvals(comp))) < 0.999:
        mean0 = np.linalg.solve(np.eye(dim) - comp, c_comp)
    cov0 = _stationary_init(comp, Q, dim)

    normals = rng.standard_normal((T, J))
    try:
        draws = ck_core(
            np.ascontiguousarray(obs), H, np.ascontiguousarray(R, dtype=float),
            comp, c_comp, Q, np.ascontiguousarray(state.innov_cov, dtype=float),
            mean0, cov0, normals, 1 if has_z else 0,
        )
    except Exception as err:
        raise ValueError(f"Kalman filter failed (non-positive-definite covariance?): {err}") from err

    if has_z:
        return draws[:, 1:]
    return draws


def normalize_factors(F: np.ndarray, anchor: np.ndarray):
    """Demean/rescale each factor to unit variance, sign-anchor to the PCA factor."""
    out = np.array(F, dtype=float)
    for j in range(out.shape[1]):
        out[:, j] -= out[:, j].mean()
        sd = out[:, j].std()
        if sd > 1e-12:
            out[:, j] /= sd
        if np.dot(out[:, j], anchor[:, j]) < 0:
            out[:, j] = -out[:, j]
    return out


# -- the Gibbs chain --------------------------------------------------------


@dataclass
class _EquationSetup:
    """Per-equation fixed quantities: target rescale map and sigma prior."""

    targets: np.ndarray  # N x T, on the [-0.5, 0.5] scale (bart mode)
    offsets: np.ndarray
    spans: np.ndarray
    priors: list[BartPrior]


def _equation_setup(panel: PanelData, config: FavarConfig, Y0: np.ndarray) -> _EquationSetup:
    T, N = panel.X.shape
    nu = config.bart_prior.nu if config.bart_prior.nu is not None else T / 2.0
    offsets = np.empty(N)
    spans = np.empty(N)
    targets = np.empty((N, T))
    priors = []
    proj = project_loadings(Y0, panel.X)
    resid = panel.X - Y0 @ proj
    for j in range(N):
        lo, hi = float(panel.X[:, j].min()), float(panel.X[:, j].max())
        offsets[j], spans[j] = lo, hi - lo
        targets[j] = to_unit_interval(panel.X[:, j], lo, hi - lo)
        sig_hat = max(float(np.std(resid[:, j])) / spans[j], 1e-4)
        priors.append(
            dataclasses.replace(config.bart_prior, nu=nu, xi=calibrate_xi(sig_hat, nu, config.bart_prior.quantile_v))
        )
    return _EquationSetup(targets, offsets, spans, priors)


def _measurement_update(forests, setup, Y_path, panel, config, rng):
    """Steps 2-4: forests (or linear sigmas) and the loading projection.

    Equations are conditionally independent given the factor path, so
    each gets its own spawned random stream; results are identical for
    any thread count.
    """
    N = panel.n_vars
    spans_cols = column_spans(Y_path)
    meas_var = np.empty(N)
    eq_rngs = rng.spawn(N)
    if config.measurement == "bart":
        def update(j):
            return backfit_sweep(forests[j], setup.targets[j], Y_path,
                                 setup.priors[j], eq_rngs[j], spans=spans_cols)

        if getattr(config, "threads", 1) > 1:
            from concurrent.futures import ThreadPoolExecutor

            with ThreadPoolExecutor(max_workers=config.threads) as pool:
                new_forests = list(pool.map(update, range(N)))
        else:
            new_forests = [update(j) for j in range(N)]
        for j, f in enumerate(new_forests):
            meas_var[j] = (f.sigma * setup.spans[j]) ** 2
        forests = new_forests
    proj = project_loadings(Y_path, panel.X)
    if config.measurement == "linear":
        resid = panel.X - Y_path @ proj
        for j in range(N):
            scaled = resid[:, j] / setup.spans[j]
            sigma_j = sample_sigma(scaled, setup.priors[j], eq_rngs[j])
            meas_var[j] = (sigma_j * setup.spans[j]) ** 2
    return forests, proj, meas_var


def _assemble_loadings(proj: np.ndarray, has_z: bool) -> np.ndarray:
    m = proj.shape[0]
    if has_z:
        first = np.zeros((1, m))
        first[0, 0] = 1.0
        return np.vstack([first, proj.T])
    return proj.T


def gibbs_iteration(draw: ChainDraw, panel: PanelData, config: FavarConfig, rng,
                    setup: _EquationSetup, pca_anchor: np.ndarray,
                    sample_factors: bool = True) -> ChainDraw:
    """One full pass of the six-step sampler (forecasting is step 6, separate)."""
    has_z = panel.Z is not None
    Y_path = stack_path(panel.Z, draw.factors)

    var_coef, intercept, innov = sample_var_coefficients(Y_path, config, rng)
    forests, proj, meas_var = _measurement_update(
        draw.forests, setup, Y_path, panel, config, rng
    )
    state = StateSpace(
        loadings=_assemble_loadings(proj, has_z),
        meas_var=meas_var,
        var_coef=var_coef,
        intercept=intercept,
        innov_cov=innov,
        has_z=has_z,
    )
    factors = draw.factors
    if sample_factors:
        factors = carter_kohn(state, panel.X, panel.Z, rng)
        factors = normalize_factors(factors, pca_anchor)
    return ChainDraw(state=state, factors=factors, forests=forests)


def run_chain(panel: PanelData, config: FavarConfig, rng) -> ChainResult:
    """Full Gibbs run: burn-in discarded, post-burn draws thinned.

    Factors are normalized to unit variance after every smoother draw,
    with signs anchored to the panel's principal components.
    """
    config.validate()
    T, N = panel.X.shape
    if T <= config.n_lags + config.training_obs:
        raise ConfigError("panel too short for the requested lags/training window")

    anchor = pca_factors(panel.X, config.n_factors)
    Y0 = stack_path(panel.Z, anchor)
    setup = _equation_setup(panel, config, Y0)

    forests = None
    if config.measurement == "bart":
        forests = [
            Forest.stumps(setup.priors[j].n_trees, max(math.sqrt(setup.priors[j].xi), 1e-4), j)
            for j in range(N)
        ]
    draw = ChainDraw(state=None, factors=anchor.copy(), forests=forests)

    retained: list[ChainDraw] = []
    diag = {"sigma_mean": [], "loading_norm": [], "factor_anchor_corr": []}
    for i in range(config.n_draws):
        draw = gibbs_iteration(draw, panel, config, rng, setup, anchor)
        if i >= config.n_burn and (i - config.n_burn) % config.thin == 0:
            kept = draw if config.keep_forests else ChainDraw(draw.state, draw.factors, None)
            retained.append(kept)
            diag["sigma_mean"].append(float(np.sqrt(draw.state.meas_var).mean()))
            diag["loading_norm"].append(float(np.linalg.norm(draw.state.loadings)))
            corr = [
                float(np.corrcoef(draw.factors[:, j], anchor[:, j])[0, 1])
                for j in range(config.n_factors)
            ]
            diag["factor_anchor_corr"].append(corr)

    return ChainResult(
        draws=retained,
        config=config,
        panel=panel,
        eq_offset=setup.offsets,
        eq_span=setup.spans,
        pca_anchor=anchor,
        diagnostics=diag,
    )


def posterior_mean_factors(result: ChainResult) -> np.ndarray:
    return np.mean([d.factors for d in result.draws], axis=0)


# -- forecasting (step 6) ----------------------------------------------------


def _psd_factor(cov: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        w, v = np.linalg.eigh(0.5 * (cov + cov.T))
        return v @ np.diag(np.sqrt(np.clip(w, 0.0, None)))


def _map_to_observables(y_path, forests, loadings, meas_sd, result, rng, noise=True):
    """Observable forecasts in original units for one draw's path (H x M)."""
    panel = result.panel
    N = panel.n_vars
    H = y_path.shape[0]
    out = np.empty((H, N))
    if forests is not None:
        for j in range(N):
            scaled = forests[j].predict(y_path)
            out[:, j] = (scaled + 0.5) * result.eq_span[j] + result.eq_offset[j]
    else:
        fitted = y_path @ loadings[1:].T if result.has_z else y_path @ loadings.T
        out[:] = fitted
    if noise:
        out += rng.standard_normal((H, N)) * meas_sd
    return panel.destandardize_x(out)


def forecast(result: ChainResult, horizon: int, rng, include_noise=True):
    """Predictive ensemble: per-draw paths of [Z, F] and every observable.

    Iterates each retained draw's transition equation forward with
    innovation draws, then maps the simulated states through that draw's
    forests (or its linear loadings) plus measurement noise. Observable
    and Z paths come back in original data units.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if result.config.measurement == "bart" and result.draws[0].forests is None:
        raise ValueError("chain was run with keep_forests=False; observable forecasts need the forests")
    panel = result.panel
    has_z = result.has_z
    G = len(result.draws)
    m = result.draws[0].state.n_series
    L = result.config.n_lags

    y_paths = np.empty((G, horizon, m))
    x_paths = np.empty((G, horizon, panel.n_vars))
    for g, draw in enumerate(result.draws):
        state = draw.state
        hist = stack_path(panel.Z, draw.factors)[-L:][::-1].copy()  # row 0 = most recent
        chol = _psd_factor(state.innov_cov) if include_noise else None
        path = np.empty((horizon, m))
        for h in range(horizon):
            y = state.intercept.copy()
            for lag in range(L):
                y += state.var_coef[lag] @ hist[lag]
            if include_noise:
                y += chol @ rng.standard_normal(m)
            path[h] = y
            hist = np.vstack([y, hist[:-1]])
        y_paths[g] = path
        meas_sd = np.sqrt(state.meas_var)
        x_paths[g] = _map_to_observables(
            path, draw.forests, state.loadings, meas_sd, result, rng, noise=include_noise
        )

    out = {"y": y_paths, "observables": x_paths}
    if has_z:
        out["z"] = panel.destandardize_z(y_paths[:, :, 0])
    return out


# -- chain serialization ------------------------------------------------------


def save_chain(result: ChainResult, out_dir: str) -> None:
    """Columnar dump: one file per parameter block, deterministic ordering."""
    os.makedirs(out_dir, exist_ok=True)
    draws = result.draws
    m = draws[0].state.n_series
    L = result.config.n_lags
    J = result.config.n_factors
    names = result.panel.names

    with open(os.path.join(out_dir, "factors.csv"), "w") as fh:
        fh.write("draw,t," + ",".join(f"f{j + 1}" for j in range(J)) + "\n")
        for g, d in enumerate(draws):
            for t in range(d.factors.shape[0]):
                vals = ",".join(repr(float(v)) for v in d.factors[t])
                fh.write(f"{g},{t},{vals}\n")

    with open(os.path.join(out_dir, "var_coefficients.csv"), "w") as fh:
        header = ["draw"] + [f"c_{i + 1}" for i in range(m)]
        header += [f"l{lag + 1}_{i + 1}_{j + 1}" for lag in range(L) for i in range(m) for j in range(m)]
        fh.write(",".join(header) + "\n")
        for g, d in enumerate(draws):
            vals = [repr(float(v)) for v in d.state.intercept]
            vals += [repr(float(v)) for v in d.state.var_coef.ravel()]
            fh.write(f"{g}," + ",".join(vals) + "\n")

    with open(os.path.join(out_dir, "innovation_covariance.csv"), "w") as fh:
        header = ["draw"] + [f"s_{i + 1}_{j + 1}" for i in range(m) for j in range(m)]
        fh.write(",".join(header) + "\n")
        for g, d in enumerate(draws):
            fh.write(f"{g}," + ",".join(repr(float(v)) for v in d.state.innov_cov.ravel()) + "\n")

    with open(os.path.join(out_dir, "loadings.csv"), "w") as fh:
        cols = ["psi"] + [f"lambda_{j + 1}" for j in range(J)] if result.has_z else [f"lambda_{j + 1}" for j in range(J)]
        fh.write("draw,series," + ",".join(cols) + "\n")
        for g, d in enumerate(draws):
            rows = d.state.loadings[1:] if result.has_z else d.state.loadings
            for j, name in enumerate(names):
                fh.write(f"{g},{name}," + ",".join(repr(float(v)) for v in rows[j]) + "\n")

    with open(os.path.join(out_dir, "measurement_sd.csv"), "w") as fh:
        fh.write("draw," + ",".join(names) + "\n")
        for g, d in enumerate(draws):
            fh.write(f"{g}," + ",".join(repr(float(v)) for v in np.sqrt(d.state.meas_var)) + "\n")

    if draws[0].forests is not None:
        with open(os.path.join(out_dir, "forests.txt"), "w") as fh:
            for g, d in enumerate(draws):
                fh.write(f"draw {g}\n")
                for forest in d.forests:
                    fh.write(dump_forest(forest))


def _read_csv_rows(path):
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    return header, rows


def load_chain(out_dir: str, panel: PanelData, config: FavarConfig) -> ChainResult:
    """Rebuild a ChainResult from :func:`save_chain` output for replay."""
    m = config.n_factors + (1 if panel.Z is not None else 0)
    L, J = config.n_lags, config.n_factors
    T = panel.n_obs
    has_z = panel.Z is not None

    _, rows = _read_csv_rows(os.path.join(out_dir, "factors.csv"))
    n_draws = int(rows[-1][0]) + 1
    factors = np.empty((n_draws, T, J))
    for r in rows:
        factors[int(r[0]), int(r[1])] = [float(v) for v in r[2:]]

    _, rows = _read_csv_rows(os.path.join(out_dir, "var_coefficients.csv"))
    intercepts = np.empty((n_draws, m))
    var_coefs = np.empty((n_draws, L, m, m))
    for r in rows:
        g = int(r[0])
        intercepts[g] = [float(v) for v in r[1 : 1 + m]]
        var_coefs[g] = np.array([float(v) for v in r[1 + m :]]).reshape(L, m, m)

    _, rows = _read_csv_rows(os.path.join(out_dir, "innovation_covariance.csv"))
    innovs = np.empty((n_draws, m, m))
    for r in rows:
        innovs[int(r[0])] = np.array([float(v) for v in r[1:]]).reshape(m, m)

    _, rows = _read_csv_rows(os.path.join(out_dir, "loadings.csv"))
    n_rows = panel.n_vars + (1 if has_z else 0)
    loadings = np.zeros((n_draws, n_rows, m))
    if has_z:
        loadings[:, 0, 0] = 1.0
    offset = 1 if has_z else 0
    series_pos = {name: j for j, name in enumerate(panel.names)}
    for r in rows:
        g, name = int(r[0]), r[1]
        loadings[g, offset + series_pos[name]] = [float(v) for v in r[2:]]

    _, rows = _read_csv_rows(os.path.join(out_dir, "measurement_sd.csv"))
    meas_sd = np.empty((n_draws, panel.n_vars))
    for r in rows:
        meas_sd[int(r[0])] = [float(v) for v in r[1:]]

    forests_by_draw = [None] * n_draws
    forest_path = os.path.join(out_dir, "forests.txt")
    if os.path.exists(forest_path):
        with open(forest_path) as fh:
            text = fh.read()
        for chunk in text.split("draw ")[1:]:
            lines = chunk.splitlines()
            g = int(lines[0])
            body = "\n".join(lines[1:])
            parts = ["forest " + p for p in body.split("forest ")[1:]]
            forests_by_draw[g] = [parse_forest(p) for p in parts]

    draws = []
    for g in range(n_draws):
        state = StateSpace(
            loadings=loadings[g],
            meas_var=meas_sd[g] ** 2,
            var_coef=var_coefs[g],
            intercept=intercepts[g],
            innov_cov=innovs[g],
            has_z=has_z,
        )
        draws.append(ChainDraw(state=state, factors=factors[g], forests=forests_by_draw[g]))

    offsets = panel.X.min(axis=0)
    spans = panel.X.max(axis=0) - offsets
    return ChainResult(
        draws=draws,
        config=config,
        panel=panel,
        eq_offset=offsets,
        eq_span=spans,
        pca_anchor=pca_factors(panel.X, J),
        diagnostics={},
    )
