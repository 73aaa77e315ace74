"""Shock identification via an external instrument, and generalized IRFs.

The instrument equation is never added to the sampler: for each retained
draw, the impact column is the frequentist projection of the instrument
on that draw's reduced-form residuals, normalized to a unit entry for
the observed series and then rescaled to the requested shock size.
Impulse responses are simulated (shocked minus baseline branch under
common innovations) because the measurement side is nonlinear.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .favar import ChainResult, companion_matrix, reduced_form_residuals, stack_path


class WeakInstrumentError(ValueError):
    """First-stage regression too weak to identify the impact column."""

    def __init__(self, message, f_stat=None):
        super().__init__(message)
        self.f_stat = f_stat


class ExplosiveDrawError(ValueError):
    """Companion matrix spectral radius at or above one."""


@dataclass
class Instrument:
    """External instrument aligned to panel rows; NaN where unavailable."""

    values: np.ndarray
    name: str = "instrument"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).ravel()

    def aligned_window(self, n_rows: int, offset: int = 0) -> np.ndarray:
        """Values over panel rows offset..offset+n_rows, NaN-padded."""
        window = np.full(n_rows, np.nan)
        avail = self.values[offset : offset + n_rows]
        window[: len(avail)] = avail
        return window


@dataclass
class StructuralDraw:
    """Identified impact column (unit observed-series entry) and reliability."""

    impact_column: np.ndarray
    rho_sq: float
    first_stage_f: float = float("nan")

    def __post_init__(self):
        if not 0.0 <= self.rho_sq <= 1.0:
            raise ValueError("rho_sq must lie in [0, 1]")


def reliability(beta: float, sigma: float) -> float:
    """Instrument signal share beta^2 / (beta^2 + sigma^2)."""
    if beta == 0.0 and sigma == 0.0:
        raise ValueError("reliability undefined when beta and sigma are both zero")
    return beta**2 / (beta**2 + sigma**2)


def instrument_impact(residuals: np.ndarray, instrument: Instrument,
                      residual_offset: int = 0, min_overlap: int = 24,
                      min_first_stage_f: float = 4.0) -> StructuralDraw:
    """Impact column from projecting the instrument on reduced-form residuals.

    Each residual column is regressed on the instrument over the
    availability overlap; the resulting covariance column is scaled so
    the first (observed-series) entry equals one. The first-stage F
    statistic and R-squared of the observed-series regression are
    attached; R-squared serves as the reliability proxy.
    """
    residuals = np.asarray(residuals, dtype=float)
    window = instrument.aligned_window(residuals.shape[0], residual_offset)
    mask = np.isfinite(window)
    if mask.sum() < min_overlap:
        raise ValueError(
            f"instrument overlaps only {int(mask.sum())} residual rows (< {min_overlap})"
        )
    m = window[mask]
    U = residuals[mask]
    m_c = m - m.mean()
    denom = float(m_c @ m_c)
    if denom <= 0:
        raise WeakInstrumentError("instrument has zero variance on the overlap", 0.0)
    slopes = (m_c @ (U - U.mean(axis=0))) / denom

    # first stage: observed-series residual on the instrument
    u1 = U[:, 0] - U[:, 0].mean()
    fitted = slopes[0] * m_c
    ss_res = float(((u1 - fitted) ** 2).sum())
    ss_tot = float((u1**2).sum())
    n = len(m)
    r_sq = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    f_stat = (n - 2) * r_sq / max(1.0 - r_sq, 1e-12)
    if abs(slopes[0]) < 1e-12 or f_stat < min_first_stage_f:
        raise WeakInstrumentError(
            f"weak instrument: first-stage F = {f_stat:.3f} < {min_first_stage_f}", f_stat
        )
    impact = slopes / slopes[0]
    return StructuralDraw(impact_column=impact, rho_sq=max(r_sq, 0.0), first_stage_f=f_stat)


def long_run_mean(var_coef: np.ndarray, intercept: np.ndarray,
                  radius_bound: float = 1.0) -> np.ndarray:
    """Stationary mean (I - sum of lag matrices)^-1 c of a VAR draw."""
    comp = companion_matrix(var_coef)
    radius = float(np.max(np.abs(np.linalg.eigvals(comp))))
    if radius >= radius_bound:
        raise ExplosiveDrawError(f"companion spectral radius {radius:.4f} >= {radius_bound}")
    m = var_coef.shape[1]
    return np.linalg.solve(np.eye(m) - var_coef.sum(axis=0), np.asarray(intercept, float))


@dataclass
class GirfResult:
    """Per-draw generalized impulse responses and pooled quantile bands.

    ``responses`` maps variable name -> (n_draws, K+1) array; bands hold
    the 16/50/84 percent quantiles pooled across draws. The shock is
    normalized so the observed series moves by ``shock_size`` (original
    units) at horizon zero.
    """

    horizons: np.ndarray
    names: list[str]
    responses: dict
    shock_sign: int
    shock_size: float
    n_excluded_explosive: int = 0
    n_excluded_weak: int = 0
    mirrored: bool = False

    def bands(self, name: str, quantiles=(16.0, 50.0, 84.0)) -> np.ndarray:
        return np.percentile(self.responses[name], quantiles, axis=0)

    def to_table(self) -> str:
        """Tidy delimited text: variable, horizon, quantile, value, shock_sign."""
        lines = ["variable,horizon,quantile,value,shock_sign"]
        for name in self.names:
            band = self.bands(name)
            for qi, q in enumerate((16, 50, 84)):
                for k, h in enumerate(self.horizons):
                    lines.append(
                        f"{name},{int(h)},{q},{float(band[qi, k])!r},{self.shock_sign}"
                    )
        return "\n".join(lines) + "\n"


def _simulate_branches(state, y_bar, impact, horizons, n_sim, rng):
    """Common-innovation baseline and shocked paths from the long-run mean."""
    L = state.n_lags
    m = state.n_series
    K = horizons + 1
    innov = rng.multivariate_normal(np.zeros(m), state.innov_cov, size=(n_sim, K), method="svd")

    hist_b = np.tile(y_bar, (L, n_sim, 1))
    hist_s = hist_b.copy()
    base = np.empty((K, n_sim, m))
    shocked = np.empty((K, n_sim, m))
    for k in range(K):
        eta = innov[:, k, :]
        yb = state.intercept + eta
        ys = state.intercept + eta + (impact if k == 0 else 0.0)
        for lag in range(L):
            yb = yb + hist_b[lag] @ state.var_coef[lag].T
            ys = ys + hist_s[lag] @ state.var_coef[lag].T
        base[k] = yb
        shocked[k] = ys
        hist_b = np.concatenate([yb[None], hist_b[:-1]])
        hist_s = np.concatenate([ys[None], hist_s[:-1]])
    return base, shocked


def _observable_response(draw, base, shocked, result: ChainResult):
    """Mean X-branch difference, mapped through the draw's forests (original units)."""
    K, n_sim, _ = base.shape
    N = result.panel.n_vars
    out = np.empty((K, N))
    if draw.forests is not None:
        for j in range(N):
            forest = draw.forests[j]
            db = forest.predict(base.reshape(K * n_sim, -1)).reshape(K, n_sim)
            ds = forest.predict(shocked.reshape(K * n_sim, -1)).reshape(K, n_sim)
            out[:, j] = (ds - db).mean(axis=1) * result.eq_span[j] * result.panel.x_scale[j]
    else:
        lam = draw.state.loadings[1:] if result.has_z else draw.state.loadings
        diff = (shocked - base).mean(axis=1)  # K x m
        out = diff @ lam.T * result.panel.x_scale
    return out


def girf(result: ChainResult, instrument: Instrument, shock_size: float = 0.10,
         shock_sign: int = 1, horizons: int = 40, n_sim: int = 500, rng=None,
         max_draws: int | None = None, include_observables: bool = True,
         mirror_negative: bool = False, min_first_stage_f: float = 4.0) -> GirfResult:
    """Generalized impulse responses to the instrumented shock.

    Per retained draw: identify the impact column, start both branches at
    the draw's long-run mean, share the innovation sequence between the
    branches, and average the path difference over ``n_sim``
    replications. Explosive or weak-instrument draws are excluded and
    counted. Bands pool the per-draw means.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    if shock_sign not in (1, -1):
        raise ValueError("shock_sign must be +1 or -1")
    draws = result.draws
    if max_draws is not None and len(draws) > max_draws:
        keep = np.linspace(0, len(draws) - 1, max_draws).astype(int)
        draws = [draws[i] for i in keep]

    panel = result.panel
    has_z = result.has_z
    L = result.config.n_lags
    m = draws[0].state.n_series
    z_scale = panel.z_scale if has_z else 1.0

    y_names = ([panel.z_name or "z"] if has_z else []) + [
        f"factor_{j + 1}" for j in range(result.config.n_factors)
    ]
    names = y_names + (list(panel.names) if include_observables else [])

    kept_y, kept_x = [], []
    n_explosive = n_weak = 0
    for draw in draws:
        state = draw.state
        try:
            y_bar = long_run_mean(state.var_coef, state.intercept)
        except ExplosiveDrawError:
            n_explosive += 1
            continue
        try:
            path = stack_path(panel.Z, draw.factors)
            resid = reduced_form_residuals(state, path)
            structural = instrument_impact(
                resid, instrument, residual_offset=L, min_first_stage_f=min_first_stage_f
            )
        except WeakInstrumentError:
            n_weak += 1
            continue

        impact = structural.impact_column * (shock_size / z_scale) * shock_sign
        base, shocked = _simulate_branches(state, y_bar, impact, horizons, n_sim, rng)
        y_resp = (shocked - base).mean(axis=1)  # (K+1) x m
        if has_z:
            y_resp = y_resp.copy()
            y_resp[:, 0] *= z_scale  # observed series back in original units
        kept_y.append(y_resp)
        if include_observables:
            kept_x.append(_observable_response(draw, base, shocked, result))

    if not kept_y:
        raise ValueError(
            f"no usable draws for the GIRF ({n_explosive} explosive, {n_weak} weak-instrument)"
        )

    sign_fix = -1.0 if (mirror_negative and shock_sign == -1) else 1.0
    responses = {}
    y_stack = np.stack(kept_y) * sign_fix  # G x (K+1) x m
    for i, name in enumerate(y_names):
        responses[name] = y_stack[:, :, i]
    if include_observables:
        x_stack = np.stack(kept_x) * sign_fix
        for j, name in enumerate(panel.names):
            responses[name] = x_stack[:, :, j]

    return GirfResult(
        horizons=np.arange(horizons + 1),
        names=names,
        responses=responses,
        shock_sign=shock_sign,
        shock_size=shock_size,
        n_excluded_explosive=n_explosive,
        n_excluded_weak=n_weak,
        mirrored=mirror_negative and shock_sign == -1,
    )
