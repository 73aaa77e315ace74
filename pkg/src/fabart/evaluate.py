"""Forecast scoring: RMSE, kernel log predictive scores, benchmarks.

Log scores use a Gaussian kernel over the predictive draws with
Silverman's rule-of-thumb bandwidth; densities below 1e-12 are floored
so cumulative sums stay finite (activations are up to the caller to
count via :data:`LOG_SCORE_FLOOR`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

LOG_SCORE_FLOOR = math.log(1e-12)


@dataclass
class PredictiveEnsemble:
    """Predictive samples for one target/origin/horizon."""

    draws: np.ndarray
    target_name: str = ""
    origin: str = ""
    horizon: int = 1

    def __post_init__(self):
        self.draws = np.asarray(self.draws, dtype=float).ravel()
        if self.draws.size < 100:
            raise ValueError(
                f"kernel estimation needs >= 100 draws, got {self.draws.size}"
            )


def rmse(forecasts, actuals) -> float:
    """Root mean squared forecast error."""
    forecasts = np.asarray(forecasts, dtype=float)
    actuals = np.asarray(actuals, dtype=float)
    if forecasts.shape != actuals.shape:
        raise ValueError(f"length mismatch: {forecasts.shape} vs {actuals.shape}")
    if forecasts.size == 0:
        raise ValueError("need at least one forecast")
    return float(np.sqrt(np.mean((forecasts - actuals) ** 2)))


def silverman_bandwidth(draws: np.ndarray) -> float:
    """0.9 min(sd, IQR/1.34) n^{-1/5}."""
    sd = float(np.std(draws))
    iqr = float(np.subtract(*np.percentile(draws, [75, 25])))
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    return 0.9 * spread * len(draws) ** (-0.2)


def log_score(draws, realized: float, bandwidth: float | None = None) -> float:
    """Log of the kernel predictive density at the realized value.

    Floored at log(1e-12) when the realization falls far outside the
    ensemble support.
    """
    if isinstance(draws, PredictiveEnsemble):
        draws = draws.draws
    draws = np.asarray(draws, dtype=float).ravel()
    if draws.size < 2 or np.std(draws) == 0:
        raise ValueError("zero-variance ensemble: predictive density degenerate")
    h = silverman_bandwidth(draws) if bandwidth is None else float(bandwidth)
    if h <= 0:
        raise ValueError("bandwidth must be positive")
    z = (realized - draws) / h
    density = float(np.mean(np.exp(-0.5 * z * z))) / (h * math.sqrt(2.0 * math.pi))
    return math.log(max(density, 1e-12))


def cumulative_abs_log_scores(scores) -> np.ndarray:
    """Running sum of |log score|; lower values mean better density forecasts."""
    return np.cumsum(np.abs(np.asarray(scores, dtype=float)))


def rw_benchmark(series, horizon: int) -> np.ndarray:
    """Random-walk forecasts: the value at t predicts t+horizon.

    Returns the forecast vector aligned to targets series[horizon:].
    """
    series = np.asarray(series, dtype=float)
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if series.size <= horizon:
        raise ValueError(f"series length {series.size} insufficient for horizon {horizon}")
    return series[:-horizon].copy()
