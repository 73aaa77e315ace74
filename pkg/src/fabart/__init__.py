"""Factor-augmented VAR with a tree-ensemble measurement equation.

The measurement side maps a large observation panel onto an observed
series plus latent factors through sums of regression trees, sampled by
backfitting MCMC; the transition side is a conjugate Bayesian VAR; the
latent factor path is drawn with a simulation smoother. Shock
identification uses an external instrument; impulse responses are
simulated (generalized IRFs).
"""

from .bart import BartPrior, Forest, backfit_sweep, node_split_probability
from .evaluate import PredictiveEnsemble, cumulative_abs_log_scores, log_score, rmse, rw_benchmark
from .favar import (
    ChainDraw,
    ChainResult,
    FavarConfig,
    PanelData,
    StateSpace,
    carter_kohn,
    forecast,
    gibbs_iteration,
    run_chain,
)
from .identify import GirfResult, Instrument, StructuralDraw, girf, instrument_impact, long_run_mean, reliability
from .sim import DgpSpec, ExperimentConfig, monte_carlo, recursive_forecast_experiment, simulate_factor, simulate_panel
from .trees import RegressionTree, SplitRule, predict_forest, predict_tree

__all__ = [
    "BartPrior",
    "ChainDraw",
    "ChainResult",
    "DgpSpec",
    "ExperimentConfig",
    "FavarConfig",
    "Forest",
    "GirfResult",
    "Instrument",
    "PanelData",
    "PredictiveEnsemble",
    "RegressionTree",
    "SplitRule",
    "StateSpace",
    "StructuralDraw",
    "backfit_sweep",
    "carter_kohn",
    "cumulative_abs_log_scores",
    "forecast",
    "gibbs_iteration",
    "girf",
    "instrument_impact",
    "log_score",
    "long_run_mean",
    "monte_carlo",
    "node_split_probability",
    "predict_forest",
    "predict_tree",
    "recursive_forecast_experiment",
    "reliability",
    "rmse",
    "run_chain",
    "rw_benchmark",
    "simulate_factor",
    "simulate_panel",
]

__version__ = "0.1.0"
