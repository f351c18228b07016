"""Active learning of the probability-of-threshold-robustness (PTR) measure with Gaussian processes."""

from .errors import ConfigurationError, NumericError, UsageError
from .gp import GpModel, KernelSpec, fit_hyperparameters, sample_rff
from .ptr import (
    AlgoParams,
    BetaSchedule,
    CredibleBand,
    GridDomain,
    PtrStats,
    beta_schedule,
    credible_band,
    eta_from_epsilon,
    p_eta_true,
    p_tilde_true,
    p_upper_true,
    ptr_stats,
)
from .algorithms import BptLse, BptTs, BptUcb, LseState, Query
from .baselines import BaselineParams, bq_posterior_stats, make_baseline
from .benchmarks import Benchmark, build_benchmark, list_benchmarks

__version__ = "0.1.0"
