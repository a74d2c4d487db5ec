"""rachsim: framed-ALOHA random-access simulation and control optimization."""

from .estimators import (
    BacklogEstimate,
    DAState,
    da_update,
    mle_estimate,
    mle_outcome_distribution,
    mom_closed_form,
    mom_full,
)
from .harness import (
    ConfigError,
    EpisodeMetrics,
    ExperimentConfig,
    compare,
    convergence_report,
    pretrain,
    run_experiment,
)
from .rng import RngStream, derive_seed
from .sim import ControlAction, Device, FrameReport, Observation, Simulator, expected_moments, run_frame
from .traffic import ArrivalProcess, TrafficProfile, beta_weights

__version__ = "0.1.0"

__all__ = [
    "ArrivalProcess",
    "BacklogEstimate",
    "ConfigError",
    "ControlAction",
    "DAState",
    "Device",
    "EpisodeMetrics",
    "ExperimentConfig",
    "FrameReport",
    "Observation",
    "RngStream",
    "Simulator",
    "TrafficProfile",
    "beta_weights",
    "compare",
    "convergence_report",
    "da_update",
    "derive_seed",
    "expected_moments",
    "mle_estimate",
    "mle_outcome_distribution",
    "mom_closed_form",
    "mom_full",
    "pretrain",
    "run_experiment",
    "run_frame",
    "__version__",
]
