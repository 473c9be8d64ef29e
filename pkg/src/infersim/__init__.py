"""Deadline- and priority-aware ML inference scheduling with a deterministic
discrete-event simulator in place of real GPUs."""

from .config import ExperimentConfig, load_config
from .domain import (
    Batch,
    ModelProfile,
    PriorityLevel,
    Request,
    ThroughputTimeline,
    time_weighted_average,
    validate_profile,
)
from .metrics import MetricsReport, compute_metrics, perturb_profiles
from .oracle import GroundTruthParams, default_ground_truth, ground_truth_slowdown
from .pcie import PcieLinkState
from .predictor import (
    FeedbackSample,
    InterferencePredictor,
    OptimizerState,
    PredictorParams,
    estimate_latency,
    interference_degree,
    kernel_delay,
    kernel_effect,
    pressure_exponent,
)
from .profiles import default_profiles, load_profile, random_profile, save_profile
from .runtime import AimdState, GpuRuntimeState, RunningTaskEntry
from .scheduler import (
    PredictivePolicy,
    ScheduleDecision,
    TaskQueue,
    check_meet,
    check_violate,
    early_drop,
    largest_feasible,
)
from .simulation import SimResult, Simulation, run
from .workload import WorkloadSpec, gen_poisson, gen_uniform, load_trace

__version__ = "0.1.0"

__all__ = [
    "AimdState",
    "Batch",
    "ExperimentConfig",
    "FeedbackSample",
    "GpuRuntimeState",
    "GroundTruthParams",
    "InterferencePredictor",
    "MetricsReport",
    "ModelProfile",
    "OptimizerState",
    "PcieLinkState",
    "PredictivePolicy",
    "PredictorParams",
    "PriorityLevel",
    "Request",
    "RunningTaskEntry",
    "ScheduleDecision",
    "SimResult",
    "Simulation",
    "TaskQueue",
    "ThroughputTimeline",
    "WorkloadSpec",
    "check_meet",
    "check_violate",
    "compute_metrics",
    "default_ground_truth",
    "default_profiles",
    "early_drop",
    "estimate_latency",
    "gen_poisson",
    "gen_uniform",
    "ground_truth_slowdown",
    "interference_degree",
    "kernel_delay",
    "kernel_effect",
    "largest_feasible",
    "load_config",
    "load_profile",
    "load_trace",
    "perturb_profiles",
    "pressure_exponent",
    "random_profile",
    "run",
    "save_profile",
    "time_weighted_average",
    "validate_profile",
]
