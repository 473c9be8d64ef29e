"""Experiment configuration: one YAML document naming the profile set, the
per-model workload, the policy, the hidden ground truth, and the run
horizon. Unknown keys are rejected so typos fail loudly before event zero.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field

import yaml

from .domain import ModelProfile, PriorityLevel
from .oracle import GroundTruthParams, default_ground_truth
from .profiles import default_profiles, load_profiles_dir
from .workload import ModelWorkload, WorkloadSpec

BUILTIN_PROFILE_SETS = ("default6",)

_TOP_FIELDS = {
    "profiles",
    "duration_ms",
    "seed",
    "n_gpus",
    "concurrency_limit",
    "policy",
    "policy_variant",
    "goodput_window_ms",
    "ground_truth",
    "workload",
    "aimd",
}
_GT_FIELDS = {
    "family",
    "scale",
    "base",
    "offset",
    "weights",
    "self_compute_weight",
    "self_memory_weight",
    "priority_factor",
    "noise_sigma",
}
_WL_FIELDS = {"mode", "rate", "trace_file", "function_id", "scale"}
_AIMD_FIELDS = {"floor", "ceiling", "increase_pct", "interval_ms"}


class ConfigError(Exception):
    pass


@dataclass
class AimdSettings:
    floor: float = 75.0
    ceiling: float = 100.0
    increase_pct: float = 0.25
    interval_ms: float = 100.0


@dataclass
class ExperimentConfig:
    profiles: dict[str, ModelProfile]
    workload: WorkloadSpec
    ground_truth: GroundTruthParams = field(default_factory=default_ground_truth)
    policy: str = "predictive"
    policy_variant: str = "full"
    n_gpus: int = 4
    concurrency_limit: int = 4
    seed: int = 0
    goodput_window_ms: float = 1000.0
    aimd: AimdSettings = field(default_factory=AimdSettings)

    def validate(self) -> None:
        if self.n_gpus < 1:
            raise ConfigError("n_gpus must be at least 1")
        if self.concurrency_limit < 1:
            raise ConfigError("concurrency_limit must be at least 1")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        if self.workload.duration_ms <= 0:
            raise ConfigError("duration_ms must be positive")
        if self.goodput_window_ms <= 0:
            raise ConfigError("goodput_window_ms must be positive")
        metric_sets = {p.metrics for p in self.profiles.values()}
        if len(metric_sets) > 1:
            raise ConfigError("all profiles must share one metric list")
        n_metrics = len(next(iter(metric_sets)))
        if len(self.ground_truth.weights) != n_metrics:
            raise ConfigError(
                f"ground truth has {len(self.ground_truth.weights)} metric weights, "
                f"profiles define {n_metrics} metrics"
            )
        for model_id in self.workload.models:
            if model_id not in self.profiles:
                raise ConfigError(f"workload names unknown model {model_id!r}")


def _ground_truth_from_dict(doc: dict) -> GroundTruthParams:
    unknown = set(doc) - _GT_FIELDS
    if unknown:
        raise ConfigError(f"ground_truth: unknown fields {sorted(unknown)}")
    kwargs = dict(doc)
    if "weights" in kwargs:
        kwargs["weights"] = tuple(float(w) for w in kwargs["weights"])
    if "priority_factor" in kwargs:
        pf = kwargs["priority_factor"]
        kwargs["priority_factor"] = {
            PriorityLevel.from_name(k): float(v) for k, v in pf.items()
        }
    try:
        return GroundTruthParams(**kwargs)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"ground_truth: {e}") from e


def _workload_from_dict(doc: dict, duration_ms: float, base_dir: str) -> WorkloadSpec:
    if not isinstance(doc, dict) or not doc:
        raise ConfigError("workload must map model ids to arrival specs")
    models: dict[str, ModelWorkload] = {}
    for model_id, spec in doc.items():
        if not isinstance(spec, dict):
            raise ConfigError(f"workload.{model_id} must be a mapping")
        unknown = set(spec) - _WL_FIELDS
        if unknown:
            raise ConfigError(f"workload.{model_id}: unknown fields {sorted(unknown)}")
        mode = spec.get("mode")
        if mode not in ("poisson", "uniform", "trace"):
            raise ConfigError(f"workload.{model_id}: mode must be poisson, uniform or trace")
        trace_file = spec.get("trace_file")
        if trace_file is not None and not os.path.isabs(trace_file):
            trace_file = os.path.join(base_dir, trace_file)
        models[model_id] = ModelWorkload(
            mode=mode,
            rate_per_s=float(spec.get("rate", 0.0)),
            trace_file=trace_file,
            function_id=spec.get("function_id"),
            scale=float(spec.get("scale", 1.0)),
        )
    return WorkloadSpec(duration_ms=duration_ms, models=models)


def resolve_profiles(spec, base_dir: str = ".") -> dict[str, ModelProfile]:
    if isinstance(spec, dict):
        return spec
    if spec in BUILTIN_PROFILE_SETS:
        return default_profiles()
    path = spec if os.path.isabs(spec) else os.path.join(base_dir, spec)
    if not os.path.isdir(path):
        raise ConfigError(f"profiles: {spec!r} is neither a builtin set nor a directory")
    return load_profiles_dir(path)


def config_from_dict(doc: dict, base_dir: str = ".") -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a mapping")
    unknown = set(doc) - _TOP_FIELDS
    if unknown:
        raise ConfigError(f"unknown config fields {sorted(unknown)}")
    for required in ("profiles", "duration_ms", "workload"):
        if required not in doc:
            raise ConfigError(f"config missing required field {required!r}")

    profiles = resolve_profiles(doc["profiles"], base_dir)
    duration_ms = float(doc["duration_ms"])
    workload = _workload_from_dict(doc["workload"], duration_ms, base_dir)
    gt = (
        _ground_truth_from_dict(doc["ground_truth"])
        if "ground_truth" in doc
        else default_ground_truth()
    )
    aimd = AimdSettings()
    if "aimd" in doc:
        unknown = set(doc["aimd"]) - _AIMD_FIELDS
        if unknown:
            raise ConfigError(f"aimd: unknown fields {sorted(unknown)}")
        aimd = AimdSettings(**{k: float(v) for k, v in doc["aimd"].items()})

    cfg = ExperimentConfig(
        profiles=profiles,
        workload=workload,
        ground_truth=gt,
        policy=str(doc.get("policy", "predictive")),
        policy_variant=str(doc.get("policy_variant", "full")),
        n_gpus=int(doc.get("n_gpus", 4)),
        concurrency_limit=int(doc.get("concurrency_limit", 4)),
        seed=int(doc.get("seed", 0)),
        goodput_window_ms=float(doc.get("goodput_window_ms", 1000.0)),
        aimd=aimd,
    )
    cfg.validate()
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as f:
            doc = yaml.safe_load(f)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except yaml.YAMLError as e:
        raise ConfigError(f"{path}: {e}") from e
    return config_from_dict(doc, base_dir=os.path.dirname(os.path.abspath(path)))
