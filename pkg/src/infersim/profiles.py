"""Profile documents: YAML load/save with strict field checking, plus the
built-in synthetic profile set and a random generator for tests.

The built-in set covers six DNN serving workloads with the deadlines and
priority split used throughout the experiments; its latencies and
throughput curves are synthetic but shaped like real profiles (latencies
grow with batch size while per-request cost amortizes, throughputs rise and
saturate below peak).
"""
from __future__ import annotations

import os
from typing import Optional

import numpy as np
import yaml

from .domain import (
    DEFAULT_METRICS,
    ModelProfile,
    PriorityLevel,
    ProfileParseError,
    ProfileValidationError,
    validate_profile,
)

_TOP_FIELDS = {
    "model_id",
    "priority",
    "deadline_ms",
    "batch_timeout_ms",
    "max_batch_size",
    "metrics",
    "sizes",
}
_SIZE_FIELDS = {
    "batch_size",
    "total_latency_ms",
    "transfer_latency_ms",
    "kernel_latency_ms",
    "throughput",
    "self_compute",
    "self_memory",
}


def profile_to_dict(profile: ModelProfile) -> dict:
    sizes = []
    for j in range(1, profile.max_batch_size + 1):
        sizes.append(
            {
                "batch_size": j,
                "total_latency_ms": profile.total_latency_ms(j),
                "transfer_latency_ms": profile.transfer_latency_ms(j),
                "kernel_latency_ms": profile.kernel_latency_ms(j),
                "throughput": {
                    m: v for m, v in zip(profile.metrics, profile.throughput_at(j))
                },
                "self_compute": profile.self_compute_at(j),
                "self_memory": profile.self_memory_at(j),
            }
        )
    return {
        "model_id": profile.model_id,
        "priority": profile.priority.label,
        "deadline_ms": profile.deadline_ms,
        "batch_timeout_ms": profile.batch_timeout_ms,
        "max_batch_size": profile.max_batch_size,
        "metrics": list(profile.metrics),
        "sizes": sizes,
    }


def profile_from_dict(doc: dict, source: str = "<dict>") -> ModelProfile:
    if not isinstance(doc, dict):
        raise ProfileParseError(f"{source}: profile document must be a mapping")
    unknown = set(doc) - _TOP_FIELDS
    if unknown:
        raise ProfileParseError(f"{source}: unknown fields {sorted(unknown)}")
    missing = _TOP_FIELDS - {"metrics"} - set(doc)
    if missing:
        raise ProfileParseError(f"{source}: missing fields {sorted(missing)}")
    metrics = tuple(doc.get("metrics", DEFAULT_METRICS))
    sizes = doc["sizes"]
    if not isinstance(sizes, list) or not sizes:
        raise ProfileParseError(f"{source}: 'sizes' must be a non-empty list")

    max_bs = int(doc["max_batch_size"])
    total, transfer, kernel = [], [], []
    throughput, self_cmp, self_mem = [], [], []
    expected = 1
    for item in sizes:
        if not isinstance(item, dict):
            raise ProfileParseError(f"{source}: size entries must be mappings")
        unknown = set(item) - _SIZE_FIELDS
        if unknown:
            raise ProfileParseError(f"{source}: unknown size fields {sorted(unknown)}")
        missing = _SIZE_FIELDS - set(item)
        if missing:
            raise ProfileParseError(f"{source}: size entry missing {sorted(missing)}")
        if int(item["batch_size"]) != expected:
            raise ProfileParseError(
                f"{source}: size entries must cover 1..{max_bs} in order; "
                f"expected {expected}, got {item['batch_size']}"
            )
        expected += 1
        total.append(float(item["total_latency_ms"]))
        transfer.append(float(item["transfer_latency_ms"]))
        kernel.append(float(item["kernel_latency_ms"]))
        tp = item["throughput"]
        if not isinstance(tp, dict) or set(tp) != set(metrics):
            raise ProfileParseError(
                f"{source}: throughput must map exactly the metrics {list(metrics)}"
            )
        throughput.append(tuple(float(tp[m]) for m in metrics))
        self_cmp.append(float(item["self_compute"]))
        self_mem.append(float(item["self_memory"]))
    if expected - 1 != max_bs:
        raise ProfileParseError(
            f"{source}: {expected - 1} size entries but max_batch_size={max_bs}"
        )

    return ModelProfile(
        model_id=str(doc["model_id"]),
        priority=PriorityLevel.from_name(str(doc["priority"])),
        deadline_ms=float(doc["deadline_ms"]),
        batch_timeout_ms=float(doc["batch_timeout_ms"]),
        max_batch_size=max_bs,
        total_latency=total,
        transfer_latency=transfer,
        kernel_latency=kernel,
        throughput=throughput,
        self_compute=self_cmp,
        self_memory=self_mem,
        metrics=metrics,
    )


def load_profile(path) -> ModelProfile:
    try:
        with open(path) as f:
            doc = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise ProfileParseError(f"{path}: {e}") from e
    profile = profile_from_dict(doc, source=str(path))
    violations = validate_profile(profile)
    if violations:
        raise ProfileValidationError(profile.model_id, violations)
    return profile


def save_profile(profile: ModelProfile, path) -> None:
    with open(path, "w") as f:
        yaml.safe_dump(profile_to_dict(profile), f, sort_keys=False)


def load_profiles_dir(directory) -> dict[str, ModelProfile]:
    names = sorted(
        n for n in os.listdir(directory) if n.endswith((".yaml", ".yml"))
    )
    if not names:
        raise ProfileParseError(f"{directory}: no profile documents found")
    profiles = {}
    for name in names:
        p = load_profile(os.path.join(directory, name))
        if p.model_id in profiles:
            raise ProfileParseError(f"{directory}: duplicate model_id {p.model_id!r}")
        profiles[p.model_id] = p
    return profiles


def save_profiles_dir(profiles: dict[str, ModelProfile], directory) -> None:
    os.makedirs(directory, exist_ok=True)
    for model_id in sorted(profiles):
        save_profile(profiles[model_id], os.path.join(directory, f"{model_id}.yaml"))


def _synthetic_profile(
    model_id: str,
    priority: PriorityLevel,
    deadline_ms: float,
    base_latency_ms: float,
    transfer_frac: float,
    kernel_frac: float,
    peaks: dict[str, float],
    half_size: float,
    max_batch_size: int = 8,
    timeout_frac: float = 0.1,
) -> ModelProfile:
    total, transfer, kernel = [], [], []
    throughput, self_cmp, self_mem = [], [], []
    for j in range(1, max_batch_size + 1):
        t = base_latency_ms * (0.5 + 0.5 * j)  # per-request cost amortizes
        total.append(round(t, 6))
        transfer.append(round(transfer_frac * t, 6))
        kernel.append(round(kernel_frac * t, 6))
        row = tuple(
            round(peaks[m] * j / (j + half_size), 6) for m in DEFAULT_METRICS
        )
        throughput.append(row)
        self_cmp.append(row[DEFAULT_METRICS.index("tensor_pipe")])
        self_mem.append(row[DEFAULT_METRICS.index("l2_cache")])
    return ModelProfile(
        model_id=model_id,
        priority=priority,
        deadline_ms=deadline_ms,
        batch_timeout_ms=round(timeout_frac * deadline_ms, 6),
        max_batch_size=max_batch_size,
        total_latency=total,
        transfer_latency=transfer,
        kernel_latency=kernel,
        throughput=throughput,
        self_compute=self_cmp,
        self_memory=self_mem,
    )


def default_profiles() -> dict[str, ModelProfile]:
    """Six-model serving mix: two high-priority image models with tight
    deadlines plus four best-effort models."""
    hi, lo = PriorityLevel.HIGH, PriorityLevel.LOW
    specs = [
        # id, priority, deadline, base latency, transfer frac, kernel frac, peaks, half size
        ("resnet50", hi, 8.0, 2.0, 0.16, 0.72,
         dict(l1_cache=0.55, l2_cache=0.45, dram=0.40, tensor_pipe=0.35, fma_pipe=0.70), 2.0),
        ("vit_b16", hi, 15.0, 3.6, 0.10, 0.76,
         dict(l1_cache=0.40, l2_cache=0.55, dram=0.45, tensor_pipe=0.75, fma_pipe=0.35), 2.5),
        ("yolo_v8n", lo, 20.0, 1.6, 0.14, 0.70,
         dict(l1_cache=0.45, l2_cache=0.35, dram=0.30, tensor_pipe=0.30, fma_pipe=0.55), 1.5),
        ("convnext_b", lo, 25.0, 4.4, 0.10, 0.78,
         dict(l1_cache=0.50, l2_cache=0.50, dram=0.50, tensor_pipe=0.60, fma_pipe=0.55), 3.0),
        ("vgg19", lo, 25.0, 4.0, 0.12, 0.76,
         dict(l1_cache=0.60, l2_cache=0.55, dram=0.60, tensor_pipe=0.40, fma_pipe=0.75), 3.0),
        ("roberta_b", lo, 45.0, 5.2, 0.06, 0.80,
         dict(l1_cache=0.35, l2_cache=0.70, dram=0.65, tensor_pipe=0.70, fma_pipe=0.30), 3.5),
    ]
    out = {}
    for model_id, pri, deadline, base, tf, kf, peaks, half in specs:
        out[model_id] = _synthetic_profile(model_id, pri, deadline, base, tf, kf, peaks, half)
    return out


def random_profile(
    rng: np.random.Generator,
    model_id: str,
    priority: Optional[PriorityLevel] = None,
    max_batch_size: int = 8,
) -> ModelProfile:
    """Random but always-valid profile for property tests."""
    if priority is None:
        priority = PriorityLevel(int(rng.integers(0, 2)))
    base = float(rng.uniform(0.8, 6.0))
    transfer_frac = float(rng.uniform(0.05, 0.2))
    kernel_frac = float(rng.uniform(0.6, 0.78))
    peaks = {m: float(rng.uniform(0.15, 0.9)) for m in DEFAULT_METRICS}
    half = float(rng.uniform(1.0, 4.0))
    deadline = base * (1.5 + float(rng.uniform(0.5, 6.0)))
    return _synthetic_profile(
        model_id, priority, deadline, base, transfer_frac, kernel_frac, peaks, half,
        max_batch_size=max_batch_size,
    )
