"""Shared domain types: priorities, model profiles, requests, batches, and
the step-hold throughput timelines used for time-weighted aggregation.

All timestamps and durations are milliseconds. Resource throughputs are
fractions of peak activity in [0, 1] per metric; aggregates over co-located
batches may exceed 1.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional, Sequence

DEFAULT_METRICS = ("l1_cache", "l2_cache", "dram", "tensor_pipe", "fma_pipe")


class PriorityLevel(enum.IntEnum):
    """Two task classes; HIGH sorts before LOW everywhere."""

    HIGH = 0
    LOW = 1

    @classmethod
    def from_name(cls, name: str) -> "PriorityLevel":
        try:
            return cls[name.upper()]
        except KeyError:
            raise ValueError(f"unknown priority {name!r}, expected 'high' or 'low'") from None

    @property
    def label(self) -> str:
        return self.name.lower()


class ProfileParseError(Exception):
    """Raised when a profile document is structurally malformed (not an
    invariant violation; those come back from validate_profile)."""


class ProfileValidationError(Exception):
    def __init__(self, model_id: str, violations: list[str]):
        self.model_id = model_id
        self.violations = violations
        super().__init__(f"profile {model_id!r}: " + "; ".join(violations))


class SimulationOrderError(Exception):
    """A timeline or event was touched with a timestamp moving backwards;
    indicates a simulation bug, never a workload condition."""


@dataclass
class ModelProfile:
    """Offline per-(model, batch size) measurements.

    Arrays are indexed by batch size minus one and cover every integer size
    1..max_batch_size. Latencies are isolated p95 values: ``total_latency``
    is the full inference latency, ``transfer_latency`` the upstream
    host-to-device copy, ``kernel_latency`` the kernel execution span.
    ``throughput[j-1]`` holds the per-metric resource fractions; the
    ``self_compute``/``self_memory`` entries describe the batch's own
    compute and memory demand.
    """

    model_id: str
    priority: PriorityLevel
    deadline_ms: float
    batch_timeout_ms: float
    max_batch_size: int
    total_latency: list[float]
    transfer_latency: list[float]
    kernel_latency: list[float]
    throughput: list[tuple[float, ...]]
    self_compute: list[float]
    self_memory: list[float]
    metrics: tuple[str, ...] = DEFAULT_METRICS

    def total_latency_ms(self, size: int) -> float:
        return self.total_latency[self._index(size)]

    def transfer_latency_ms(self, size: int) -> float:
        return self.transfer_latency[self._index(size)]

    def kernel_latency_ms(self, size: int) -> float:
        return self.kernel_latency[self._index(size)]

    def residual_ms(self, size: int) -> float:
        """Latency outside transfer and kernel (framework overhead plus the
        downstream copy, which consumes no modeled link time)."""
        i = self._index(size)
        return self.total_latency[i] - self.transfer_latency[i] - self.kernel_latency[i]

    def throughput_at(self, size: int) -> tuple[float, ...]:
        return self.throughput[self._index(size)]

    def self_compute_at(self, size: int) -> float:
        return self.self_compute[self._index(size)]

    def self_memory_at(self, size: int) -> float:
        return self.self_memory[self._index(size)]

    def _index(self, size: int) -> int:
        if not 1 <= size <= self.max_batch_size:
            raise ValueError(f"{self.model_id}: no profile entry for batch size {size}")
        return size - 1


def validate_profile(profile: ModelProfile) -> list[str]:
    """Check every profile invariant; returns a list of violations, empty
    when the profile is consistent. Each message names field, index and rule."""
    v: list[str] = []
    n = profile.max_batch_size
    if n < 1:
        return [f"max_batch_size must be positive, got {n}"]
    arrays = {
        "total_latency": profile.total_latency,
        "transfer_latency": profile.transfer_latency,
        "kernel_latency": profile.kernel_latency,
        "throughput": profile.throughput,
        "self_compute": profile.self_compute,
        "self_memory": profile.self_memory,
    }
    for name, arr in arrays.items():
        if len(arr) != n:
            v.append(f"{name} must have {n} entries (one per batch size), got {len(arr)}")
    if v:
        return v

    for name in ("total_latency", "transfer_latency", "kernel_latency"):
        arr = arrays[name]
        for j in range(1, n + 1):
            if not arr[j - 1] > 0:
                v.append(f"{name} not strictly positive at j={j}")
        for j in range(2, n + 1):
            if arr[j - 1] < arr[j - 2]:
                v.append(f"{name} non-monotone at j={j}")

    for j in range(1, n + 1):
        slack = profile.total_latency[j - 1] - (
            profile.transfer_latency[j - 1] + profile.kernel_latency[j - 1]
        )
        if slack < 0:
            v.append(f"total_latency < transfer_latency + kernel_latency at j={j}")
        row = profile.throughput[j - 1]
        if len(row) != len(profile.metrics):
            v.append(f"throughput row at j={j} has {len(row)} metrics, expected {len(profile.metrics)}")
            continue
        for m, value in zip(profile.metrics, row):
            if not 0.0 <= value <= 1.0:
                v.append(f"throughput {m} out of [0,1] at j={j}: {value}")
        for name in ("self_compute", "self_memory"):
            value = arrays[name][j - 1]
            if not 0.0 <= value <= 1.0:
                v.append(f"{name} out of [0,1] at j={j}: {value}")

    if profile.deadline_ms <= profile.total_latency[0]:
        v.append(
            f"deadline {profile.deadline_ms} must exceed isolated latency at j=1 "
            f"({profile.total_latency[0]}): model can never be served"
        )
    if profile.batch_timeout_ms < 0:
        v.append(f"batch_timeout must be non-negative, got {profile.batch_timeout_ms}")
    return v


@dataclass
class Request:
    request_id: str
    model_id: str
    arrival_time: float
    deadline_abs: float

    def __post_init__(self):
        if self.deadline_abs <= self.arrival_time:
            raise ValueError(f"request {self.request_id}: deadline not after arrival")


@dataclass
class Batch:
    """One or more same-model requests executed as a unit. Lifecycle
    timestamps are filled in as the batch progresses through the system."""

    batch_id: str
    model_id: str
    size: int
    priority: PriorityLevel
    front_enqueue_time: float
    requests: list[Request]
    gpu_id: int = -1
    sched_time: Optional[float] = None
    transfer_start: Optional[float] = None
    kernel_start: Optional[float] = None
    completion_time: Optional[float] = None

    def __post_init__(self):
        if self.size != len(self.requests):
            raise ValueError(f"batch {self.batch_id}: size {self.size} != {len(self.requests)} requests")
        if any(r.model_id != self.model_id for r in self.requests):
            raise ValueError(f"batch {self.batch_id}: mixed models")
        front = min(r.arrival_time for r in self.requests)
        if self.front_enqueue_time != front:
            raise ValueError(f"batch {self.batch_id}: front_enqueue_time != oldest arrival")


def make_batch(batch_id: str, profile: ModelProfile, requests: Sequence[Request]) -> Batch:
    reqs = list(requests)
    return Batch(
        batch_id=batch_id,
        model_id=profile.model_id,
        size=len(reqs),
        priority=profile.priority,
        front_enqueue_time=min(r.arrival_time for r in reqs),
        requests=reqs,
    )


class ThroughputTimeline:
    """Step-hold signal of a per-metric throughput vector.

    A sample is appended each time the observed co-location changes; the
    value holds until the next sample. Two samples at the same timestamp
    collapse to the later one.
    """

    __slots__ = ("times", "values")

    def __init__(self, samples: Optional[Sequence[tuple[float, Sequence[float]]]] = None):
        self.times: list[float] = []
        self.values: list[tuple[float, ...]] = []
        if samples:
            for t, vec in samples:
                self.record(t, vec)

    def __len__(self) -> int:
        return len(self.times)

    def record(self, now: float, vec: Sequence[float]) -> None:
        value = tuple(vec)
        if self.times:
            last = self.times[-1]
            if now < last:
                raise SimulationOrderError(f"timeline sample at {now} precedes last sample at {last}")
            if now == last:
                self.values[-1] = value
                return
        self.times.append(now)
        self.values.append(value)

    def time_weighted_average(self, end_time: float) -> tuple[float, ...]:
        if not self.times:
            raise ValueError("no samples")
        if end_time < self.times[-1]:
            raise ValueError(f"end_time {end_time} precedes last sample at {self.times[-1]}")
        total = end_time - self.times[0]
        if total <= 0.0:
            return self.values[-1]
        n = len(self.values[0])
        acc = [0.0] * n
        for i, value in enumerate(self.values):
            hold_until = self.times[i + 1] if i + 1 < len(self.times) else end_time
            d = hold_until - self.times[i]
            for k in range(n):
                acc[k] += value[k] * d
        return tuple(a / total for a in acc)


def time_weighted_average(timeline: ThroughputTimeline, end_time: float) -> tuple[float, ...]:
    """Duration-weighted mean of a step-hold timeline, the last sample
    holding until ``end_time``."""
    return timeline.time_weighted_average(end_time)
