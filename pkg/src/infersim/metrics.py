"""Metrics over a finished run: per-class deadline violation rates,
nearest-rank latency percentiles, windowed goodput, predictor error series,
kernel-overhead distribution, and the low-priority cap timeline. Also the
profile perturbation used for drift-sensitivity studies."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .domain import ModelProfile, PriorityLevel


def nearest_rank(sorted_values: Sequence[float], pct: float) -> Optional[float]:
    """Nearest-rank percentile: the ceil(p/100 * N)-th smallest value."""
    n = len(sorted_values)
    if n == 0:
        return None
    rank = max(1, math.ceil(pct / 100.0 * n))
    return sorted_values[min(rank, n) - 1]


@dataclass
class ClassMetrics:
    arrivals: int = 0
    completed: int = 0
    dropped: int = 0
    violations: int = 0
    violation_rate_pct: float = 0.0
    p50_latency: Optional[float] = None
    p95_latency: Optional[float] = None
    p99_latency: Optional[float] = None
    goodput_counts: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "arrivals": self.arrivals,
            "completed": self.completed,
            "dropped": self.dropped,
            "violations": self.violations,
            "violation_rate_pct": self.violation_rate_pct,
            "p50_latency_ms": self.p50_latency,
            "p95_latency_ms": self.p95_latency,
            "p99_latency_ms": self.p99_latency,
            "goodput_counts": list(self.goodput_counts),
        }


@dataclass
class MetricsReport:
    per_class: dict[PriorityLevel, ClassMetrics]
    window_ms: float
    intf_error: list[float]          # signed relative error of the slowdown prediction
    latency_error: list[float]       # signed relative error of the latency estimate
    kernel_overhead: list[float]     # |measured - isolated| / isolated per batch
    cap_timeline: list[tuple[float, int, float]]
    partial: bool = False

    def goodput_per_s(self, priority: PriorityLevel) -> list[float]:
        scale = 1000.0 / self.window_ms
        return [c * scale for c in self.per_class[priority].goodput_counts]

    def to_dict(self) -> dict:
        def error_stats(errors: list[float]) -> dict:
            if not errors:
                return {"count": 0}
            abs_sorted = sorted(abs(e) for e in errors)
            return {
                "count": len(errors),
                "median_abs": nearest_rank(abs_sorted, 50),
                "p95_abs": nearest_rank(abs_sorted, 95),
                "p99_abs": nearest_rank(abs_sorted, 99),
            }

        return {
            "window_ms": self.window_ms,
            "partial": self.partial,
            "high": self.per_class[PriorityLevel.HIGH].to_dict(),
            "low": self.per_class[PriorityLevel.LOW].to_dict(),
            "intf_error": error_stats(self.intf_error),
            "latency_error": error_stats(self.latency_error),
            "kernel_overhead": error_stats(self.kernel_overhead),
        }


def compute_metrics(
    request_rows: list[dict],
    batch_rows: Optional[list[dict]] = None,
    feedback_rows: Optional[list[dict]] = None,
    cap_rows: Optional[list[dict]] = None,
    window_ms: float = 1000.0,
) -> MetricsReport:
    """Aggregate a run's outcome rows. Early-dropped requests count as
    deadline violations; latency percentiles cover completed requests;
    goodput buckets on-time completions by completion-time window."""
    per_class = {p: ClassMetrics() for p in PriorityLevel}
    latencies: dict[PriorityLevel, list[float]] = {p: [] for p in PriorityLevel}
    goodput: dict[PriorityLevel, dict[int, int]] = {p: {} for p in PriorityLevel}
    partial = False

    for row in request_rows:
        pri = PriorityLevel.from_name(row["priority"])
        cm = per_class[pri]
        cm.arrivals += 1
        if int(row["dropped"]):
            cm.dropped += 1
            cm.violations += 1
            continue
        if row["completion"] == "":
            partial = True
            continue
        completion = float(row["completion"])
        cm.completed += 1
        latencies[pri].append(float(row["latency"]))
        if int(row["violated"]):
            cm.violations += 1
        else:
            window = int(completion // window_ms)
            goodput[pri][window] = goodput[pri].get(window, 0) + 1

    for pri, cm in per_class.items():
        if cm.arrivals:
            cm.violation_rate_pct = 100.0 * cm.violations / cm.arrivals
        vals = sorted(latencies[pri])
        cm.p50_latency = nearest_rank(vals, 50)
        cm.p95_latency = nearest_rank(vals, 95)
        cm.p99_latency = nearest_rank(vals, 99)
        if goodput[pri]:
            last = max(goodput[pri])
            cm.goodput_counts = [goodput[pri].get(w, 0) for w in range(last + 1)]

    intf_error: list[float] = []
    kernel_overhead: list[float] = []
    latency_error: list[float] = []
    for row in feedback_rows or []:
        actual = float(row["actual"])
        intf_error.append((float(row["predicted"]) - actual) / actual)
    for row in batch_rows or []:
        isolated = float(row["isolated_kernel"])
        measured = float(row["measured_kernel"])
        kernel_overhead.append(abs(measured - isolated) / isolated)
        actual_latency = float(row["actual_latency"])
        latency_error.append((float(row["est_latency"]) - actual_latency) / actual_latency)

    cap_timeline = [
        (float(r["time"]), int(r["gpu"]), float(r["cap_pct"])) for r in cap_rows or []
    ]
    return MetricsReport(
        per_class=per_class,
        window_ms=window_ms,
        intf_error=intf_error,
        latency_error=latency_error,
        kernel_overhead=kernel_overhead,
        cap_timeline=cap_timeline,
        partial=partial,
    )


def perturb_profiles(
    profiles: dict[str, ModelProfile], magnitude_pct: float, seed
) -> dict[str, ModelProfile]:
    """Multiply every profiled throughput value by (1 + u) with
    u ~ Uniform(-m%, +m%), clamped back into [0, 1]; latencies are left
    untouched."""
    if not 0 <= magnitude_pct <= 100:
        raise ValueError(f"magnitude must be within [0, 100], got {magnitude_pct}")
    rng = np.random.default_rng(seed)
    m = magnitude_pct / 100.0

    def wobble(value: float) -> float:
        u = float(rng.uniform(-m, m))
        return min(1.0, max(0.0, value * (1.0 + u)))

    out: dict[str, ModelProfile] = {}
    for model_id in sorted(profiles):
        p = profiles[model_id]
        out[model_id] = ModelProfile(
            model_id=p.model_id,
            priority=p.priority,
            deadline_ms=p.deadline_ms,
            batch_timeout_ms=p.batch_timeout_ms,
            max_batch_size=p.max_batch_size,
            total_latency=list(p.total_latency),
            transfer_latency=list(p.transfer_latency),
            kernel_latency=list(p.kernel_latency),
            throughput=[tuple(wobble(v) for v in row) for row in p.throughput],
            self_compute=[wobble(v) for v in p.self_compute],
            self_memory=[wobble(v) for v in p.self_memory],
            metrics=p.metrics,
        )
    return out
