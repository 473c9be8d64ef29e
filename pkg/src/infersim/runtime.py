"""Per-GPU runtime state: running-task list, co-location aggregates, the
PCIe link, and the AIMD cap on low-priority throughput."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from .domain import Batch, PriorityLevel, ThroughputTimeline
from .pcie import PcieLinkState


@dataclass
class AimdState:
    """Additive-increase cap (percent of peak) on the aggregate throughput
    of low-priority batches per GPU; resets to the floor whenever a
    high-priority task misses its deadline."""

    cap_pct: float = 75.0
    floor: float = 75.0
    ceiling: float = 100.0
    increase_pct: float = 0.25
    interval_ms: float = 100.0
    last_tick: float = 0.0

    def advance(self, now: float) -> None:
        """Apply one additive increase per whole interval elapsed."""
        if now < self.last_tick:
            raise ValueError(f"aimd tick moving backwards: {now} < {self.last_tick}")
        whole = math.floor((now - self.last_tick) / self.interval_ms)
        if whole <= 0:
            return
        self.cap_pct = min(self.ceiling, self.cap_pct + whole * self.increase_pct)
        self.last_tick += whole * self.interval_ms

    def reset(self) -> None:
        self.cap_pct = self.floor

    def cap_fraction(self) -> float:
        return self.cap_pct / 100.0


def aimd_tick(state: AimdState, now: float) -> AimdState:
    state.advance(now)
    return state


def aimd_on_hp_violation(state: AimdState) -> AimdState:
    state.reset()
    return state


@dataclass
class RunningTaskEntry:
    """Book-keeping for one dispatched batch: its profiled per-metric
    contribution, the co-located throughput it has observed (excluding
    itself), and the deadline/latency context used by the violate check."""

    batch: Batch
    contribution: tuple[float, ...]
    self_compute: float
    self_memory: float
    kernel_latency_ms: float
    deadline_abs: float
    intf_predicted: float
    kernel_start_estimate: float
    timeline: ThroughputTimeline = field(default_factory=ThroughputTimeline)
    kernel_started: bool = False

    @property
    def priority(self) -> PriorityLevel:
        return self.batch.priority


def record_colocation_change(entry: RunningTaskEntry, now: float, new_aggregate) -> RunningTaskEntry:
    """Append the new co-located aggregate (excluding the entry itself) to
    the entry's step-hold timeline."""
    entry.timeline.record(now, new_aggregate)
    return entry


class GpuRuntimeState:
    """Running-task list plus link and cap state for one GPU. Mutated only
    by the owning scheduling/simulation context."""

    def __init__(
        self,
        gpu_id: int,
        n_metrics: int,
        concurrency_limit: int = 4,
        aimd: Optional[AimdState] = None,
    ):
        self.gpu_id = gpu_id
        self.n_metrics = n_metrics
        self.concurrency_limit = concurrency_limit
        self.running: list[RunningTaskEntry] = []
        self.pcie = PcieLinkState()
        self.aimd = aimd if aimd is not None else AimdState()
        self.aggregate_throughput: tuple[float, ...] = (0.0,) * n_metrics

    def has_slot(self) -> bool:
        return len(self.running) < self.concurrency_limit

    def _recompute_aggregate(self) -> None:
        agg = [0.0] * self.n_metrics
        for e in self.running:
            for i, c in enumerate(e.contribution):
                agg[i] += c
        self.aggregate_throughput = tuple(agg)

    def aggregate_excluding(self, entry: RunningTaskEntry) -> tuple[float, ...]:
        return tuple(
            a - c for a, c in zip(self.aggregate_throughput, entry.contribution)
        )

    def low_priority_aggregate(self) -> tuple[float, ...]:
        agg = [0.0] * self.n_metrics
        for e in self.running:
            if e.priority is PriorityLevel.LOW:
                for i, c in enumerate(e.contribution):
                    agg[i] += c
        return tuple(agg)

    def add_entry(self, entry: RunningTaskEntry, now: float) -> None:
        if not self.has_slot():
            raise RuntimeError(f"gpu {self.gpu_id}: concurrency limit exceeded")
        self.running.append(entry)
        self._recompute_aggregate()
        for e in self.running:
            record_colocation_change(e, now, self.aggregate_excluding(e))

    def remove_entry(self, entry: RunningTaskEntry, now: float) -> None:
        try:
            self.running.remove(entry)
        except ValueError:
            raise RuntimeError(
                f"gpu {self.gpu_id}: batch {entry.batch.batch_id} is not running here"
            ) from None
        self._recompute_aggregate()
        for e in self.running:
            record_colocation_change(e, now, self.aggregate_excluding(e))
