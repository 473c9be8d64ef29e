"""Reference scheduling policies behind the same pass interface as the
predictive scheduler: temporal sharing, static spatial sharing with a fixed
concurrency cap, and reactive spatial sharing that throttles low-priority
concurrency on feedback. All share early dropping and priority-ordered
queue scanning."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from .domain import PriorityLevel
from .predictor import InterferencePredictor
from .runtime import GpuRuntimeState
from .scheduler import (
    BatchPlan,
    PredictivePolicy,
    SchedulingPolicy,
    TaskQueue,
    largest_feasible,
)

POLICY_NAMES = ("predictive", "temporal", "static", "reactive")

ABLATION_VARIANTS = (
    "full",
    "no_priority_scan",
    "no_gamma_advantage",
    "no_meet",
    "no_violate_aimd",
)


def _isolated_latency_plan(queue: TaskQueue, gpu_id: int, size: int, now: float) -> BatchPlan:
    profile = queue.profile
    latency = (now - queue.front().arrival_time) + profile.total_latency_ms(size)
    return BatchPlan(size=size, gpu_id=gpu_id, est_latency=latency, intf_pred=1.0, assumed=())


class TemporalPolicy(SchedulingPolicy):
    """One batch per GPU at a time; the batch size is the largest whose
    isolated latency plus the queue delay already incurred still meets the
    front request's deadline."""

    name = "temporal"

    def propose(self, queue, gpus, now):
        idle = [g for g in gpus if not g.running]
        if not idle:
            return None
        profile = queue.profile
        deadline = queue.front().deadline_abs
        k_max = min(len(queue.pending), profile.max_batch_size)
        size = largest_feasible(
            k_max, lambda k: now + profile.total_latency_ms(k) <= deadline
        )
        if size is None:
            return None
        return _isolated_latency_plan(queue, idle[0].gpu_id, size, now)


class StaticSpatialPolicy(SchedulingPolicy):
    """Concurrency capped at a fixed count per GPU; no interference or
    deadline feasibility checks, batch size is simply everything buffered up
    to the model maximum."""

    name = "static"

    def __init__(self, cap: int = 3):
        self.cap = cap

    def propose(self, queue, gpus, now):
        open_gpus = [g for g in gpus if len(g.running) < min(self.cap, g.concurrency_limit)]
        if not open_gpus:
            return None
        gpu = min(open_gpus, key=lambda g: (len(g.running), g.gpu_id))
        size = min(len(queue.pending), queue.profile.max_batch_size)
        return _isolated_latency_plan(queue, gpu.gpu_id, size, now)


@dataclass
class ReactiveState:
    """Low-priority concurrency allowance: shrinks by one on each
    high-priority deadline miss, floored at 1, and is unconditionally
    restored on a fixed period."""

    lp_allowance: int = 3
    default_allowance: int = 3
    min_allowance: int = 1
    hp_bound: int = 3
    reset_period_ms: float = 200.0
    last_reset: float = 0.0

    def catch_up(self, now: float) -> None:
        if now - self.last_reset >= self.reset_period_ms:
            periods = math.floor((now - self.last_reset) / self.reset_period_ms)
            self.lp_allowance = self.default_allowance
            self.last_reset += periods * self.reset_period_ms

    def on_hp_violation(self) -> None:
        self.lp_allowance = max(self.min_allowance, self.lp_allowance - 1)


class ReactiveSpatialPolicy(SchedulingPolicy):
    """Spatial sharing under the global concurrency limit, with the
    low-priority class additionally capped by the reactive allowance."""

    name = "reactive"

    def __init__(self, state: Optional[ReactiveState] = None):
        self.state = state if state is not None else ReactiveState()

    def begin_pass(self, now: float) -> None:
        self.state.catch_up(now)

    def _class_open(self, gpu: GpuRuntimeState, priority: PriorityLevel) -> bool:
        if not gpu.has_slot():
            return False
        count = sum(1 for e in gpu.running if e.priority is priority)
        bound = self.state.lp_allowance if priority is PriorityLevel.LOW else self.state.hp_bound
        return count < bound

    def propose(self, queue, gpus, now):
        open_gpus = [g for g in gpus if self._class_open(g, queue.priority)]
        if not open_gpus:
            return None
        gpu = min(open_gpus, key=lambda g: (len(g.running), g.gpu_id))
        size = min(len(queue.pending), queue.profile.max_batch_size)
        return _isolated_latency_plan(queue, gpu.gpu_id, size, now)

    def on_hp_violation(self, gpus, gpu_id, now):
        self.state.catch_up(now)
        self.state.on_hp_violation()


def make_policy(
    name: str,
    predictor: InterferencePredictor,
    variant: str = "full",
) -> SchedulingPolicy:
    """Build a policy by name; ``variant`` selects an ablation of the
    predictive policy and is ignored by the baselines. The
    ``no_gamma_advantage`` variant is realized in the simulator's ground
    truth (equal priority factors), not here."""
    if name == "predictive":
        if variant not in ABLATION_VARIANTS:
            raise ValueError(f"unknown ablation variant {variant!r}")
        return PredictivePolicy(
            predictor,
            use_priority_order=variant != "no_priority_scan",
            use_meet=variant != "no_meet",
            use_violate=variant != "no_violate_aimd",
        )
    if name == "temporal":
        return TemporalPolicy()
    if name == "static":
        return StaticSpatialPolicy()
    if name == "reactive":
        return ReactiveSpatialPolicy()
    raise ValueError(f"unknown policy {name!r}, expected one of {POLICY_NAMES}")
