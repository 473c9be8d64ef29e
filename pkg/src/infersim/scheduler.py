"""Priority-aware scheduling: queue scanning in priority order, early
dropping, binary search for the largest feasible batch size under the
violate/meet constraints, and minimum-latency GPU selection.

The same pass driver serves the baseline policies; they plug in their own
``propose`` logic.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence

from .domain import Batch, ModelProfile, PriorityLevel, Request, make_batch
from .predictor import (
    FeedbackSample,
    InterferencePredictor,
    UpdateResult,
    kernel_delay,
    predict_interference,
)
from .runtime import GpuRuntimeState, RunningTaskEntry


class TaskQueue:
    """FIFO of pending requests for one model. A queue becomes schedulable
    once a full batch is buffered or the front request has waited out the
    batch-formation timeout."""

    def __init__(self, profile: ModelProfile):
        self.profile = profile
        self.model_id = profile.model_id
        self.priority = profile.priority
        self.pending: deque[Request] = deque()
        self.front_generation = 0

    def __len__(self) -> int:
        return len(self.pending)

    def push(self, request: Request) -> bool:
        """Enqueue; returns True when this request became the new front."""
        self.pending.append(request)
        if len(self.pending) == 1:
            self.front_generation += 1
            return True
        return False

    def front(self) -> Request:
        return self.pending[0]

    def timeout_deadline(self) -> float:
        return self.pending[0].arrival_time + self.profile.batch_timeout_ms

    def eligible(self, now: float) -> bool:
        if not self.pending:
            return False
        return len(self.pending) >= self.profile.max_batch_size or now >= self.timeout_deadline()

    def pop_front(self, k: int) -> list[Request]:
        taken = [self.pending.popleft() for _ in range(k)]
        self.front_generation += 1
        return taken


def early_drop(queue: TaskQueue, now: float) -> list[Request]:
    """Discard requests that cannot finish before their deadline even in
    isolation at batch size 1; order of survivors is preserved."""
    floor_latency = queue.profile.total_latency_ms(1)
    dropped = [r for r in queue.pending if r.deadline_abs - now < floor_latency]
    if dropped:
        old_front = queue.pending[0]
        queue.pending = deque(r for r in queue.pending if r.deadline_abs - now >= floor_latency)
        if not queue.pending or queue.pending[0] is not old_front:
            queue.front_generation += 1
    return dropped


def largest_feasible(k_max: int, feasible: Callable[[int], bool]) -> Optional[int]:
    """Largest k in [1, k_max] with feasible(k), assuming feasibility is
    monotone (feasible(k) implies feasible(k-1)); None if even k=1 fails."""
    lo, hi = 1, k_max
    best: Optional[int] = None
    while lo <= hi:
        mid = (lo + hi) // 2
        if feasible(mid):
            best = mid
            lo = mid + 1
        else:
            hi = mid - 1
    return best


def _latency_parts(
    predictor: InterferencePredictor,
    profile: ModelProfile,
    size: int,
    front_enqueue_time: float,
    gpu: GpuRuntimeState,
    now: float,
    assumed: Sequence[float],
) -> tuple[float, float]:
    intf = predict_interference(
        predictor.params,
        assumed,
        profile.self_compute_at(size),
        profile.self_memory_at(size),
        profile.priority,
    )
    latency = (
        profile.total_latency_ms(size)
        + gpu.pcie.estimate_delay(now)
        + kernel_delay(intf, profile.kernel_latency_ms(size))
        + (now - front_enqueue_time)
    )
    return latency, intf


def check_violate(
    gpu: GpuRuntimeState,
    profile: ModelProfile,
    size: int,
    now: float,
    predictor: InterferencePredictor,
) -> bool:
    """True when admitting the candidate would breach the low-priority
    throughput cap or push an equal-or-higher-priority running batch past
    its deadline under the updated co-location."""
    contribution = profile.throughput_at(size)

    if profile.priority is PriorityLevel.LOW:
        cap = gpu.aimd.cap_fraction()
        lp = gpu.low_priority_aggregate()
        for have, add in zip(lp, contribution):
            if have + add > cap:
                return True

    for entry in gpu.running:
        if entry.priority.value > profile.priority.value:
            continue  # lower priority than the candidate: may be sacrificed
        new_agg = tuple(
            a - c + add
            for a, c, add in zip(gpu.aggregate_throughput, entry.contribution, contribution)
        )
        intf_new = predict_interference(
            predictor.params, new_agg, entry.self_compute, entry.self_memory, entry.priority
        )
        kernel_start = (
            entry.batch.kernel_start if entry.kernel_started else entry.kernel_start_estimate
        )
        twa = entry.timeline.time_weighted_average(now)
        intf_cur = predict_interference(
            predictor.params, twa, entry.self_compute, entry.self_memory, entry.priority
        )
        elapsed = max(0.0, now - kernel_start)
        denom = intf_cur * entry.kernel_latency_ms
        progress = min(1.0, elapsed / denom) if denom > 0 else 1.0
        remaining = (1.0 - progress) * entry.kernel_latency_ms * intf_new
        projected = max(now, kernel_start) + remaining
        if projected > entry.deadline_abs:
            return True
    return False


def check_meet(
    gpu: GpuRuntimeState,
    profile: ModelProfile,
    size: int,
    front_enqueue_time: float,
    now: float,
    predictor: InterferencePredictor,
) -> tuple[bool, float, float, tuple[float, ...]]:
    """Can the candidate finish by its binding deadline (the front request's)
    assuming it will see half of the GPU's current aggregate throughput?

    Returns (ok, estimated latency, predicted slowdown, assumed aggregate);
    the latency feeds the minimum-latency GPU choice.
    """
    assumed = tuple(0.5 * a for a in gpu.aggregate_throughput)
    latency, intf = _latency_parts(
        predictor, profile, size, front_enqueue_time, gpu, now, assumed
    )
    # estimated completion = front enqueue + latency; binding deadline is the
    # front request's, so the check reduces to latency vs relative deadline
    ok = latency <= profile.deadline_ms
    return ok, latency, intf, assumed


@dataclass
class BatchPlan:
    size: int
    gpu_id: int
    est_latency: float
    intf_pred: float
    assumed: tuple[float, ...]


@dataclass
class ScheduleDecision:
    time: float
    pass_id: int
    model_id: str
    size: int
    gpu_id: int
    est_latency: float
    intf_pred: float
    assumed: tuple[float, ...] = ()


class SchedulingPolicy:
    """Shared scan behavior; subclasses define per-queue proposals."""

    name = "base"

    def begin_pass(self, now: float) -> None:
        pass

    def queue_order(self, queues: Iterable[TaskQueue], now: float) -> list[TaskQueue]:
        ready = [q for q in queues if q.pending]
        ready.sort(key=lambda q: (q.priority.value, q.front().arrival_time, q.model_id))
        return ready

    def propose(self, queue: TaskQueue, gpus: Sequence[GpuRuntimeState], now: float):
        raise NotImplementedError

    def on_hp_violation(self, gpus: Sequence[GpuRuntimeState], gpu_id: Optional[int], now: float) -> None:
        pass


class PredictivePolicy(SchedulingPolicy):
    """Interference-predictive scheduling: binary-search the largest batch
    size admitted by the violate/meet constraints, then submit to the GPU
    with the lowest estimated latency. Flags exist to switch off individual
    mechanisms for ablation runs."""

    name = "predictive"

    def __init__(
        self,
        predictor: InterferencePredictor,
        use_priority_order: bool = True,
        use_meet: bool = True,
        use_violate: bool = True,
    ):
        self.predictor = predictor
        self.use_priority_order = use_priority_order
        self.use_meet = use_meet
        self.use_violate = use_violate

    def queue_order(self, queues, now):
        ready = [q for q in queues if q.pending]
        if self.use_priority_order:
            ready.sort(key=lambda q: (q.priority.value, q.front().arrival_time, q.model_id))
        else:
            ready.sort(key=lambda q: (q.front().arrival_time, q.model_id))
        return ready

    def propose(self, queue, gpus, now):
        profile = queue.profile
        front_arrival = queue.front().arrival_time
        k_max = min(len(queue.pending), profile.max_batch_size)
        cache: dict[int, Optional[BatchPlan]] = {}

        def best_for(k: int) -> Optional[BatchPlan]:
            if k in cache:
                return cache[k]
            best: Optional[BatchPlan] = None
            for gpu in gpus:
                if not gpu.has_slot():
                    continue
                if self.use_violate and check_violate(gpu, profile, k, now, self.predictor):
                    continue
                ok, latency, intf, assumed = check_meet(
                    gpu, profile, k, front_arrival, now, self.predictor
                )
                if self.use_meet and not ok:
                    continue
                if best is None or (latency, gpu.gpu_id) < (best.est_latency, best.gpu_id):
                    best = BatchPlan(k, gpu.gpu_id, latency, intf, assumed)
            cache[k] = best
            return best

        k = largest_feasible(k_max, lambda size: best_for(size) is not None)
        if k is None:
            return None
        return best_for(k)

    def on_hp_violation(self, gpus, gpu_id, now):
        if gpu_id is None:
            for gpu in gpus:
                gpu.aimd.reset()
        else:
            gpus[gpu_id].aimd.reset()


def submit_plan(
    queue: TaskQueue,
    plan: BatchPlan,
    gpus: Sequence[GpuRuntimeState],
    now: float,
    batch_id: str,
) -> tuple[Batch, RunningTaskEntry, tuple[float, float]]:
    """Realize a plan: pop the requests, build the batch, reserve the PCIe
    link, and register the running-task entry (which records co-location
    samples on every affected timeline)."""
    profile = queue.profile
    requests = queue.pop_front(plan.size)
    batch = make_batch(batch_id, profile, requests)
    batch.gpu_id = plan.gpu_id
    batch.sched_time = now
    gpu = gpus[plan.gpu_id]
    t_start, t_end = gpu.pcie.reserve(now, profile.transfer_latency_ms(plan.size))
    batch.transfer_start = t_start
    entry = RunningTaskEntry(
        batch=batch,
        contribution=profile.throughput_at(plan.size),
        self_compute=profile.self_compute_at(plan.size),
        self_memory=profile.self_memory_at(plan.size),
        kernel_latency_ms=profile.kernel_latency_ms(plan.size),
        deadline_abs=requests[0].deadline_abs,
        intf_predicted=plan.intf_pred,
        kernel_start_estimate=t_end,
    )
    gpu.add_entry(entry, now)
    return batch, entry, (t_start, t_end)


def complete_batch(
    gpu: GpuRuntimeState,
    entry: RunningTaskEntry,
    measured_kernel_ms: float,
    now: float,
    predictor: Optional[InterferencePredictor] = None,
) -> tuple[FeedbackSample, Optional[UpdateResult]]:
    """Retire a finished batch: compute the measured slowdown against the
    isolated kernel latency, assemble the feedback sample from the
    time-weighted co-located throughput over the kernel window, remove the
    entry (stamping departure samples on the survivors' timelines), and feed
    the sample back into the predictor."""
    twa = entry.timeline.time_weighted_average(now)
    intf_actual = measured_kernel_ms / entry.kernel_latency_ms
    sample = FeedbackSample(
        batch_id=entry.batch.batch_id,
        colocated_twa=twa,
        self_compute=entry.self_compute,
        self_memory=entry.self_memory,
        priority=entry.priority,
        actual=intf_actual,
        predicted_at_schedule=entry.intf_predicted,
    )
    gpu.remove_entry(entry, now)
    result = predictor.update(sample) if predictor is not None else None
    return sample, result


def run_scheduling_pass(
    policy: SchedulingPolicy,
    queues: Iterable[TaskQueue],
    gpus: Sequence[GpuRuntimeState],
    now: float,
    on_submit: Callable[[TaskQueue, BatchPlan], ScheduleDecision],
    on_drop: Callable[[TaskQueue, list[Request]], None],
) -> list[ScheduleDecision]:
    """One scheduling pass: early-drop and then scan queues in policy order,
    submitting at most one batch per queue. Infeasible queues are deferred,
    not failed."""
    policy.begin_pass(now)
    decisions: list[ScheduleDecision] = []
    for queue in policy.queue_order(queues, now):
        dropped = early_drop(queue, now)
        if dropped:
            on_drop(queue, dropped)
        if not queue.pending or not queue.eligible(now):
            continue
        plan = policy.propose(queue, gpus, now)
        if plan is None:
            continue
        decisions.append(on_submit(queue, plan))
    return decisions
