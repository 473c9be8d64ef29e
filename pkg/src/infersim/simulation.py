"""Deterministic discrete-event simulator standing in for the GPUs.

Batch lifecycle: scheduling decision, FIFO upstream transfer on the target
GPU's link, kernel execution under a progress-rate model whose instantaneous
slowdown comes from the hidden ground truth, then completion feedback. Event
ties break by (kind, insertion order): completions free capacity before new
decisions are made at the same instant.
"""
from __future__ import annotations

import hashlib
import heapq
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .baselines import make_policy
from .config import ExperimentConfig
from .domain import PriorityLevel, Request, SimulationOrderError, ThroughputTimeline
from .metrics import MetricsReport, compute_metrics
from .oracle import ground_truth_slowdown
from .predictor import InterferencePredictor, PredictorParams
from .runtime import AimdState, GpuRuntimeState
from .scheduler import BatchPlan, ScheduleDecision, TaskQueue, complete_batch, run_scheduling_pass, submit_plan

# event kinds; the numeric value is also the tie-break rank at equal times
EV_KERNEL_COMPLETE = 0
EV_TRANSFER_COMPLETE = 1
EV_ARRIVAL = 2
EV_BATCH_TIMEOUT = 3
EV_AIMD_TICK = 4

_WORK_EPS = 1e-9  # ms of isolated work tolerated as float wobble


class ExecutionState:
    """Progress of one running kernel: remaining isolated work shrinks at
    1/slowdown per wall millisecond; the slowdown is re-evaluated at every
    co-location change. Segments record (wall duration, slowdown) so the
    consumed work integral can be audited."""

    __slots__ = ("remaining", "slowdown", "noise", "last_update", "version", "segments")

    def __init__(self, isolated_work_ms: float, noise: float = 1.0):
        self.remaining = isolated_work_ms
        self.noise = noise
        self.slowdown = 1.0
        self.last_update: Optional[float] = None
        self.version = 0
        self.segments: list[tuple[float, float]] = []

    def begin(self, now: float, slowdown: float) -> None:
        self.slowdown = slowdown
        self.last_update = now

    def _consume(self, now: float) -> None:
        d = now - self.last_update
        if d < 0:
            raise SimulationOrderError(f"execution advanced backwards by {-d} ms")
        if d > 0:
            self.segments.append((d, self.slowdown))
            self.remaining -= d / self.slowdown
            if self.remaining < -_WORK_EPS:
                raise SimulationOrderError(f"negative remaining work: {self.remaining}")
            if self.remaining < 0.0:
                self.remaining = 0.0
        self.last_update = now

    def advance(self, now: float, new_slowdown: float) -> None:
        self._consume(now)
        self.slowdown = new_slowdown
        self.version += 1

    def finish(self, now: float) -> None:
        self._consume(now)

    def eta(self) -> float:
        return self.last_update + self.remaining * self.slowdown

    def consumed_work(self) -> float:
        return sum(d / s for d, s in self.segments)


def _fmt_segments(segments: list[tuple[float, float]]) -> str:
    return "|".join(f"{d!r}:{s!r}" for d, s in segments)


def parse_segments(text: str) -> list[tuple[float, float]]:
    if not text:
        return []
    out = []
    for part in text.split("|"):
        d, s = part.split(":")
        out.append((float(d), float(s)))
    return out


@dataclass
class SimResult:
    policy: str
    policy_variant: str
    seed: int
    trace_rows: list[dict]
    request_rows: list[dict]
    decision_rows: list[dict]
    feedback_rows: list[dict]
    cap_rows: list[dict]
    batch_rows: list[dict]
    metrics: MetricsReport

    def trace_csv_text(self) -> str:
        from .report import TRACE_COLUMNS, rows_to_csv_text

        return rows_to_csv_text(self.trace_rows, TRACE_COLUMNS)

    def trace_hash(self) -> str:
        return hashlib.sha256(self.trace_csv_text().encode()).hexdigest()


class Simulation:
    def __init__(
        self,
        config: ExperimentConfig,
        seed: Optional[int] = None,
        predictor: Optional[InterferencePredictor] = None,
    ):
        config.validate()
        self.cfg = config
        self.seed = config.seed if seed is None else seed
        self.profiles = config.profiles
        any_profile = next(iter(self.profiles.values()))
        self.n_metrics = len(any_profile.metrics)

        self.queues: dict[str, TaskQueue] = {
            mid: TaskQueue(p) for mid, p in sorted(self.profiles.items())
        }
        self._queue_list = list(self.queues.values())
        self.gpus = [
            GpuRuntimeState(
                i,
                self.n_metrics,
                config.concurrency_limit,
                AimdState(
                    cap_pct=config.aimd.floor,
                    floor=config.aimd.floor,
                    ceiling=config.aimd.ceiling,
                    increase_pct=config.aimd.increase_pct,
                    interval_ms=config.aimd.interval_ms,
                ),
            )
            for i in range(config.n_gpus)
        ]
        self.predictor = predictor if predictor is not None else InterferencePredictor(
            PredictorParams(weights=(0.1,) * self.n_metrics)
        )
        self.policy = make_policy(config.policy, self.predictor, config.policy_variant)
        self.gt = config.ground_truth
        if config.policy == "predictive" and config.policy_variant == "no_gamma_advantage":
            self.gt = self.gt.without_priority_advantage()

        self._noise_rng = np.random.default_rng(np.random.SeedSequence([self.seed, 1_000_003]))
        self._events: list[tuple[float, int, int, tuple]] = []
        self._seq = 0
        self._batch_seq = 0
        self._pass_seq = 0
        self._timeout_gen: dict[str, int] = {}
        self._exec: dict[str, ExecutionState] = {}
        self._entries: dict[str, object] = {}
        self._batches: dict[str, object] = {}
        self._batch_meta: dict[str, dict] = {}

        self.trace_rows: list[dict] = []
        self.request_rows: list[dict] = []
        self.decision_rows: list[dict] = []
        self.feedback_rows: list[dict] = []
        self.cap_rows: list[dict] = []
        self.batch_rows: list[dict] = []

        streams = config.workload.generate(self.seed)
        self.total_requests = 0
        self.resolved_requests = 0
        for model_id in sorted(streams):
            profile = self.profiles[model_id]
            for k, t in enumerate(streams[model_id]):
                req = Request(
                    request_id=f"{model_id}-{k}",
                    model_id=model_id,
                    arrival_time=t,
                    deadline_abs=t + profile.deadline_ms,
                )
                self._push(t, EV_ARRIVAL, (model_id, req))
                self.total_requests += 1

        for gpu in self.gpus:
            self._cap_row(0.0, gpu)
        if self.total_requests:
            self._push(config.aimd.interval_ms, EV_AIMD_TICK, ())

    # -- plumbing ----------------------------------------------------------

    def _push(self, time: float, kind: int, payload: tuple) -> None:
        self._seq += 1
        heapq.heappush(self._events, (time, kind, self._seq, payload))

    def _trace(self, time: float, event: str, gpu="", model="", batch="", request="", detail="") -> None:
        self.trace_rows.append(
            {
                "time": time,
                "event": event,
                "gpu": gpu,
                "model": model,
                "batch": batch,
                "request": request,
                "detail": detail,
            }
        )

    def _cap_row(self, time: float, gpu: GpuRuntimeState) -> None:
        self.cap_rows.append({"time": time, "gpu": gpu.gpu_id, "cap_pct": gpu.aimd.cap_pct})

    def _signal_hp_violation(self, gpu_id: Optional[int], now: float) -> None:
        before = [g.aimd.cap_pct for g in self.gpus]
        self.policy.on_hp_violation(self.gpus, gpu_id, now)
        for gpu, old in zip(self.gpus, before):
            if gpu.aimd.cap_pct != old:
                self._cap_row(now, gpu)
                self._trace(now, "aimd_reset", gpu=gpu.gpu_id, detail=f"cap={gpu.aimd.cap_pct!r}")

    def _ensure_timeout(self, queue: TaskQueue, now: float) -> None:
        if not queue.pending:
            return
        if self._timeout_gen.get(queue.model_id) == queue.front_generation:
            return
        t = max(now, queue.timeout_deadline())
        self._push(t, EV_BATCH_TIMEOUT, (queue.model_id, queue.front_generation))
        self._timeout_gen[queue.model_id] = queue.front_generation

    # -- request resolution --------------------------------------------------

    def _resolve_dropped(self, request: Request, queue: TaskQueue, now: float) -> None:
        self.request_rows.append(
            {
                "request": request.request_id,
                "model": request.model_id,
                "priority": queue.priority.label,
                "arrival": request.arrival_time,
                "deadline_abs": request.deadline_abs,
                "batch": "",
                "completion": "",
                "latency": "",
                "dropped": 1,
                "violated": 1,
            }
        )
        self.resolved_requests += 1

    def _resolve_completed(self, request: Request, batch, completion: float, priority: PriorityLevel) -> bool:
        violated = completion > request.deadline_abs
        self.request_rows.append(
            {
                "request": request.request_id,
                "model": request.model_id,
                "priority": priority.label,
                "arrival": request.arrival_time,
                "deadline_abs": request.deadline_abs,
                "batch": batch.batch_id,
                "completion": completion,
                "latency": completion - request.arrival_time,
                "dropped": 0,
                "violated": 1 if violated else 0,
            }
        )
        self.resolved_requests += 1
        return violated

    # -- oracle ----------------------------------------------------------------

    def _slowdown_for(self, gpu: GpuRuntimeState, entry, noise: float) -> float:
        return ground_truth_slowdown(
            self.gt,
            gpu.aggregate_excluding(entry),
            entry.self_compute,
            entry.self_memory,
            entry.priority,
            noise,
        )

    def _recompute(self, gpu: GpuRuntimeState, now: float) -> None:
        for entry in gpu.running:
            if not entry.kernel_started:
                continue
            bid = entry.batch.batch_id
            ex = self._exec[bid]
            ex.advance(now, self._slowdown_for(gpu, entry, ex.noise))
            self._push(ex.eta(), EV_KERNEL_COMPLETE, (bid, ex.version))

    # -- scheduling --------------------------------------------------------------

    def _pass(self, now: float) -> None:
        self._pass_seq += 1
        pass_id = self._pass_seq

        def on_submit(queue: TaskQueue, plan: BatchPlan) -> ScheduleDecision:
            bid = f"b{self._batch_seq}"
            self._batch_seq += 1
            batch, entry, (t_start, t_end) = submit_plan(queue, plan, self.gpus, now, bid)
            noise = 1.0
            if self.gt.noise_sigma > 0:
                noise = math.exp(self._noise_rng.normal(0.0, self.gt.noise_sigma))
            self._exec[bid] = ExecutionState(entry.kernel_latency_ms, noise)
            self._entries[bid] = entry
            self._batches[bid] = batch
            self._batch_meta[bid] = {
                "est_latency": plan.est_latency,
                "front_enqueue": batch.front_enqueue_time,
            }
            self._push(t_end, EV_TRANSFER_COMPLETE, (bid,))
            self._recompute(self.gpus[plan.gpu_id], now)
            self._trace(
                now,
                "submit",
                gpu=plan.gpu_id,
                model=queue.model_id,
                batch=bid,
                detail=f"size={plan.size} transfer={t_start!r}..{t_end!r} est={plan.est_latency!r}",
            )
            decision = ScheduleDecision(
                time=now,
                pass_id=pass_id,
                model_id=queue.model_id,
                size=plan.size,
                gpu_id=plan.gpu_id,
                est_latency=plan.est_latency,
                intf_pred=plan.intf_pred,
                assumed=plan.assumed,
            )
            self.decision_rows.append(
                {
                    "time": now,
                    "pass_id": pass_id,
                    "model": decision.model_id,
                    "size": decision.size,
                    "gpu": decision.gpu_id,
                    "est_latency": decision.est_latency,
                    "intf_pred": decision.intf_pred,
                }
            )
            return decision

        def on_drop(queue: TaskQueue, dropped: list[Request]) -> None:
            for r in dropped:
                self._resolve_dropped(r, queue, now)
                self._trace(now, "drop", model=queue.model_id, request=r.request_id)
            if queue.priority is PriorityLevel.HIGH:
                self._signal_hp_violation(None, now)

        run_scheduling_pass(self.policy, self._queue_list, self.gpus, now, on_submit, on_drop)
        for queue in self._queue_list:
            self._ensure_timeout(queue, now)

    # -- event handlers ---------------------------------------------------------

    def _on_arrival(self, now: float, model_id: str, request: Request) -> None:
        queue = self.queues[model_id]
        queue.push(request)
        self._trace(now, "arrival", model=model_id, request=request.request_id)
        if len(queue.pending) == queue.profile.max_batch_size:
            self._pass(now)
        self._ensure_timeout(queue, now)

    def _on_timeout(self, now: float, model_id: str, generation: int) -> None:
        queue = self.queues[model_id]
        if queue.pending and generation == queue.front_generation:
            self._pass(now)

    def _on_transfer_complete(self, now: float, batch_id: str) -> None:
        entry = self._entries[batch_id]
        batch = self._batches[batch_id]
        gpu = self.gpus[batch.gpu_id]
        gpu.pcie.calibrate(now)  # measured transfer end; exact in simulation
        batch.kernel_start = now
        entry.kernel_started = True
        entry.kernel_start_estimate = now
        # the feedback window covers kernel execution only
        entry.timeline = ThroughputTimeline([(now, gpu.aggregate_excluding(entry))])
        ex = self._exec[batch_id]
        ex.begin(now, self._slowdown_for(gpu, entry, ex.noise))
        self._push(ex.eta(), EV_KERNEL_COMPLETE, (batch_id, ex.version))
        self._trace(
            now, "kernel_start", gpu=batch.gpu_id, model=batch.model_id, batch=batch_id,
            detail=f"slowdown={ex.slowdown!r}",
        )

    def _on_kernel_complete(self, now: float, batch_id: str, version: int) -> None:
        ex = self._exec.get(batch_id)
        if ex is None or version != ex.version:
            return  # superseded by a co-location change
        entry = self._entries[batch_id]
        batch = self._batches[batch_id]
        gpu = self.gpus[batch.gpu_id]
        profile = self.profiles[batch.model_id]
        ex.finish(now)
        measured = now - batch.kernel_start
        completion = now + profile.residual_ms(batch.size)
        batch.completion_time = completion

        any_violated = False
        for r in batch.requests:
            if self._resolve_completed(r, batch, completion, batch.priority):
                any_violated = True

        sample, update = complete_batch(gpu, entry, measured, now, self.predictor)
        meta = self._batch_meta.pop(batch_id)
        self.feedback_rows.append(
            {
                "time": now,
                "batch": batch_id,
                "predicted": update.predicted,
                "actual": sample.actual,
                "residual": update.residual,
                "predicted_at_schedule": sample.predicted_at_schedule,
                "skipped": 1 if update.skipped else 0,
                "saturated": 1 if update.saturated else 0,
            }
        )
        self.batch_rows.append(
            {
                "batch": batch_id,
                "model": batch.model_id,
                "priority": batch.priority.label,
                "size": batch.size,
                "gpu": batch.gpu_id,
                "front_enqueue": batch.front_enqueue_time,
                "sched_time": batch.sched_time,
                "transfer_start": batch.transfer_start,
                "kernel_start": batch.kernel_start,
                "kernel_end": now,
                "completion": completion,
                "isolated_kernel": entry.kernel_latency_ms,
                "measured_kernel": measured,
                "intf_pred": entry.intf_predicted,
                "intf_actual": sample.actual,
                "est_latency": meta["est_latency"],
                "actual_latency": completion - meta["front_enqueue"],
                "segments": _fmt_segments(ex.segments),
            }
        )
        del self._exec[batch_id]
        del self._entries[batch_id]
        del self._batches[batch_id]
        self._recompute(gpu, now)
        self._trace(
            now, "kernel_complete", gpu=batch.gpu_id, model=batch.model_id, batch=batch_id,
            detail=f"measured={measured!r} intf={sample.actual!r}",
        )
        if batch.priority is PriorityLevel.HIGH and any_violated:
            self._signal_hp_violation(gpu.gpu_id, now)
        self._pass(now)

    def _on_tick(self, now: float) -> None:
        for gpu in self.gpus:
            old = gpu.aimd.cap_pct
            gpu.aimd.advance(now)
            if gpu.aimd.cap_pct != old:
                self._cap_row(now, gpu)
        self._trace(now, "aimd_tick")
        self._pass(now)
        if self.resolved_requests < self.total_requests:
            self._push(now + self.cfg.aimd.interval_ms, EV_AIMD_TICK, ())

    # -- main loop ---------------------------------------------------------------

    def run(self) -> SimResult:
        while self._events:
            time, kind, _seq, payload = heapq.heappop(self._events)
            if kind == EV_KERNEL_COMPLETE:
                self._on_kernel_complete(time, *payload)
            elif kind == EV_TRANSFER_COMPLETE:
                self._on_transfer_complete(time, *payload)
            elif kind == EV_ARRIVAL:
                self._on_arrival(time, *payload)
            elif kind == EV_BATCH_TIMEOUT:
                self._on_timeout(time, *payload)
            elif kind == EV_AIMD_TICK:
                self._on_tick(time)
            else:  # pragma: no cover
                raise SimulationOrderError(f"unknown event kind {kind}")

        if self.resolved_requests != self.total_requests:  # pragma: no cover
            raise SimulationOrderError(
                f"{self.total_requests - self.resolved_requests} requests left unresolved"
            )
        metrics = compute_metrics(
            self.request_rows,
            self.batch_rows,
            self.feedback_rows,
            self.cap_rows,
            window_ms=self.cfg.goodput_window_ms,
        )
        return SimResult(
            policy=self.cfg.policy,
            policy_variant=self.cfg.policy_variant,
            seed=self.seed,
            trace_rows=self.trace_rows,
            request_rows=self.request_rows,
            decision_rows=self.decision_rows,
            feedback_rows=self.feedback_rows,
            cap_rows=self.cap_rows,
            batch_rows=self.batch_rows,
            metrics=metrics,
        )


def run(config: ExperimentConfig, seed: Optional[int] = None) -> SimResult:
    """Run one experiment; identical (config, seed) pairs produce identical
    traces."""
    return Simulation(config, seed).run()
