"""Shared builders for hand-crafted profiles, queues and GPU states."""
import itertools

from infersim.domain import Batch, ModelProfile, PriorityLevel, Request, ThroughputTimeline
from infersim.runtime import GpuRuntimeState, RunningTaskEntry
from infersim.scheduler import TaskQueue

_request_counter = itertools.count()


def make_profile(
    model_id="m",
    priority=PriorityLevel.HIGH,
    deadline_ms=20.0,
    batch_timeout_ms=1.0,
    max_batch_size=8,
    base_total=3.0,
    transfer_frac=0.15,
    kernel_frac=0.7,
    throughput_row=None,
    metrics=("tensor_pipe",),
    self_compute=0.3,
    self_memory=0.3,
):
    """Linear-latency profile with a constant throughput row per size."""
    if throughput_row is None:
        throughput_row = tuple(0.3 for _ in metrics)
    total, transfer, kernel, rows, cmp_, mem = [], [], [], [], [], []
    for j in range(1, max_batch_size + 1):
        t = base_total * (0.5 + 0.5 * j)
        total.append(t)
        transfer.append(transfer_frac * t)
        kernel.append(kernel_frac * t)
        rows.append(tuple(throughput_row))
        cmp_.append(self_compute)
        mem.append(self_memory)
    return ModelProfile(
        model_id=model_id,
        priority=priority,
        deadline_ms=deadline_ms,
        batch_timeout_ms=batch_timeout_ms,
        max_batch_size=max_batch_size,
        total_latency=total,
        transfer_latency=transfer,
        kernel_latency=kernel,
        throughput=rows,
        self_compute=cmp_,
        self_memory=mem,
        metrics=tuple(metrics),
    )


def make_request(model_id, arrival, deadline_ms):
    rid = f"{model_id}-t{next(_request_counter)}"
    return Request(rid, model_id, arrival, arrival + deadline_ms)


def fill_queue(profile, arrivals):
    queue = TaskQueue(profile)
    for t in arrivals:
        queue.push(make_request(profile.model_id, t, profile.deadline_ms))
    return queue


def make_running_entry(
    gpu,
    profile,
    size,
    now,
    kernel_start=None,
    deadline_abs=None,
    intf_predicted=1.0,
):
    """Register a batch as running on the GPU; kernel_start in the past marks
    it as executing."""
    reqs = [make_request(profile.model_id, now - 1.0, profile.deadline_ms)]
    reqs += [make_request(profile.model_id, now - 0.5, profile.deadline_ms) for _ in range(size - 1)]
    batch = Batch(
        batch_id=f"tb{next(_request_counter)}",
        model_id=profile.model_id,
        size=size,
        priority=profile.priority,
        front_enqueue_time=min(r.arrival_time for r in reqs),
        requests=reqs,
        gpu_id=gpu.gpu_id,
        sched_time=now,
    )
    started = kernel_start is not None and kernel_start <= now
    if started:
        batch.kernel_start = kernel_start
    entry = RunningTaskEntry(
        batch=batch,
        contribution=profile.throughput_at(size),
        self_compute=profile.self_compute_at(size),
        self_memory=profile.self_memory_at(size),
        kernel_latency_ms=profile.kernel_latency_ms(size),
        deadline_abs=deadline_abs if deadline_abs is not None else reqs[0].deadline_abs,
        intf_predicted=intf_predicted,
        kernel_start_estimate=kernel_start if kernel_start is not None else now + 1.0,
        timeline=ThroughputTimeline(),
        kernel_started=started,
    )
    gpu.add_entry(entry, kernel_start if started else now)
    return entry


def make_gpu(gpu_id=0, n_metrics=1, concurrency_limit=4):
    return GpuRuntimeState(gpu_id, n_metrics, concurrency_limit)


class FixedArrivals:
    """Workload stub emitting an explicit arrival list (test scaffolding)."""

    def __init__(self, times):
        self.times = list(times)

    def generate(self, duration_ms, seed):
        return [t for t in self.times if t < duration_ms]


def small_config(
    workload_models,
    duration_ms=1000.0,
    profiles=None,
    n_gpus=1,
    policy="predictive",
    policy_variant="full",
    noise_sigma=0.0,
    seed=0,
    ground_truth=None,
    concurrency_limit=4,
):
    from infersim.config import ExperimentConfig
    from infersim.oracle import default_ground_truth
    from infersim.profiles import default_profiles
    from infersim.workload import WorkloadSpec

    if profiles is None:
        profiles = default_profiles()
    gt = ground_truth if ground_truth is not None else default_ground_truth(noise_sigma)
    return ExperimentConfig(
        profiles=profiles,
        workload=WorkloadSpec(duration_ms=duration_ms, models=workload_models),
        ground_truth=gt,
        policy=policy,
        policy_variant=policy_variant,
        n_gpus=n_gpus,
        concurrency_limit=concurrency_limit,
        seed=seed,
    )
