"""Arrival stream generation: Poisson, evenly spaced, and production-trace
driven (per-minute request counts expanded minute by minute as independent
Poisson processes).

Rates are requests per second; emitted timestamps are milliseconds. All
generation is open-model: arrivals never depend on completions.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np

MINUTE_MS = 60_000.0


def gen_poisson(rate_per_s: float, duration_ms: float, seed) -> list[float]:
    """Poisson arrivals over [0, duration): i.i.d. exponential gaps with
    mean 1000/rate ms. Identical seeds replay identical streams."""
    if rate_per_s < 0:
        raise ValueError(f"rate must be non-negative, got {rate_per_s}")
    if rate_per_s == 0 or duration_ms <= 0:
        return []
    rng = np.random.default_rng(seed)
    mean_gap = 1000.0 / rate_per_s
    out: list[float] = []
    t = 0.0
    while True:
        for gap in rng.exponential(mean_gap, size=256):
            t += float(gap)  # keep event times plain Python floats
            if t >= duration_ms:
                return out
            out.append(t)


def gen_uniform(rate_per_s: float, duration_ms: float) -> list[float]:
    """Evenly spaced arrivals at k/rate for k = 0, 1, ..., strictly below
    the duration."""
    if rate_per_s <= 0:
        raise ValueError(f"rate must be positive, got {rate_per_s}")
    gap = 1000.0 / rate_per_s
    count = int(np.ceil(duration_ms / gap))
    out = []
    for k in range(count + 1):
        t = k * gap
        if t < duration_ms:
            out.append(t)
    return out


def read_trace_csv(path) -> dict[str, dict[int, float]]:
    """Parse a per-minute trace: rows of function_id,minute_index,count."""
    table: dict[str, dict[int, float]] = {}
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:3]] != ["function_id", "minute_index", "count"]:
            raise ValueError(f"{path}: expected header 'function_id,minute_index,count'")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) < 3:
                raise ValueError(f"{path}:{lineno}: expected 3 columns")
            fid = row[0].strip()
            minute = int(row[1])
            count = float(row[2])
            if count < 0:
                raise ValueError(f"{path}:{lineno}: negative count")
            table.setdefault(fid, {})[minute] = count
    return table


def load_trace(
    path,
    function_id: str,
    scale: float,
    seed,
    duration_ms: Optional[float] = None,
) -> list[float]:
    """Expand one function's per-minute counts into arrivals: each minute
    becomes an independent Poisson process at count * scale / 60 req/s,
    confined to its own minute, using a minute-derived sub-seed."""
    if scale <= 0:
        raise ValueError(f"scale must be positive, got {scale}")
    table = read_trace_csv(path)
    if function_id not in table:
        available = ", ".join(sorted(table))
        raise KeyError(f"function {function_id!r} not in trace; available: {available}")
    minutes = table[function_id]
    out: list[float] = []
    for minute in sorted(minutes):
        start = minute * MINUTE_MS
        if duration_ms is not None and start >= duration_ms:
            break
        rate = minutes[minute] * scale / 60.0
        span = MINUTE_MS
        if duration_ms is not None:
            span = min(span, duration_ms - start)
        sub_seed = np.random.SeedSequence(_entropy_list(seed) + [minute])
        for t in gen_poisson(rate, span, sub_seed):
            out.append(start + t)
    return out


def _entropy_list(seed) -> list[int]:
    if isinstance(seed, np.random.SeedSequence):
        ent = seed.entropy
        return list(ent) if isinstance(ent, (list, tuple)) else [int(ent)]
    return [int(seed)]


@dataclass
class ModelWorkload:
    """Arrival specification for one model."""

    mode: str  # poisson | uniform | trace
    rate_per_s: float = 0.0
    trace_file: Optional[str] = None
    function_id: Optional[str] = None
    scale: float = 1.0

    def generate(self, duration_ms: float, seed) -> list[float]:
        if self.mode == "poisson":
            return gen_poisson(self.rate_per_s, duration_ms, seed)
        if self.mode == "uniform":
            if self.rate_per_s == 0:
                return []
            return gen_uniform(self.rate_per_s, duration_ms)
        if self.mode == "trace":
            if self.trace_file is None or self.function_id is None:
                raise ValueError("trace workload needs trace_file and function_id")
            return load_trace(self.trace_file, self.function_id, self.scale, seed, duration_ms)
        raise ValueError(f"unknown workload mode {self.mode!r}")


@dataclass
class WorkloadSpec:
    """Per-model arrival streams over a common horizon. Each model gets a
    sub-seed derived from the run seed and its position, so adding a model
    does not perturb the others."""

    duration_ms: float
    models: dict[str, ModelWorkload]

    def generate(self, seed: int) -> dict[str, list[float]]:
        streams: dict[str, list[float]] = {}
        for index, model_id in enumerate(sorted(self.models)):
            sub_seed = np.random.SeedSequence([seed, index])
            streams[model_id] = self.models[model_id].generate(self.duration_ms, sub_seed)
        return streams
