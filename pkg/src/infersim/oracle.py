"""Hidden ground-truth interference model used by the simulator in place of
real GPUs.

The default family mirrors the predictor's hypothesis class (exponential in
a linear pressure term) so the learner can fit it in the limit; a quadratic
family is available to study behavior under model mismatch. All parameter
values are artifact configuration, not measurements.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

from .domain import PriorityLevel


@dataclass
class GroundTruthParams:
    family: str = "exponential"  # or "quadratic"
    scale: float = 0.45
    base: float = math.e
    offset: float = -0.7
    weights: tuple[float, ...] = (0.22, 0.26, 0.24, 0.20, 0.18)
    self_compute_weight: float = 0.25
    self_memory_weight: float = 0.20
    priority_factor: dict[PriorityLevel, float] = field(
        default_factory=lambda: {PriorityLevel.HIGH: 0.6, PriorityLevel.LOW: 1.0}
    )
    noise_sigma: float = 0.0

    def __post_init__(self):
        if self.family not in ("exponential", "quadratic"):
            raise ValueError(f"unknown ground-truth family {self.family!r}")
        if self.family == "exponential" and self.base <= 1.0:
            raise ValueError("ground-truth base must exceed 1")
        if self.scale <= 0:
            raise ValueError("ground-truth scale must be positive")
        if self.noise_sigma < 0:
            raise ValueError("noise sigma must be non-negative")

    def without_priority_advantage(self) -> "GroundTruthParams":
        """Equal priority factors: the simulated stream-priority advantage
        switched off (ablation input)."""
        low = self.priority_factor[PriorityLevel.LOW]
        return replace(
            self, priority_factor={PriorityLevel.HIGH: low, PriorityLevel.LOW: low}
        )


def default_ground_truth(noise_sigma: float = 0.0) -> GroundTruthParams:
    return GroundTruthParams(noise_sigma=noise_sigma)


def ground_truth_slowdown(
    params: GroundTruthParams,
    colocated: Sequence[float],
    self_compute: float,
    self_memory: float,
    priority: PriorityLevel,
    noise: float = 1.0,
) -> float:
    """Instantaneous slowdown of kernel progress under the given co-located
    aggregate throughput; 1 when the raw effect clamps to zero."""
    if len(colocated) != len(params.weights):
        raise ValueError(
            f"aggregate throughput has {len(colocated)} metrics, oracle expects {len(params.weights)}"
        )
    x = params.self_compute_weight * self_compute + params.self_memory_weight * self_memory
    for w, a in zip(params.weights, colocated):
        x += w * a
    if params.family == "exponential":
        effect = params.scale * params.base**x + params.offset
    else:
        effect = params.scale * x * x + params.offset
    effect = max(0.0, effect)
    return 1.0 + effect * params.priority_factor[priority] * noise
