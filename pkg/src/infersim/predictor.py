"""Kernel-execution interference prediction with online self-calibration.

The slowdown of a batch is modeled as an exponential function of resource
pressure: a linear map over the co-located batches' aggregate throughput and
the batch's own compute/memory demand feeds the exponent, and a learnable
per-priority coefficient converts the raw effect into a slowdown factor of
at least 1. Completion feedback drives one Adam step on a Huber loss per
finished batch, so the model tracks workload and hardware drift.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .domain import ModelProfile, PriorityLevel
from .pcie import PcieLinkState

# Raw-effect saturation guard: beyond this the sample is flagged and the
# effect capped so a single runaway exponent cannot poison the estimate.
EFFECT_CAP = 50.0
MIN_SCALE = 1e-6
MIN_BASE = 1.0 + 1e-6
MIN_PRIORITY_COEFF = 1e-6
# exp() overflows near 709; anything past this is far beyond EFFECT_CAP anyway
_LOG_SATURATE = 500.0


@dataclass
class PredictorParams:
    """Learnable parameters of the interference model.

    ``scale`` and ``base`` shape the exponential (base > 1), ``offset`` is
    the additive constant outside it. ``weights`` maps the co-located
    aggregate throughput per metric into the exponent alongside the batch's
    own demand terms. ``priority_coeff`` captures that high-priority streams
    see less interference under identical pressure.
    """

    scale: float = 0.1
    base: float = math.e
    offset: float = 0.0
    weights: tuple[float, ...] = (0.1, 0.1, 0.1, 0.1, 0.1)
    self_compute_weight: float = 0.1
    self_memory_weight: float = 0.1
    priority_coeff: dict[PriorityLevel, float] = field(
        default_factory=lambda: {PriorityLevel.HIGH: 0.5, PriorityLevel.LOW: 1.0}
    )
    effect_cap: float = EFFECT_CAP

    def copy(self) -> "PredictorParams":
        return PredictorParams(
            scale=self.scale,
            base=self.base,
            offset=self.offset,
            weights=tuple(self.weights),
            self_compute_weight=self.self_compute_weight,
            self_memory_weight=self.self_memory_weight,
            priority_coeff=dict(self.priority_coeff),
            effect_cap=self.effect_cap,
        )

    # canonical flat layout used by the optimizer:
    # [scale, base, offset, *weights, self_compute_weight, self_memory_weight,
    #  coeff_high, coeff_low]
    def to_vector(self) -> list[float]:
        return [
            self.scale,
            self.base,
            self.offset,
            *self.weights,
            self.self_compute_weight,
            self.self_memory_weight,
            self.priority_coeff[PriorityLevel.HIGH],
            self.priority_coeff[PriorityLevel.LOW],
        ]

    def apply_vector(self, vec: Sequence[float]) -> None:
        n = len(self.weights)
        if len(vec) != n + 7:
            raise ValueError(f"expected {n + 7} parameters, got {len(vec)}")
        self.scale = vec[0]
        self.base = vec[1]
        self.offset = vec[2]
        self.weights = tuple(vec[3 : 3 + n])
        self.self_compute_weight = vec[3 + n]
        self.self_memory_weight = vec[4 + n]
        self.priority_coeff[PriorityLevel.HIGH] = vec[5 + n]
        self.priority_coeff[PriorityLevel.LOW] = vec[6 + n]

    def n_params(self) -> int:
        return len(self.weights) + 7

    def coeff_index(self, priority: PriorityLevel) -> int:
        return len(self.weights) + (5 if priority is PriorityLevel.HIGH else 6)

    def enforce_floors(self) -> None:
        self.scale = max(self.scale, MIN_SCALE)
        self.base = max(self.base, MIN_BASE)
        for p in self.priority_coeff:
            self.priority_coeff[p] = max(self.priority_coeff[p], MIN_PRIORITY_COEFF)


@dataclass
class OptimizerState:
    """Adam moments plus the Huber threshold used for the online updates."""

    m: list[float]
    v: list[float]
    step: int = 0
    learning_rate: float = 0.0075
    beta1: float = 0.7
    beta2: float = 0.9
    eps: float = 1e-8
    huber_delta: float = 0.50

    @classmethod
    def for_params(cls, params: PredictorParams, **hyper) -> "OptimizerState":
        n = params.n_params()
        return cls(m=[0.0] * n, v=[0.0] * n, **hyper)


def adam_step(
    opt: OptimizerState,
    values: list[float],
    grads: Sequence[float],
    active: Optional[Sequence[bool]] = None,
) -> None:
    """One Adam update in place. Entries with ``active[i]`` false are left
    completely untouched (value and moments); the shared step counter still
    advances once."""
    opt.step += 1
    t = opt.step
    b1, b2 = opt.beta1, opt.beta2
    bc1 = 1.0 - b1**t
    bc2 = 1.0 - b2**t
    for i, g in enumerate(grads):
        if active is not None and not active[i]:
            continue
        opt.m[i] = b1 * opt.m[i] + (1.0 - b1) * g
        opt.v[i] = b2 * opt.v[i] + (1.0 - b2) * g * g
        m_hat = opt.m[i] / bc1
        v_hat = opt.v[i] / bc2
        values[i] -= opt.learning_rate * m_hat / (math.sqrt(v_hat) + opt.eps)


def huber_loss(residual: float, delta: float) -> float:
    a = abs(residual)
    if a <= delta:
        return 0.5 * residual * residual
    return delta * (a - 0.5 * delta)


def huber_grad(residual: float, delta: float) -> float:
    if abs(residual) <= delta:
        return residual
    return delta if residual > 0 else -delta


def pressure_exponent(
    params: PredictorParams,
    colocated: Sequence[float],
    self_compute: float,
    self_memory: float,
) -> float:
    """Linear map of co-located aggregate throughput and the batch's own
    demand into the exponent of the interference model."""
    if len(colocated) != len(params.weights):
        raise ValueError(
            f"aggregate throughput has {len(colocated)} metrics, model expects {len(params.weights)}"
        )
    x = params.self_compute_weight * self_compute + params.self_memory_weight * self_memory
    for w, a in zip(params.weights, colocated):
        x += w * a
    return x


def _raw_effect(params: PredictorParams, exponent: float) -> tuple[float, bool]:
    """(scale * base**exponent + offset, saturated flag)."""
    z = exponent * math.log(params.base)
    if z > _LOG_SATURATE:
        return math.inf, True
    inner = params.scale * math.exp(z) + params.offset
    return inner, inner >= params.effect_cap


def kernel_effect(params: PredictorParams, exponent: float) -> float:
    """Raw interference effect: exponential in the pressure exponent,
    clamped below at 0 (a negative effect is nonphysical) and saturated at
    the configured cap."""
    inner, saturated = _raw_effect(params, exponent)
    if saturated:
        return params.effect_cap
    return min(max(inner, 0.0), params.effect_cap)


def interference_degree(params: PredictorParams, effect: float, priority: PriorityLevel) -> float:
    """Slowdown factor of kernel execution; 1 means no interference."""
    return 1.0 + effect * params.priority_coeff[priority]


def kernel_delay(intf: float, kernel_latency_ms: float) -> float:
    """Extra kernel time induced by interference on top of the isolated span."""
    return (intf - 1.0) * kernel_latency_ms


def predict_interference(
    params: PredictorParams,
    colocated: Sequence[float],
    self_compute: float,
    self_memory: float,
    priority: PriorityLevel,
) -> float:
    x = pressure_exponent(params, colocated, self_compute, self_memory)
    return interference_degree(params, kernel_effect(params, x), priority)


def estimate_latency(
    params: PredictorParams,
    profile: ModelProfile,
    size: int,
    front_enqueue_time: float,
    link: PcieLinkState,
    now: float,
    assumed_colocated: Sequence[float],
) -> float:
    """Estimated end-to-end inference latency of a candidate batch: isolated
    latency, upstream-transfer wait, predicted kernel delay, and the queuing
    delay already accumulated by the batch's front request."""
    isolated = profile.total_latency_ms(size)
    transfer_wait = link.estimate_delay(now)
    intf = predict_interference(
        params,
        assumed_colocated,
        profile.self_compute_at(size),
        profile.self_memory_at(size),
        profile.priority,
    )
    delay = kernel_delay(intf, profile.kernel_latency_ms(size))
    queue_wait = now - front_enqueue_time
    return isolated + transfer_wait + delay + queue_wait


@dataclass
class FeedbackSample:
    """Completion feedback for one batch: the inputs the prediction saw and
    the measured slowdown (measured kernel latency over the isolated p95)."""

    batch_id: str
    colocated_twa: tuple[float, ...]
    self_compute: float
    self_memory: float
    priority: PriorityLevel
    actual: float
    predicted_at_schedule: Optional[float] = None

    def __post_init__(self):
        if not self.actual > 0:
            raise ValueError(f"sample {self.batch_id}: measured slowdown must be positive")


@dataclass
class UpdateResult:
    predicted: float
    residual: float
    skipped: bool = False
    saturated: bool = False


def _prediction_gradient(
    params: PredictorParams, sample: FeedbackSample
) -> tuple[float, bool, list[float]]:
    """Prediction under current parameters plus d(prediction)/d(theta) in the
    canonical vector layout. Clamped regions contribute zero gradient."""
    x = pressure_exponent(params, sample.colocated_twa, sample.self_compute, sample.self_memory)
    inner, saturated = _raw_effect(params, x)
    if saturated:
        eff = params.effect_cap
    else:
        eff = min(max(inner, 0.0), params.effect_cap)
    coeff = params.priority_coeff[sample.priority]
    predicted = 1.0 + eff * coeff

    n = len(params.weights)
    grad = [0.0] * params.n_params()
    clamp_active = saturated or inner <= 0.0 or inner >= params.effect_cap
    if not clamp_active:
        pow_bx = math.exp(x * math.log(params.base))  # base**x
        z = params.scale * pow_bx
        log_b = math.log(params.base)
        grad[0] = pow_bx * coeff  # scale
        grad[1] = params.scale * x * math.exp((x - 1.0) * log_b) * coeff  # base
        grad[2] = coeff  # offset
        for i, a in enumerate(sample.colocated_twa):
            grad[3 + i] = z * log_b * a * coeff
        grad[3 + n] = z * log_b * sample.self_compute * coeff
        grad[4 + n] = z * log_b * sample.self_memory * coeff
    grad[params.coeff_index(sample.priority)] = eff
    return predicted, saturated, grad


def loss_gradient(params: PredictorParams, sample: FeedbackSample, delta: float) -> tuple[float, float, bool, list[float]]:
    """(predicted, residual, saturated, dLoss/dtheta) for a Huber loss on the
    residual between the current-parameter prediction and the measurement."""
    predicted, saturated, dpred = _prediction_gradient(params, sample)
    residual = predicted - sample.actual
    g = huber_grad(residual, delta)
    return predicted, residual, saturated, [g * d for d in dpred]


class InterferencePredictor:
    """One global prediction model serving all GPUs of a node.

    ``predict``/``estimate`` read a value snapshot; ``update`` applies one
    Adam step per completed batch. Both are expected to be called from a
    single owner (the scheduling/simulation loop)."""

    def __init__(self, params: Optional[PredictorParams] = None, opt: Optional[OptimizerState] = None):
        self.params = params if params is not None else PredictorParams()
        self.opt = opt if opt is not None else OptimizerState.for_params(self.params)

    def predict(
        self,
        colocated: Sequence[float],
        self_compute: float,
        self_memory: float,
        priority: PriorityLevel,
    ) -> float:
        return predict_interference(self.params, colocated, self_compute, self_memory, priority)

    def estimate_latency(
        self,
        profile: ModelProfile,
        size: int,
        front_enqueue_time: float,
        link: PcieLinkState,
        now: float,
        assumed_colocated: Sequence[float],
    ) -> float:
        return estimate_latency(
            self.params, profile, size, front_enqueue_time, link, now, assumed_colocated
        )

    def update(self, sample: FeedbackSample) -> UpdateResult:
        """One feedback step. The prediction is recomputed from the sample's
        inputs under the current parameters so the gradient matches what is
        being optimized, not the stale at-schedule estimate."""
        predicted, residual, saturated, grads = loss_gradient(
            self.params, sample, self.opt.huber_delta
        )
        if not all(math.isfinite(g) for g in grads) or not math.isfinite(residual):
            return UpdateResult(predicted=predicted, residual=residual, skipped=True, saturated=saturated)
        other = (
            PriorityLevel.LOW if sample.priority is PriorityLevel.HIGH else PriorityLevel.HIGH
        )
        active = [True] * self.params.n_params()
        active[self.params.coeff_index(other)] = False  # only the sample's own class moves
        values = self.params.to_vector()
        adam_step(self.opt, values, grads, active)
        self.params.apply_vector(values)
        self.params.enforce_floors()
        return UpdateResult(predicted=predicted, residual=residual, saturated=saturated)

    # -- checkpointing ----------------------------------------------------

    def checkpoint_dict(self) -> dict:
        return {
            "params": {
                "scale": self.params.scale,
                "base": self.params.base,
                "offset": self.params.offset,
                "weights": list(self.params.weights),
                "self_compute_weight": self.params.self_compute_weight,
                "self_memory_weight": self.params.self_memory_weight,
                "priority_coeff": {
                    p.label: c for p, c in sorted(self.params.priority_coeff.items())
                },
                "effect_cap": self.params.effect_cap,
            },
            "optimizer": {
                "m": list(self.opt.m),
                "v": list(self.opt.v),
                "step": self.opt.step,
                "learning_rate": self.opt.learning_rate,
                "beta1": self.opt.beta1,
                "beta2": self.opt.beta2,
                "eps": self.opt.eps,
                "huber_delta": self.opt.huber_delta,
            },
        }

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.checkpoint_dict(), f, indent=2)

    @classmethod
    def from_checkpoint_dict(cls, doc: dict) -> "InterferencePredictor":
        p = doc["params"]
        params = PredictorParams(
            scale=p["scale"],
            base=p["base"],
            offset=p["offset"],
            weights=tuple(p["weights"]),
            self_compute_weight=p["self_compute_weight"],
            self_memory_weight=p["self_memory_weight"],
            priority_coeff={
                PriorityLevel.from_name(name): c for name, c in p["priority_coeff"].items()
            },
            effect_cap=p.get("effect_cap", EFFECT_CAP),
        )
        o = doc["optimizer"]
        opt = OptimizerState(
            m=list(o["m"]),
            v=list(o["v"]),
            step=o["step"],
            learning_rate=o["learning_rate"],
            beta1=o["beta1"],
            beta2=o["beta2"],
            eps=o["eps"],
            huber_delta=o["huber_delta"],
        )
        return cls(params, opt)

    @classmethod
    def load(cls, path) -> "InterferencePredictor":
        with open(path) as f:
            return cls.from_checkpoint_dict(json.load(f))
