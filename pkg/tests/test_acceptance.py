"""Acceptance suite: one test per criterion, each printing a PASS line with
the measured values (run with -s to see them)."""
import itertools
import math
import time

import numpy as np
import pytest

from conftest import FixedArrivals, small_config

from infersim.domain import PriorityLevel
from infersim.metrics import perturb_profiles
from infersim.oracle import GroundTruthParams, ground_truth_slowdown
from infersim.pcie import PcieLinkState, estimate_upstream_delay, reserve_link
from infersim.predictor import (
    FeedbackSample,
    InterferencePredictor,
    OptimizerState,
    PredictorParams,
    adam_step,
    interference_degree,
    kernel_delay,
    kernel_effect,
    loss_gradient,
    predict_interference,
    pressure_exponent,
)
from infersim.profiles import default_profiles
from infersim.scheduler import largest_feasible
from infersim.simulation import parse_segments, run
from infersim.workload import ModelWorkload

POLICIES = ("predictive", "temporal", "static", "reactive")

# ---- the end-to-end overload workload (criteria 9, 10, 12, 13) -------------

C9_RATES = {
    "resnet50": 2200.0,
    "vit_b16": 800.0,
    "yolo_v8n": 1300.0,
    "convnext_b": 650.0,
    "vgg19": 650.0,
    "roberta_b": 400.0,
}
C9_SEEDS = (0, 1, 2, 3, 4)


def c9_ground_truth():
    return GroundTruthParams(
        scale=0.5,
        base=math.e,
        offset=-0.7686,
        weights=(0.3,) * 5,
        self_compute_weight=0.25,
        self_memory_weight=0.2,
        priority_factor={PriorityLevel.HIGH: 0.6, PriorityLevel.LOW: 1.0},
        noise_sigma=0.05,
    )


def c9_config(seed, policy, variant="full"):
    return small_config(
        {m: ModelWorkload("poisson", r) for m, r in C9_RATES.items()},
        duration_ms=3000.0,
        n_gpus=4,
        policy=policy,
        policy_variant=variant,
        seed=seed,
        ground_truth=c9_ground_truth(),
    )


@pytest.fixture(scope="module")
def c9_results():
    t0 = time.perf_counter()
    results = {
        (policy, seed): run(c9_config(seed, policy))
        for policy in POLICIES
        for seed in C9_SEEDS
    }
    return results, time.perf_counter() - t0


def violation_rates(result):
    m = result.metrics.per_class
    return (
        m[PriorityLevel.HIGH].violation_rate_pct,
        m[PriorityLevel.LOW].violation_rate_pct,
    )


# ---- criteria ----------------------------------------------------------------


def test_c01_equation_oracles():
    """Slowdown equations match direct formula evaluation on 10,000 draws."""
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(10_000):
        params = PredictorParams(
            scale=float(rng.uniform(0.01, 2.0)),
            base=float(rng.uniform(1.1, 4.0)),
            offset=float(rng.uniform(-1.0, 1.0)),
            weights=tuple(float(w) for w in rng.uniform(-0.5, 0.8, 5)),
            self_compute_weight=float(rng.uniform(-0.5, 0.8)),
            self_memory_weight=float(rng.uniform(-0.5, 0.8)),
            priority_coeff={
                PriorityLevel.HIGH: float(rng.uniform(0.1, 1.0)),
                PriorityLevel.LOW: float(rng.uniform(0.5, 2.0)),
            },
        )
        agg = tuple(float(a) for a in rng.uniform(0.0, 2.5, 5))
        cmp_ = float(rng.uniform(0.0, 1.0))
        mem = float(rng.uniform(0.0, 1.0))
        pri = PriorityLevel(int(rng.integers(0, 2)))
        t_kernel = float(rng.uniform(0.5, 20.0))

        x = pressure_exponent(params, agg, cmp_, mem)
        eff = kernel_effect(params, x)
        intf = interference_degree(params, eff, pri)
        delay = kernel_delay(intf, t_kernel)

        # independent direct evaluation
        x_ref = sum(w * a for w, a in zip(params.weights, agg))
        x_ref += params.self_compute_weight * cmp_ + params.self_memory_weight * mem
        eff_ref = min(max(params.scale * params.base**x_ref + params.offset, 0.0), 50.0)
        intf_ref = 1.0 + eff_ref * params.priority_coeff[pri]
        delay_ref = (intf_ref - 1.0) * t_kernel

        for got, want in ((x, x_ref), (eff, eff_ref), (intf, intf_ref), (delay, delay_ref)):
            err = abs(got - want) / max(abs(want), 1e-12)
            worst = max(worst, err)
            assert err <= 1e-9
    elapsed = time.perf_counter() - t0
    assert elapsed < 5.0
    print(f"[criterion 1] PASS: worst relative error {worst:.2e}, {elapsed:.2f}s")


def test_c02_adam_matches_scalar_reference():
    """Adam trajectory equals an independent scalar implementation."""
    rng = np.random.default_rng(77)
    n = 12
    values = [float(x) for x in rng.normal(0.0, 1.0, n)]
    ref_values = list(values)
    ref_m = [0.0] * n
    ref_v = [0.0] * n
    opt = OptimizerState(m=[0.0] * n, v=[0.0] * n)
    assert (opt.learning_rate, opt.beta1, opt.beta2, opt.eps) == (0.0075, 0.7, 0.9, 1e-8)
    worst = 0.0
    for t in range(1, 1001):
        grads = [float(g) for g in rng.normal(0.0, 3.0, n)]
        adam_step(opt, values, grads)
        for i, g in enumerate(grads):
            ref_m[i] = 0.7 * ref_m[i] + 0.3 * g
            ref_v[i] = 0.9 * ref_v[i] + 0.1 * g * g
            m_hat = ref_m[i] / (1.0 - 0.7**t)
            v_hat = ref_v[i] / (1.0 - 0.9**t)
            ref_values[i] -= 0.0075 * m_hat / (math.sqrt(v_hat) + 1e-8)
        for a, b in zip(values, ref_values):
            worst = max(worst, abs(a - b))
            assert abs(a - b) <= 1e-12
    print(f"[criterion 2] PASS: worst element-wise deviation {worst:.2e} over 1000 steps")


def test_c03_huber_gradients_match_finite_differences():
    """Analytic gradients vs central finite differences, both branches."""
    from test_predictor import numeric_gradient, random_clean_case

    rng = np.random.default_rng(31)
    quadratic = linear = 0
    worst = 0.0
    for _ in range(1000):
        params, sample, r = random_clean_case(rng)
        if abs(r) <= 0.5:
            quadratic += 1
        else:
            linear += 1
        _, _, _, analytic = loss_gradient(params, sample, 0.5)
        numeric = numeric_gradient(params, sample, 0.5, h=1e-6)
        for a, n in zip(analytic, numeric):
            err = abs(a - n) / max(abs(a), abs(n), 1e-3)
            worst = max(worst, err)
            assert err <= 1e-5
    assert quadratic > 50 and linear > 50
    print(
        f"[criterion 3] PASS: worst gradient mismatch {worst:.2e} "
        f"({quadratic} quadratic / {linear} linear draws)"
    )


def test_c04_pcie_fifo():
    """Back-to-back transfers queue exactly; no overlap on random sequences."""
    link = PcieLinkState()
    delays = []
    for _ in range(3):
        delays.append(estimate_upstream_delay(link, 0.0))
        reserve_link(link, 0.0, 2.0)
    assert delays == [0.0, 2.0, 4.0]

    rng = np.random.default_rng(404)
    for _ in range(10_000):
        link = PcieLinkState()
        t = 0.0
        prev_end = None
        for _ in range(int(rng.integers(1, 9))):
            t += float(rng.uniform(0.0, 3.0))
            start, end = reserve_link(link, t, float(rng.uniform(0.01, 5.0)))
            if prev_end is not None:
                assert start >= prev_end
            prev_end = end
    print("[criterion 4] PASS: delays 0/2/4 ms exact; no overlap in 10,000 sequences")


def test_c05_aimd_growth_and_reset():
    """Additive increase hits 77.5 at t=1 s; a high-priority miss resets the
    cap within the same completion event."""
    from infersim.runtime import AimdState, aimd_tick

    state = AimdState()
    aimd_tick(state, 1000.0)
    assert state.cap_pct == 77.5

    profiles = default_profiles()
    profiles["resnet50"].batch_timeout_ms = 0.0
    gt = GroundTruthParams(
        scale=2.0, base=math.e, offset=-0.5, weights=(0.6,) * 5,
        priority_factor={PriorityLevel.HIGH: 1.0, PriorityLevel.LOW: 1.0},
    )
    cfg = small_config(
        {
            "resnet50": FixedArrivals([200.0 + 0.01 * i for i in range(8)]),
            "vgg19": FixedArrivals([150.0] * 8),
            "roberta_b": FixedArrivals([150.0] * 8),
        },
        profiles=profiles,
        n_gpus=1,
        ground_truth=gt,
    )
    result = run(cfg)
    late_hp = {
        r["batch"]
        for r in result.request_rows
        if r["model"] == "resnet50" and not r["dropped"] and r["violated"]
    }
    assert late_hp, "scenario failed to produce a late high-priority batch"
    kernel_ends = {
        b["kernel_end"] for b in result.batch_rows if b["batch"] in late_hp
    }
    resets = [r for r in result.trace_rows if r["event"] == "aimd_reset"]
    assert any(r["time"] in kernel_ends for r in resets)
    # the cap had grown past the floor before that reset
    reset_time = min(r["time"] for r in resets if r["time"] in kernel_ends)
    grown = [c for t, _, c in result.metrics.cap_timeline if t < reset_time and c > 75.0]
    at_reset = [c for t, _, c in result.metrics.cap_timeline if t == reset_time]
    assert grown and 75.0 in at_reset
    print("[criterion 5] PASS: cap 75 -> 77.5 at 1 s; reset to 75 at the violating completion")


def test_c06_binary_search_equals_linear_scan():
    """Exhaustive check over every monotone feasibility predicate on [1, 8]."""
    monotone = 0
    for pattern in itertools.product([False, True], repeat=8):
        if any(later and not earlier for earlier, later in zip(pattern, pattern[1:])):
            continue  # feasibility must not reappear at larger sizes
        monotone += 1
        linear = None
        for k in range(1, 9):
            if pattern[k - 1]:
                linear = k
        assert largest_feasible(8, lambda k: pattern[k - 1]) == linear
    assert monotone == 9
    print(f"[criterion 6] PASS: {monotone} monotone predicates, binary == linear scan")


def test_c07_predictor_convergence_under_noise():
    """Stationary matched-family truth with sigma=0.05 noise converges to a
    median slowdown error under 10%."""
    hidden = PredictorParams(
        scale=0.35, base=2.3, offset=-0.15,
        weights=(0.22, 0.28, 0.18, 0.25, 0.2),
        self_compute_weight=0.3, self_memory_weight=0.15,
        priority_coeff={PriorityLevel.HIGH: 0.6, PriorityLevel.LOW: 1.0},
    )
    rng = np.random.default_rng(7)
    predictor = InterferencePredictor()
    t0 = time.perf_counter()
    errors = []
    for _ in range(5000):
        agg = tuple(float(a) for a in rng.uniform(0.0, 2.0, 5))
        cmp_ = float(rng.uniform(0.1, 0.9))
        mem = float(rng.uniform(0.1, 0.9))
        pri = PriorityLevel.HIGH if rng.uniform() < 0.4 else PriorityLevel.LOW
        truth = predict_interference(hidden, agg, cmp_, mem, pri)
        actual = 1.0 + (truth - 1.0) * math.exp(float(rng.normal(0.0, 0.05)))
        errors.append(abs(predictor.predict(agg, cmp_, mem, pri) - actual) / actual)
        predictor.update(FeedbackSample("b", agg, cmp_, mem, pri, actual))
    elapsed = time.perf_counter() - t0
    median = sorted(errors)[len(errors) // 2]
    assert median < 0.10
    assert elapsed < 60.0
    print(f"[criterion 7] PASS: median |error| {median * 100:.2f}% over 5000 samples, {elapsed:.1f}s")


def test_c08_adaptive_beats_frozen_after_shift():
    """After a hidden-parameter shift the updating model's p95 error beats a
    frozen copy by at least 3 pp on the next 2000 batches."""
    before = PredictorParams(
        scale=0.35, base=2.3, offset=-0.15,
        weights=(0.22, 0.28, 0.18, 0.25, 0.2),
        self_compute_weight=0.3, self_memory_weight=0.15,
        priority_coeff={PriorityLevel.HIGH: 0.6, PriorityLevel.LOW: 1.0},
    )
    after = PredictorParams(
        scale=0.6, base=2.9, offset=0.1,
        weights=(0.1, 0.45, 0.3, 0.35, 0.12),
        self_compute_weight=0.15, self_memory_weight=0.35,
        priority_coeff={PriorityLevel.HIGH: 0.45, PriorityLevel.LOW: 1.2},
    )
    wins = 0
    gaps = []
    for seed in range(5):
        rng = np.random.default_rng(seed)

        def draw():
            return (
                tuple(float(a) for a in rng.uniform(0.0, 2.0, 5)),
                float(rng.uniform(0.1, 0.9)),
                float(rng.uniform(0.1, 0.9)),
                PriorityLevel.HIGH if rng.uniform() < 0.4 else PriorityLevel.LOW,
            )

        def observe(hidden, agg, cmp_, mem, pri):
            truth = predict_interference(hidden, agg, cmp_, mem, pri)
            return 1.0 + (truth - 1.0) * math.exp(float(rng.normal(0.0, 0.05)))

        adaptive = InterferencePredictor()
        for _ in range(3000):
            agg, cmp_, mem, pri = draw()
            adaptive.update(FeedbackSample("b", agg, cmp_, mem, pri, observe(before, agg, cmp_, mem, pri)))
        frozen = adaptive.params.copy()
        err_a, err_f = [], []
        for _ in range(2000):
            agg, cmp_, mem, pri = draw()
            actual = observe(after, agg, cmp_, mem, pri)
            err_a.append(abs(adaptive.predict(agg, cmp_, mem, pri) - actual) / actual)
            err_f.append(abs(predict_interference(frozen, agg, cmp_, mem, pri) - actual) / actual)
            adaptive.update(FeedbackSample("b", agg, cmp_, mem, pri, actual))
        p95_a = sorted(err_a)[int(math.ceil(0.95 * len(err_a))) - 1] * 100
        p95_f = sorted(err_f)[int(math.ceil(0.95 * len(err_f))) - 1] * 100
        gaps.append(p95_f - p95_a)
        if p95_a < p95_f - 3.0:
            wins += 1
    assert wins >= 4
    print(f"[criterion 8] PASS: adaptive beat frozen in {wins}/5 seeds, p95 gaps {[f'{g:.1f}' for g in gaps]} pp")


def test_c09_end_to_end_policy_comparison(c9_results):
    """Predictive scheduling cuts high-priority violations by at least 1 pp
    against every baseline without giving up more than 5 pp low-priority."""
    results, elapsed = c9_results
    assert elapsed < 300.0
    wins = 0
    lines = []
    for seed in C9_SEEDS:
        hp_p, lp_p = violation_rates(results[("predictive", seed)])
        hp_margin = math.inf
        best_lp = math.inf
        for baseline in ("temporal", "static", "reactive"):
            hp_b, lp_b = violation_rates(results[(baseline, seed)])
            hp_margin = min(hp_margin, hp_b - hp_p)
            best_lp = min(best_lp, lp_b)
        ok = hp_margin >= 1.0 and lp_p <= best_lp + 5.0
        wins += ok
        lines.append(f"seed {seed}: margin {hp_margin:.2f} pp, LP delta {lp_p - best_lp:.2f} pp")
    assert wins >= 4
    print(f"[criterion 9] PASS: {wins}/5 seeds, {elapsed:.0f}s runtime; " + "; ".join(lines))


def test_c10_ablation_doubles_hp_violations(c9_results):
    """Removing the violation check and the adaptive cap at least doubles
    high-priority deadline misses."""
    results, _ = c9_results
    full_hp, _ = violation_rates(results[("predictive", 0)])
    ablated = run(c9_config(0, "predictive", variant="no_violate_aimd"))
    abl_hp, _ = violation_rates(ablated)
    assert full_hp > 0
    assert abl_hp >= 2.0 * full_hp
    print(f"[criterion 10] PASS: HP violations {full_hp:.2f}% -> {abl_hp:.2f}% ({abl_hp / full_hp:.2f}x)")


def test_c11_profiling_drift_tolerated():
    """15% throughput perturbation moves p99 prediction error by under 5 pp."""
    true_profiles = default_profiles()
    gt = c9_ground_truth()
    models = sorted(true_profiles)

    def drift_run(feature_profiles, seed, n=4000):
        rng = np.random.default_rng(seed)
        predictor = InterferencePredictor()
        errors = []
        for _ in range(n):
            mid = models[int(rng.integers(0, len(models)))]
            tp, fp = true_profiles[mid], feature_profiles[mid]
            size = int(rng.integers(1, tp.max_batch_size + 1))
            agg_true = [0.0] * 5
            agg_feat = [0.0] * 5
            for _ in range(int(rng.integers(0, 4))):
                om = models[int(rng.integers(0, len(models)))]
                osz = int(rng.integers(1, 9))
                for j in range(5):
                    agg_true[j] += true_profiles[om].throughput_at(osz)[j]
                    agg_feat[j] += feature_profiles[om].throughput_at(osz)[j]
            eps = math.exp(float(rng.normal(0.0, gt.noise_sigma)))
            actual = ground_truth_slowdown(
                gt, agg_true, tp.self_compute_at(size), tp.self_memory_at(size), tp.priority, eps
            )
            predicted = predictor.predict(
                tuple(agg_feat), fp.self_compute_at(size), fp.self_memory_at(size), tp.priority
            )
            errors.append(abs(predicted - actual) / actual)
            predictor.update(
                FeedbackSample(
                    "b", tuple(agg_feat), fp.self_compute_at(size), fp.self_memory_at(size),
                    tp.priority, actual,
                )
            )
        tail = sorted(errors[1000:])  # past warm-up
        return tail[int(math.ceil(0.99 * len(tail))) - 1] * 100

    drifts = []
    for seed in range(3):
        baseline = drift_run(true_profiles, seed)
        perturbed = drift_run(perturb_profiles(true_profiles, 15.0, seed=seed + 100), seed)
        drifts.append(abs(perturbed - baseline))
        assert drifts[-1] < 5.0
    print(f"[criterion 11] PASS: p99 error drift {[f'{d:.2f}' for d in drifts]} pp at 15% perturbation")


def test_c12_determinism_of_repeated_runs():
    """Ten repeated runs of the overload workload hash identically."""
    hashes = {run(c9_config(0, "predictive")).trace_hash() for _ in range(10)}
    assert len(hashes) == 1
    print(f"[criterion 12] PASS: 10/10 identical trace hashes ({next(iter(hashes))[:16]}...)")


def test_c13_work_conservation(c9_results):
    """Integral of 1/slowdown over each batch's kernel interval equals its
    isolated kernel work to 1e-9 relative error, for every completed batch."""
    results, _ = c9_results
    checked = 0
    worst = 0.0
    for (policy, seed), result in results.items():
        for row in result.batch_rows:
            consumed = sum(d / s for d, s in parse_segments(row["segments"]))
            isolated = float(row["isolated_kernel"])
            err = abs(consumed - isolated) / isolated
            worst = max(worst, err)
            assert err <= 1e-9
            checked += 1
    assert checked > 10_000
    print(f"[criterion 13] PASS: {checked} batches, worst relative error {worst:.2e}")
