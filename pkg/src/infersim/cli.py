"""Command-line experiment runner.

Subcommands: run (one experiment), sweep (seed/policy grid), report
(recompute metrics from a persisted run), perturb (profile drift), ablate
(predictive-policy variants), plot (optional figures from run CSVs).
"""
from __future__ import annotations

import argparse
import csv
import os
import sys

import yaml

from .baselines import ABLATION_VARIANTS, POLICY_NAMES
from .config import ConfigError, ExperimentConfig, load_config
from .domain import ProfileParseError, ProfileValidationError
from .metrics import perturb_profiles
from .profiles import load_profiles_dir, save_profiles_dir
from .report import report_from_run_dir, summary_dict, write_run_dir
from .simulation import run as run_simulation


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "policy", None) is not None:
        cfg.policy = args.policy
    if getattr(args, "variant", None) is not None:
        cfg.policy_variant = args.variant
    if getattr(args, "duration", None) is not None:
        cfg.workload.duration_ms = args.duration
    cfg.validate()
    return cfg


def _cmd_run(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    result = run_simulation(cfg)
    write_run_dir(result, args.out_dir)
    summary = summary_dict(result)
    print(f"run complete: policy={result.policy} seed={result.seed}")
    print(f"  high violation%: {summary['metrics']['high']['violation_rate_pct']:.3f}")
    print(f"  low  violation%: {summary['metrics']['low']['violation_rate_pct']:.3f}")
    print(f"  outputs: {os.path.abspath(args.out_dir)}")
    return 0


def _one_sweep_run(task) -> tuple[str, int, dict]:
    config_path, policy, seed, duration, out_dir = task
    cfg = load_config(config_path)
    cfg.policy = policy
    cfg.seed = seed
    if duration is not None:
        cfg.workload.duration_ms = duration
    cfg.validate()
    result = run_simulation(cfg)
    run_dir = os.path.join(out_dir, f"{policy}_seed{seed}")
    write_run_dir(result, run_dir)
    return policy, seed, summary_dict(result)


def _cmd_sweep(args) -> int:
    seeds = [int(s) for s in args.seeds.split(",")]
    policies = args.policies.split(",") if args.policies else [load_config(args.config).policy]
    for p in policies:
        if p not in POLICY_NAMES:
            raise ConfigError(f"unknown policy {p!r} in sweep")
    tasks = [
        (args.config, policy, seed, args.duration, args.out_dir)
        for policy in policies
        for seed in seeds
    ]
    os.makedirs(args.out_dir, exist_ok=True)
    if args.jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            outcomes = list(pool.map(_one_sweep_run, tasks))
    else:
        outcomes = [_one_sweep_run(t) for t in tasks]

    rows = []
    for policy, seed, summary in outcomes:
        rows.append(
            {
                "policy": policy,
                "seed": seed,
                "high_violation_pct": summary["metrics"]["high"]["violation_rate_pct"],
                "low_violation_pct": summary["metrics"]["low"]["violation_rate_pct"],
                "trace_hash": summary["trace_hash"],
            }
        )
    path = os.path.join(args.out_dir, "sweep_summary.csv")
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(
            f, fieldnames=["policy", "seed", "high_violation_pct", "low_violation_pct", "trace_hash"]
        )
        writer.writeheader()
        writer.writerows(rows)
    print(f"sweep complete: {len(rows)} runs, summary at {path}")
    return 0


def _cmd_report(args) -> int:
    window = args.window
    if window is None:
        summary_path = os.path.join(args.run_dir, "summary.yaml")
        window = 1000.0
        if os.path.exists(summary_path):
            with open(summary_path) as f:
                doc = yaml.safe_load(f)
            window = float(doc["metrics"]["window_ms"])
    report = report_from_run_dir(args.run_dir, window_ms=window)
    doc = report.to_dict()
    if report.partial:
        print("warning: trace is truncated; report flagged partial", file=sys.stderr)
    out = args.out or os.path.join(args.run_dir, "report.yaml")
    with open(out, "w") as f:
        yaml.safe_dump(doc, f, sort_keys=False)
    print(yaml.safe_dump(doc, sort_keys=False))
    return 0


def _cmd_perturb(args) -> int:
    profiles = load_profiles_dir(args.profiles_dir)
    perturbed = perturb_profiles(profiles, args.magnitude, args.seed)
    save_profiles_dir(perturbed, args.out_dir)
    print(f"wrote {len(perturbed)} perturbed profiles to {args.out_dir}")
    return 0


def _cmd_ablate(args) -> int:
    base = load_config(args.config)
    if base.policy != "predictive":
        raise ConfigError("ablate requires a predictive-policy config")
    rows = []
    for variant in ABLATION_VARIANTS:
        cfg = load_config(args.config)
        cfg.policy_variant = variant
        if args.seed is not None:
            cfg.seed = args.seed
        if args.duration is not None:
            cfg.workload.duration_ms = args.duration
        cfg.validate()
        result = run_simulation(cfg)
        run_dir = os.path.join(args.out_dir, variant)
        write_run_dir(result, run_dir)
        summary = summary_dict(result)
        rows.append(
            {
                "variant": variant,
                "high_violation_pct": summary["metrics"]["high"]["violation_rate_pct"],
                "low_violation_pct": summary["metrics"]["low"]["violation_rate_pct"],
            }
        )
        print(
            f"{variant:>20}: high={rows[-1]['high_violation_pct']:.3f}% "
            f"low={rows[-1]['low_violation_pct']:.3f}%"
        )
    os.makedirs(args.out_dir, exist_ok=True)
    path = os.path.join(args.out_dir, "ablation_summary.csv")
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(
            f, fieldnames=["variant", "high_violation_pct", "low_violation_pct"]
        )
        writer.writeheader()
        writer.writerows(rows)
    return 0


def _cmd_plot(args) -> int:
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        print("plotting requires matplotlib (pip install infersim[plot])", file=sys.stderr)
        return 2
    from .report import FEEDBACK_COLUMNS, REQUEST_COLUMNS, read_rows

    run_dir = args.run_dir
    os.makedirs(args.out_dir or run_dir, exist_ok=True)
    out_dir = args.out_dir or run_dir

    requests = read_rows(os.path.join(run_dir, "requests.csv"), REQUEST_COLUMNS)
    feedback = read_rows(os.path.join(run_dir, "feedback.csv"), FEEDBACK_COLUMNS)

    fig, ax = plt.subplots()
    for label in ("high", "low"):
        lat = sorted(
            float(r["latency"]) for r in requests if r["priority"] == label and r["latency"] != ""
        )
        if lat:
            ys = [i / len(lat) for i in range(1, len(lat) + 1)]
            ax.plot(lat, ys, label=label)
    ax.set_xlabel("latency (ms)")
    ax.set_ylabel("CDF")
    ax.legend()
    fig.savefig(os.path.join(out_dir, "latency_cdf.png"), dpi=120)
    plt.close(fig)

    fig, ax = plt.subplots()
    errs = sorted(abs(float(r["predicted"]) - float(r["actual"])) / float(r["actual"]) for r in feedback)
    if errs:
        ys = [i / len(errs) for i in range(1, len(errs) + 1)]
        ax.plot(errs, ys)
    ax.set_xlabel("|relative prediction error|")
    ax.set_ylabel("CDF")
    fig.savefig(os.path.join(out_dir, "prediction_error_cdf.png"), dpi=120)
    plt.close(fig)
    print(f"plots written to {out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="infersim",
        description="deadline- and interference-aware inference scheduling simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one experiment")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--policy", choices=POLICY_NAMES)
    p.add_argument("--variant", choices=ABLATION_VARIANTS)
    p.add_argument("--duration", type=float, help="duration_ms override")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("sweep", help="run a seed/policy grid")
    p.add_argument("--config", required=True)
    p.add_argument("--seeds", required=True, help="comma-separated seed list")
    p.add_argument("--policies", help="comma-separated policy list")
    p.add_argument("--duration", type=float)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("report", help="recompute metrics from a run directory")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--window", type=float, help="goodput window in ms")
    p.add_argument("--out", help="summary output path")
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("perturb", help="randomly perturb profiled throughputs")
    p.add_argument("--profiles-dir", required=True)
    p.add_argument("--magnitude", type=float, required=True, help="percent, 0..100")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_perturb)

    p = sub.add_parser("ablate", help="run the predictive-policy ablation variants")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--duration", type=float)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_ablate)

    p = sub.add_parser("plot", help="figures from run CSVs (requires matplotlib)")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--out-dir")
    p.set_defaults(func=_cmd_plot)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ProfileParseError, ProfileValidationError, FileNotFoundError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
