import yaml

from infersim.cli import main
from infersim.profiles import default_profiles, load_profiles_dir, save_profiles_dir


def write_config(path, **overrides):
    doc = {
        "profiles": "default6",
        "duration_ms": 400.0,
        "seed": 1,
        "n_gpus": 2,
        "policy": "predictive",
        "ground_truth": {"noise_sigma": 0.05},
        "workload": {
            "resnet50": {"mode": "poisson", "rate": 400},
            "vgg19": {"mode": "poisson", "rate": 200},
            "yolo_v8n": {"mode": "uniform", "rate": 150},
        },
    }
    doc.update(overrides)
    with open(path, "w") as f:
        yaml.safe_dump(doc, f)
    return path


class TestRun:
    def test_happy_path(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "cfg.yaml")
        out = tmp_path / "out"
        assert main(["run", "--config", str(cfg), "--out-dir", str(out)]) == 0
        for name in (
            "trace.csv",
            "requests.csv",
            "decisions.csv",
            "feedback.csv",
            "cap_timeline.csv",
            "batches.csv",
            "summary.yaml",
        ):
            assert (out / name).exists()
        summary = yaml.safe_load((out / "summary.yaml").read_text())
        assert summary["policy"] == "predictive"
        assert 0 <= summary["metrics"]["high"]["violation_rate_pct"] <= 100

    def test_policy_and_seed_overrides(self, tmp_path):
        cfg = write_config(tmp_path / "cfg.yaml")
        out = tmp_path / "out"
        assert main(
            ["run", "--config", str(cfg), "--out-dir", str(out), "--policy", "temporal", "--seed", "9"]
        ) == 0
        summary = yaml.safe_load((out / "summary.yaml").read_text())
        assert summary["policy"] == "temporal"
        assert summary["seed"] == 9

    def test_unknown_config_field_exits_nonzero(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "cfg.yaml", typo_field=1)
        rc = main(["run", "--config", str(cfg), "--out-dir", str(tmp_path / "o")])
        assert rc == 2
        assert "unknown config fields" in capsys.readouterr().err

    def test_missing_config_file(self, tmp_path, capsys):
        rc = main(["run", "--config", str(tmp_path / "nope.yaml"), "--out-dir", str(tmp_path / "o")])
        assert rc == 2

    def test_workload_for_unknown_model_rejected(self, tmp_path, capsys):
        cfg = write_config(
            tmp_path / "cfg.yaml",
            workload={"mystery": {"mode": "poisson", "rate": 10}},
        )
        rc = main(["run", "--config", str(cfg), "--out-dir", str(tmp_path / "o")])
        assert rc == 2
        assert "unknown model" in capsys.readouterr().err


class TestReport:
    def test_report_matches_run_summary(self, tmp_path):
        cfg = write_config(tmp_path / "cfg.yaml")
        out = tmp_path / "out"
        assert main(["run", "--config", str(cfg), "--out-dir", str(out)]) == 0
        assert main(["report", "--run-dir", str(out)]) == 0
        report = yaml.safe_load((out / "report.yaml").read_text())
        summary = yaml.safe_load((out / "summary.yaml").read_text())
        assert report == summary["metrics"]


class TestPerturb:
    def test_perturb_directory(self, tmp_path):
        src = tmp_path / "profiles"
        save_profiles_dir(default_profiles(), src)
        dst = tmp_path / "perturbed"
        rc = main(
            ["perturb", "--profiles-dir", str(src), "--magnitude", "15", "--seed", "3",
             "--out-dir", str(dst)]
        )
        assert rc == 0
        out = load_profiles_dir(dst)
        base = load_profiles_dir(src)
        assert set(out) == set(base)
        assert out["resnet50"].throughput != base["resnet50"].throughput
        assert out["resnet50"].total_latency == base["resnet50"].total_latency


class TestSweep:
    def test_seed_grid(self, tmp_path):
        cfg = write_config(tmp_path / "cfg.yaml", duration_ms=250.0)
        out = tmp_path / "sweep"
        rc = main(
            ["sweep", "--config", str(cfg), "--seeds", "1,2", "--policies",
             "predictive,temporal", "--out-dir", str(out)]
        )
        assert rc == 0
        assert (out / "sweep_summary.csv").exists()
        lines = (out / "sweep_summary.csv").read_text().strip().splitlines()
        assert len(lines) == 1 + 4  # header + 2 seeds x 2 policies
        for policy in ("predictive", "temporal"):
            for seed in (1, 2):
                assert (out / f"{policy}_seed{seed}" / "summary.yaml").exists()


class TestAblate:
    def test_variants_run(self, tmp_path):
        cfg = write_config(tmp_path / "cfg.yaml", duration_ms=250.0)
        out = tmp_path / "ablate"
        rc = main(["ablate", "--config", str(cfg), "--out-dir", str(out)])
        assert rc == 0
        lines = (out / "ablation_summary.csv").read_text().strip().splitlines()
        assert len(lines) == 1 + 5
        for variant in ("full", "no_priority_scan", "no_gamma_advantage", "no_meet", "no_violate_aimd"):
            assert (out / variant / "summary.yaml").exists()
