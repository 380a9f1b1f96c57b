from __future__ import annotations

import json
import subprocess
import sys

import numpy as np
import pytest

from colearn import __version__
from colearn.cli import main
from colearn.feature_bank import load_bank

SPEC = {
    "n_classes": 4,
    "dim": 8,
    "n_source": 200,
    "n_target": 200,
    "n_templates": 4,
    "seed": 3,
}

ADAPT_FLAGS = ["--episodes", "4", "--lr-decay-episode", "2"]


def run_cli(*argv):
    code = main(list(argv))
    assert code == 0, f"command failed: {argv}"


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    spec_path = root / "spec.json"
    spec_path.write_text(json.dumps(SPEC))
    data = root / "data"
    run_cli("generate", "--spec", str(spec_path), "--out", str(data))
    model_dir = root / "model"
    run_cli("train-source", "--bank", str(data / "source.fbank"), "--out", str(model_dir))
    return {
        "root": root,
        "spec": spec_path,
        "data": data,
        "model": model_dir / "source_model.clmd",
    }


def adapt_args(ws, out, *extra):
    return [
        "adapt",
        "--model", str(ws["model"]),
        "--target-a", str(ws["data"] / "target_a.fbank"),
        "--target-star", str(ws["data"] / "target_star.fbank"),
        "--out", str(out),
        *ADAPT_FLAGS,
        *extra,
    ]


class TestGenerate:
    def test_artifacts_written(self, workspace):
        data = workspace["data"]
        for name in (
            "source.fbank",
            "target_a.fbank",
            "target_star.fbank",
            "templates.fbank",
            "shift_spec.json",
            "manifest.json",
        ):
            assert (data / name).exists(), name
        bank = load_bank(str(data / "source.fbank"))
        assert bank.n_samples == SPEC["n_source"]
        assert bank.dim == SPEC["dim"]

    def test_manifest_records_inputs_and_seed(self, workspace):
        manifest = json.loads((workspace["data"] / "manifest.json").read_text())
        assert manifest["command"] == "generate"
        assert manifest["seed"] == SPEC["seed"]
        assert manifest["version"] == __version__
        assert str(workspace["spec"]) in manifest["inputs"]
        assert len(manifest["inputs"][str(workspace["spec"])]) == 64  # sha256 hex

    def test_seed_flag_overrides_spec_file(self, workspace, tmp_path):
        out = tmp_path / "other"
        run_cli(
            "generate", "--spec", str(workspace["spec"]),
            "--seed", "9", "--out", str(out),
        )
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["seed"] == 9
        a = load_bank(str(workspace["data"] / "source.fbank"))
        b = load_bank(str(out / "source.fbank"))
        assert not np.array_equal(a.features, b.features)


class TestTrainSource:
    def test_model_file_written(self, workspace):
        assert workspace["model"].exists()
        manifest = json.loads(
            (workspace["model"].parent / "manifest.json").read_text()
        )
        assert manifest["command"] == "train-source"
        assert manifest["config"]["min_accuracy"] == 0.95


class TestAdapt:
    def test_artifacts_and_metrics(self, workspace, tmp_path):
        out = tmp_path / "run"
        run_cli(*adapt_args(workspace, out, "--seed", "0"))
        for name in (
            "adapted_model.clmd",
            "reports.jsonl",
            "episodes.csv",
            "metrics.json",
            "manifest.json",
            "coverage_curve.png",
            "accuracy_curve.png",
            "loss_curve.png",
        ):
            assert (out / name).exists(), name
        metrics = json.loads((out / "metrics.json").read_text())
        assert metrics["episodes"] == 4
        assert 0.0 < metrics["final"]["coverage"] <= 1.0
        assert 0.0 <= metrics["target_evaluation"]["micro_acc"] <= 1.0

    def test_no_figures_flag(self, workspace, tmp_path):
        out = tmp_path / "quiet"
        run_cli(*adapt_args(workspace, out, "--no-figures"))
        assert not (out / "coverage_curve.png").exists()
        assert (out / "reports.jsonl").exists()

    def test_runs_byte_reproducible(self, workspace, tmp_path):
        outs = [tmp_path / "r1", tmp_path / "r2"]
        for out in outs:
            run_cli(*adapt_args(workspace, out, "--no-figures", "--seed", "7"))
        for name in ("adapted_model.clmd", "reports.jsonl", "episodes.csv"):
            assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes(), name

    def test_weak_mode_with_template_bank(self, workspace, tmp_path):
        out = tmp_path / "weak"
        run_cli(
            *adapt_args(
                workspace, out,
                "--mode", "colearn++-weak",
                "--templates", str(workspace["data"] / "templates.fbank"),
                "--no-figures",
            )
        )
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["config"]["mode"] == "colearn++-weak"
        assert manifest["config"]["guidance"]["alpha"] == 1.0
        assert manifest["config"]["scheme"] == "MatchOrConf"

    def test_strong_mode_defaults_to_auto_temperature(self, workspace, tmp_path):
        out = tmp_path / "strong"
        run_cli(
            *adapt_args(
                workspace, out,
                "--mode", "colearn++-strong",
                "--templates", str(workspace["data"] / "templates.fbank"),
                "--no-figures",
            )
        )
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["config"]["guidance"]["t_tilde"] == "auto"
        assert manifest["config"]["scheme"] == "StrongGuidance"
        reports = [
            json.loads(ln)
            for ln in (out / "reports.jsonl").read_text().splitlines()
        ]
        assert all(r["resolved_zs_temperature"] > 0 for r in reports)

    def test_guided_mode_requires_templates(self, workspace, tmp_path, capsys):
        code = main(adapt_args(workspace, tmp_path / "x", "--mode", "colearn++-weak"))
        assert code == 2
        err = json.loads(capsys.readouterr().err)
        assert err["error"] == "ConfigError"
        assert "--templates" in err["message"]


class TestConfigHandling:
    def test_config_file_with_flag_override(self, workspace, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(
            "# engine settings\n"
            "gamma = 0.3\n"
            "episodes = 3\n"
            "lr-decay-episode = 2\n"
        )
        out = tmp_path / "cfgrun"
        run_cli(
            "adapt",
            "--model", str(workspace["model"]),
            "--target-a", str(workspace["data"] / "target_a.fbank"),
            "--target-star", str(workspace["data"] / "target_star.fbank"),
            "--out", str(out),
            "--config", str(cfg),
            "--gamma", "0.4",
            "--no-figures",
        )
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["config"]["gamma"] == 0.4  # flag wins
        assert manifest["config"]["episodes"] == 3  # file value survives
        assert manifest["config"]["lr_decay_episode"] == 2

    def test_unknown_config_key_rejected(self, workspace, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("momentum = 0.9\n")
        code = main(adapt_args(workspace, tmp_path / "x", "--config", str(cfg)))
        assert code == 2
        err = json.loads(capsys.readouterr().err)
        assert err["details"]["violations"] == ["momentum"]

    def test_invalid_gamma_lists_violation(self, workspace, tmp_path, capsys):
        code = main(adapt_args(workspace, tmp_path / "x", "--gamma", "1.5"))
        assert code == 2
        err = json.loads(capsys.readouterr().err)
        assert err["error"] == "ConfigError"
        assert any("conf_threshold" in v for v in err["details"]["violations"])

    def test_alpha_outside_guided_modes_rejected(self, workspace, tmp_path, capsys):
        code = main(adapt_args(workspace, tmp_path / "x", "--alpha", "0.5"))
        assert code == 2
        err = json.loads(capsys.readouterr().err)
        assert any("colearn++" in v for v in err["details"]["violations"])

    def test_missing_model_file_reports_cleanly(self, workspace, tmp_path, capsys):
        code = main(
            adapt_args(
                {"model": tmp_path / "nope.clmd", "data": workspace["data"]},
                tmp_path / "x",
            )
        )
        assert code == 2
        err = json.loads(capsys.readouterr().err)
        assert err["error"] == "FileNotFound"


class TestEvaluate:
    def test_stdout_json(self, workspace, capsys):
        run_cli(
            "evaluate",
            "--model", str(workspace["model"]),
            "--bank", str(workspace["data"] / "target_a.fbank"),
        )
        report = json.loads(capsys.readouterr().out)
        assert 0.0 <= report["micro_acc"] <= 1.0
        assert len(report["confusion"]) == SPEC["n_classes"]
        assert "h_score" not in report

    def test_known_classes_adds_h_score(self, workspace, capsys):
        run_cli(
            "evaluate",
            "--model", str(workspace["model"]),
            "--bank", str(workspace["data"] / "target_a.fbank"),
            "--known-classes", "0,1",
        )
        report = json.loads(capsys.readouterr().out)
        assert 0.0 <= report["h_score"] <= 1.0

    def test_out_dir_copy_matches_stdout(self, workspace, tmp_path, capsys):
        out = tmp_path / "eval"
        run_cli(
            "evaluate",
            "--model", str(workspace["model"]),
            "--bank", str(workspace["data"] / "target_a.fbank"),
            "--out", str(out),
        )
        stdout = capsys.readouterr().out
        assert (out / "evaluation.json").read_text() == stdout
        assert (out / "manifest.json").exists()

    def test_repeat_invocations_identical(self, workspace, capsys):
        args = (
            "evaluate",
            "--model", str(workspace["model"]),
            "--bank", str(workspace["data"] / "target_a.fbank"),
        )
        run_cli(*args)
        first = capsys.readouterr().out
        run_cli(*args)
        assert capsys.readouterr().out == first

    def test_unlabeled_bank_rejected(self, workspace, tmp_path, capsys):
        import colearn.feature_bank as fb

        bank = fb.FeatureBank(
            features=np.ones((3, SPEC["dim"]), dtype=np.float32)
        )
        path = tmp_path / "unlabeled.fbank"
        fb.save_bank(bank, str(path))
        code = main([
            "evaluate", "--model", str(workspace["model"]), "--bank", str(path),
        ])
        assert code == 2
        assert "labeled" in json.loads(capsys.readouterr().err)["message"]


class TestPseudolabels:
    def test_export_with_stats(self, workspace, tmp_path):
        out = tmp_path / "pl"
        run_cli(
            "pseudolabels",
            "--model", str(workspace["model"]),
            "--target-a", str(workspace["data"] / "target_a.fbank"),
            "--target-star", str(workspace["data"] / "target_star.fbank"),
            "--out", str(out),
        )
        lines = (out / "pseudolabels.csv").read_text().splitlines()
        assert lines[0] == "sample_index,label,confidence,provenance"
        assert len(lines) > 1
        stats = json.loads((out / "pseudolabel_stats.json").read_text())
        assert stats["n_total"] == SPEC["n_target"]
        assert 0.0 < stats["coverage"] <= 1.0
        assert 0.0 <= stats["accuracy"] <= 1.0
        assert set(stats["counts"]) == {
            "Match", "AdaptationBranch", "PretrainedBranch",
        }

    def test_guided_export(self, workspace, tmp_path):
        out = tmp_path / "plw"
        run_cli(
            "pseudolabels",
            "--model", str(workspace["model"]),
            "--target-a", str(workspace["data"] / "target_a.fbank"),
            "--target-star", str(workspace["data"] / "target_star.fbank"),
            "--templates", str(workspace["data"] / "templates.fbank"),
            "--mode", "colearn++-weak",
            "--out", str(out),
        )
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["command"] == "pseudolabels"
        assert str(workspace["data"] / "templates.fbank") in manifest["inputs"]


class TestRecommend:
    def test_oracle_mode(self, workspace, capsys):
        run_cli(
            "recommend",
            "--target-a", str(workspace["data"] / "target_a.fbank"),
            "--target-star", str(workspace["data"] / "target_star.fbank"),
            "--use-labels",
        )
        result = json.loads(capsys.readouterr().out)
        assert result["gamma"] in (0.1, 0.5)
        assert result["ratio"] > 0.0
        assert result["proxy_labels"] == "bank-labels"
        assert result["guidance"] is None

    def test_estimated_mode_with_guidance(self, workspace, tmp_path, capsys):
        out = tmp_path / "rec"
        run_cli(
            "recommend",
            "--target-a", str(workspace["data"] / "target_a.fbank"),
            "--target-star", str(workspace["data"] / "target_star.fbank"),
            "--templates", str(workspace["data"] / "templates.fbank"),
            "--out", str(out),
        )
        result = json.loads(capsys.readouterr().out)
        assert result["proxy_labels"] == "zero-shot"
        assert result["guidance"]["guidance"] in ("weak", "strong")
        saved = json.loads((out / "recommend.json").read_text())
        assert saved == result

    def test_estimated_mode_requires_templates(self, workspace, capsys):
        code = main([
            "recommend",
            "--target-a", str(workspace["data"] / "target_a.fbank"),
            "--target-star", str(workspace["data"] / "target_star.fbank"),
        ])
        assert code == 2
        assert "templates" in json.loads(capsys.readouterr().err)["message"]


class TestEntryPoints:
    def test_module_invocation(self):
        proc = subprocess.run(
            [sys.executable, "-m", "colearn.cli", "--version"],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0
        assert proc.stdout.strip() == __version__

    def test_missing_subcommand_is_usage_error(self):
        with pytest.raises(SystemExit):
            main([])
