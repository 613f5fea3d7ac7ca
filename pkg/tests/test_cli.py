import csv
import json
import os
from dataclasses import replace

import pytest

from amble.cli import main
from amble.config import config_to_dict, default_config, save_config
from amble.ppo import METRIC_COLUMNS


@pytest.fixture()
def tiny_config(tmp_path):
    cfg = default_config()
    cfg = replace(cfg, iterations=2, n_envs=2, horizon=8, checkpoint_every=0,
                  seed=3)
    path = tmp_path / "tiny.json"
    save_config(cfg, path)
    return path


def read_bytes(path):
    with open(path, "rb") as fh:
        return fh.read()


class TestExitCodes:
    def test_missing_config_is_config_error(self, tmp_path):
        assert main(["train", "--config", str(tmp_path / "nope.json")]) == 2

    def test_invalid_json_is_config_error(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        assert main(["train", "--config", str(path)]) == 2

    def test_unknown_field_is_config_error(self, tmp_path):
        data = config_to_dict(default_config())
        data["not_a_field"] = 1
        path = tmp_path / "unknown.json"
        path.write_text(json.dumps(data))
        assert main(["train", "--config", str(path)]) == 2

    def test_bad_value_domain_is_config_error(self, tmp_path):
        data = config_to_dict(default_config())
        data["ppo"]["gamma"] = 1.5
        path = tmp_path / "domain.json"
        path.write_text(json.dumps(data))
        assert main(["train", "--config", str(path)]) == 2


class TestTrainEvalPipeline:
    def test_train_outputs(self, tiny_config, tmp_path, capsys):
        out = tmp_path / "run"
        assert main(["train", "--config", str(tiny_config), "--out", str(out),
                     "--quiet"]) == 0
        assert (out / "checkpoint_000000.zip").exists()
        assert (out / "checkpoint_000002.zip").exists()
        assert (out / "config.json").exists()
        with open(out / "metrics.csv") as fh:
            reader = csv.DictReader(fh)
            assert tuple(reader.fieldnames) == METRIC_COLUMNS
            assert len(list(reader)) == 2

    def test_train_determinism(self, tiny_config, tmp_path):
        a = tmp_path / "a"
        b = tmp_path / "b"
        assert main(["train", "--config", str(tiny_config), "--out", str(a),
                     "--quiet"]) == 0
        assert main(["train", "--config", str(tiny_config), "--out", str(b),
                     "--quiet"]) == 0
        assert read_bytes(a / "metrics.csv") == read_bytes(b / "metrics.csv")

    def test_eval_and_trajectory_determinism(self, tiny_config, tmp_path, capsys):
        out = tmp_path / "run"
        main(["train", "--config", str(tiny_config), "--out", str(out),
              "--quiet"])
        ckpt = str(out / "checkpoint_000002.zip")
        t1 = tmp_path / "traj1.csv"
        t2 = tmp_path / "traj2.csv"
        capsys.readouterr()
        assert main(["eval", "--checkpoint", ckpt, "--steps", "30",
                     "--envs", "2", "--trajectory", str(t1)]) == 0
        result = json.loads(capsys.readouterr().out)
        assert "r_command" in result and result["steps"] == 30
        assert main(["eval", "--checkpoint", ckpt, "--steps", "30",
                     "--envs", "2", "--trajectory", str(t2)]) == 0
        assert read_bytes(t1) == read_bytes(t2)

    def test_eval_integrator_override(self, tiny_config, tmp_path, capsys):
        out = tmp_path / "run"
        main(["train", "--config", str(tiny_config), "--out", str(out),
              "--quiet"])
        ckpt = str(out / "checkpoint_000002.zip")
        assert main(["eval", "--checkpoint", ckpt, "--steps", "10",
                     "--integrator", "rk4"]) == 0


class TestCrossvalAndPlot:
    def test_crossval_pendulum(self, tiny_config, tmp_path, capsys):
        out = tmp_path / "run"
        main(["train", "--config", str(tiny_config), "--out", str(out),
              "--quiet"])
        ckpt = str(out / "checkpoint_000002.zip")
        csv_path = tmp_path / "pend.csv"
        capsys.readouterr()
        assert main(["crossval", "--checkpoint", ckpt, "--scenario",
                     "pendulum", "--out", str(csv_path)]) == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["max_joint_divergence_rad"] < 5e-3
        with open(csv_path) as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 1000
        assert set(rows[0]) == {"step", "time_s", "droot_x_m", "droot_z_m",
                                "dpitch_rad", "djoint_max_rad"}

    def test_crossval_locomotion_and_plot(self, tiny_config, tmp_path, capsys):
        out = tmp_path / "run"
        main(["train", "--config", str(tiny_config), "--out", str(out),
              "--quiet"])
        ckpt = str(out / "checkpoint_000002.zip")
        cv = tmp_path / "loco.csv"
        assert main(["crossval", "--checkpoint", ckpt, "--steps", "40",
                     "--out", str(cv)]) == 0
        capsys.readouterr()
        plot_dir = tmp_path / "plots_cv"
        assert main(["plot", "--metrics", str(cv), "--out", str(plot_dir)]) == 0
        assert (plot_dir / "crossval_divergence.csv").exists()
        assert (plot_dir / "plot_metadata.json").exists()

    def test_plot_training_curves(self, tiny_config, tmp_path, capsys):
        out = tmp_path / "run"
        main(["train", "--config", str(tiny_config), "--out", str(out),
              "--quiet"])
        plot_dir = tmp_path / "plots"
        assert main(["plot", "--metrics", str(out / "metrics.csv"),
                     "--out", str(plot_dir)]) == 0
        with open(plot_dir / "training_curves.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 2
        assert abs(max(float(r["normalized_return"]) for r in rows)) <= 1.0
        meta = json.loads((plot_dir / "plot_metadata.json").read_text())
        assert "normalization" in meta

    def test_plot_rejects_unknown_csv(self, tmp_path):
        bad = tmp_path / "junk.csv"
        bad.write_text("a,b\n1,2\n")
        assert main(["plot", "--metrics", str(bad),
                     "--out", str(tmp_path / "p")]) == 2


class TestClips:
    def test_synth_and_validate(self, tmp_path, capsys):
        clip_dir = tmp_path / "clips"
        assert main(["clips", "synth", "--out", str(clip_dir)]) == 0
        files = sorted(os.listdir(clip_dir))
        assert len(files) == 3
        paths = [str(clip_dir / f) for f in files]
        capsys.readouterr()
        assert main(["clips", "validate", *paths]) == 0
        out = capsys.readouterr().out
        assert out.count(": ok") == 3
        assert "transitions=" in out

    def test_validate_reports_invalid(self, tmp_path, capsys):
        bad = tmp_path / "bad.clip"
        bad.write_text("garbage\n")
        assert main(["clips", "validate", str(bad)]) == 2
        assert "INVALID" in capsys.readouterr().out
