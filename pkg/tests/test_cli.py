import csv
import json
from pathlib import Path

import numpy as np
import pytest

from invmh.cli import ExperimentConfig, build_config, main


class TestConfigPrecedence:
    def test_defaults(self):
        cfg = ExperimentConfig().resolved()
        assert cfg.proposal_hidden == 32
        assert cfg.critic_hidden == 32
        assert cfg.keep == 1000
        assert cfg.p0_scale == 5.0
        assert cfg.rounds == 1500

    def test_per_target_rounds(self):
        assert ExperimentConfig(target="mog6").resolved().rounds == 3500
        assert ExperimentConfig(target="mog3_unbalanced").resolved().rounds == 1300

    def test_mog2_init_scale(self):
        assert ExperimentConfig(target="mog2").resolved().proposal_init_scale == 0.5
        assert ExperimentConfig(target="mog6").resolved().proposal_init_scale == 1.0

    def test_bayes_defaults(self, tmp_path):
        cfg = ExperimentConfig(target="heart", dataset_path="x").resolved()
        assert cfg.proposal_hidden == 64
        assert cfg.critic_hidden == 128
        assert cfg.proposal_layers == 5
        assert cfg.keep == 5000
        assert cfg.p0_scale == 1.0
        assert cfg.proposal_init_scale == 0.02
        assert cfg.reinject_frac == 0.125
        assert cfg.rwmh_scale == 0.5

    def test_file_overrides_default(self, tmp_path):
        conf = tmp_path / "run.cfg"
        conf.write_text("lr = 0.01\nrounds = 7\n")

        class Args:
            config = str(conf)
            command = "train"

        cfg = build_config(Args())
        assert cfg.lr == 0.01
        assert cfg.rounds == 7

    def test_cli_overrides_file(self, tmp_path):
        conf = tmp_path / "run.cfg"
        conf.write_text("lr = 0.01\n")

        class Args:
            config = str(conf)
            lr = 0.5

        cfg = build_config(Args())
        assert cfg.lr == 0.5

    def test_json_config(self, tmp_path):
        conf = tmp_path / "run.json"
        conf.write_text(json.dumps({"seed": 9, "target": "ring"}))

        class Args:
            config = str(conf)

        cfg = build_config(Args())
        assert cfg.seed == 9 and cfg.target == "ring"

    def test_unknown_key_rejected(self, tmp_path):
        conf = tmp_path / "run.cfg"
        conf.write_text("learning_rate = 0.5\n")

        class Args:
            config = str(conf)

        from invmh.cli import ConfigError

        with pytest.raises(ConfigError):
            build_config(Args())


class TestExitCodes:
    def test_bad_kernel_is_config_error(self, capsys):
        assert main(["sample", "--kernel", "rwmh"]) == 2
        assert "config error" in capsys.readouterr().err

    def test_logistic_without_dataset_path(self, capsys):
        assert main(["train", "--target", "heart"]) == 2

    def test_missing_dataset_file(self, tmp_path, capsys):
        assert main(["train", "--target", "heart",
                     "--dataset-path", str(tmp_path / "nope.csv")]) == 2

    def test_bad_config_key_type(self, tmp_path, capsys):
        conf = tmp_path / "run.cfg"
        conf.write_text("rounds = soon\n")
        assert main(["train", "--config", str(conf)]) == 2

    def test_missing_checkpoint_for_sampling(self, tmp_path, capsys):
        assert main(["sample", "--target", "mog2", "--out", str(tmp_path),
                     "--checkpoint", str(tmp_path / "nope.ckpt")]) == 2


class TestTrainCommand:
    def test_writes_artifacts(self, tmp_path):
        out = tmp_path / "run"
        code = main(["train", "--target", "mog2", "--out", str(out),
                     "--rounds", "2", "--pool-size", "64", "--batch-size", "32"])
        assert code == 0
        for name in ("proposal.ckpt", "critic.ckpt", "pool.csv",
                     "history.csv", "run.json"):
            assert (out / name).exists(), name
        meta = json.loads((out / "run.json").read_text())
        assert meta["seed"] == 0 and "config_hash" in meta
        pool = np.loadtxt(out / "pool.csv", delimiter=",")
        assert pool.shape == (64, 2)


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    assert main(["train", "--target", "mog2", "--out", str(out),
                 "--rounds", "2", "--pool-size", "64",
                 "--batch-size", "32"]) == 0
    return out


class TestSampleCommand:

    def test_sample_ai(self, trained):
        code = main(["sample", "--target", "mog2", "--out", str(trained),
                     "--burn-in", "5", "--keep", "20", "--chains", "2"])
        assert code == 0
        assert (trained / "trace_mog2_ai_0.csv").exists()
        assert (trained / "trace_mog2_ai_1.csv").exists()
        with open(trained / "metrics.csv", newline="") as f:
            rows = list(csv.DictReader(f))
        assert len(rows) == 1
        assert rows[0]["target"] == "mog2" and rows[0]["kernel"] == "ai"
        assert rows[0]["ref_source"] == "analytic"

    def test_sample_determinism(self, trained, tmp_path):
        args = ["sample", "--target", "mog2", "--out", str(trained),
                "--burn-in", "5", "--keep", "20", "--chains", "1"]
        main(args)
        first = (trained / "trace_mog2_ai_0.csv").read_text()
        main(args)
        assert (trained / "trace_mog2_ai_0.csv").read_text() == first

    def test_sample_hmc_no_checkpoint_needed(self, tmp_path):
        code = main(["sample", "--target", "mog2", "--kernel", "hmc",
                     "--out", str(tmp_path), "--burn-in", "5", "--keep", "20",
                     "--step-size", "0.1"])
        assert code == 0
        assert (tmp_path / "trace_mog2_hmc_0.csv").exists()


class TestBenchmarkCommand:
    def test_skips_missing_checkpoints(self, tmp_path):
        out = tmp_path / "bench"
        code = main(["benchmark", "--targets", "mog2", "--out", str(out),
                     "--keep", "20", "--burn-in", "5", "--step-size", "0.1"])
        assert code == 0
        with open(out / "benchmark.csv", newline="") as f:
            rows = list(csv.DictReader(f))
        # ai row skipped (no checkpoint), hmc row present
        assert [r["kernel"] for r in rows] == ["hmc"]
        skipped = (out / "benchmark_skipped.txt").read_text()
        assert "mog2,ai" in skipped


class TestDiagnoseCommand:
    def test_prints_ess(self, tmp_path, capsys):
        out = tmp_path / "run"
        main(["train", "--target", "mog2", "--out", str(out),
              "--rounds", "2", "--pool-size", "64", "--batch-size", "32"])
        main(["sample", "--target", "mog2", "--out", str(out),
              "--burn-in", "5", "--keep", "30", "--chains", "2"])
        capsys.readouterr()
        code = main(["diagnose", "--target", "mog2",
                     str(out / "trace_mog2_ai_0.csv"),
                     str(out / "trace_mog2_ai_1.csv")])
        assert code == 0
        printed = capsys.readouterr().out
        assert "min_ess=" in printed and "rhat=" in printed


class TestLogisticRoundTrip:
    def test_train_then_sample_with_whitening(self, tmp_path):
        out = tmp_path / "heart"
        data = Path(__file__).resolve().parent.parent / "data" / "heart.csv"
        code = main(["train", "--target", "heart", "--delimiter", ",",
                     "--dataset-path", str(data), "--out", str(out),
                     "--rounds", "1", "--pool-size", "64",
                     "--batch-size", "32"])
        assert code == 0
        std = np.loadtxt(out / "standardize.csv", delimiter=",", ndmin=2)
        assert std.shape == (2, 14) and np.all(std[1] > 0)
        code = main(["sample", "--target", "heart", "--delimiter", ",",
                     "--dataset-path", str(data), "--out", str(out),
                     "--burn-in", "5", "--keep", "20", "--chains", "1"])
        assert code == 0
        trace = np.loadtxt(out / "trace_heart_ai_0.csv", delimiter=",",
                           skiprows=1)
        states = trace[:, 2:]
        # states are reported in original (unwhitened) coordinates: they
        # should scatter around the whitening mean, not around zero with
        # unit spread in every coordinate
        assert states.shape == (20, 14)
        assert np.all(np.abs(states - std[0]) < 10 * std[1] + 1e-6)

    def test_sample_without_standardize_file_is_config_error(self, tmp_path):
        data = Path(__file__).resolve().parent.parent / "data" / "heart.csv"
        (tmp_path / "proposal.ckpt").write_text("")
        assert main(["sample", "--target", "heart", "--delimiter", ",",
                     "--dataset-path", str(data), "--out", str(tmp_path),
                     "--burn-in", "1", "--keep", "2"]) == 2
