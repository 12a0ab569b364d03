import json

import numpy as np
import pytest

from collavoid import net
from collavoid.cli import EXIT_DIVERGED, EXIT_OK, EXIT_USAGE, main
from collavoid.config import ConfigError, RunConfig, valid_keys

TINY = ["--set", "net.lstm_hidden=4", "--set", "net.fc_widths=8,8"]


class TestRunConfig:
    def test_defaults_and_overrides(self):
        cfg = RunConfig.load(overrides=["trainer.lr=1e-4", "trainer.phase1_agents=2,3", "rollout.record_probs=yes"])
        assert cfg["trainer"]["lr"] == 1e-4
        assert cfg["trainer"]["phase1_agents"] == (2, 3)
        assert cfg["rollout"]["record_probs"] is True
        assert cfg["sim"]["dt"] == 0.2

    def test_unknown_key_lists_valid_keys(self):
        with pytest.raises(ConfigError, match="trainer.lr"):
            RunConfig.load(overrides=["trainer.learning_rate=1"])
        with pytest.raises(ConfigError):
            RunConfig.load(overrides=["nonsense"])
        with pytest.raises(ConfigError):
            RunConfig.load(overrides=["trainer.batch_size=abc"])
        assert "sim.dt" in valid_keys()

    def test_echo_reproduces(self, tmp_path):
        cfg = RunConfig.load(overrides=["pretrain.epochs=3", "obs.sensing_radius=2.5", "eval.mode=sample"])
        cfg.write(tmp_path / "c.ini")
        assert RunConfig.load(tmp_path / "c.ini").values == cfg.values

    def test_file_then_overrides(self, tmp_path):
        (tmp_path / "c.ini").write_text("[trainer]\nlr = 3e-5\nbatch_size = 50\n")
        cfg = RunConfig.load(tmp_path / "c.ini", ["trainer.batch_size=70"])
        assert cfg["trainer"]["lr"] == 3e-5 and cfg["trainer"]["batch_size"] == 70


@pytest.fixture(scope="module")
def pretrained(tmp_path_factory):
    out = tmp_path_factory.mktemp("pt")
    rc = main(["pretrain", "--out", str(out), "--seed", "1", *TINY, "--set", "pretrain.n_examples=600",
               "--set", "pretrain.epochs=2", "--set", "pretrain.check_scenarios=3"])
    assert rc == EXIT_OK
    return out


class TestCli:
    def test_pretrain_outputs(self, pretrained):
        assert (pretrained / "pretrain.bin").exists()
        assert (pretrained / "effective_config.ini").exists()
        assert len((pretrained / "pretrain_loss.csv").read_text().splitlines()) == 3
        summary = json.loads((pretrained / "pretrain_summary.json").read_text())
        assert 0 <= summary["single_agent_success"] <= 1

    def test_usage_errors(self, tmp_path, capsys):
        assert main(["pretrain", "--out", str(tmp_path), "--set", "bogus.key=1"]) == EXIT_USAGE
        assert "valid keys" in capsys.readouterr().err
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == EXIT_USAGE
        assert main(["train", "--out", str(tmp_path)]) == EXIT_USAGE
        assert main(["eval", "--out", str(tmp_path), "--suite", str(tmp_path / "missing.json"), "ZeroVelocity"]) \
            == EXIT_USAGE

    def test_train_resume_eval_rollout(self, pretrained, tmp_path):
        train = ["--set", "trainer.phase1_episodes=20", "--set", "trainer.phase2_episodes=0",
                 "--set", "trainer.checkpoint_every=10", "--set", "trainer.batch_size=20"]
        run = tmp_path / "run"
        assert main(["train", "--out", str(run), "--init", str(pretrained / "pretrain.bin"), *train]) == EXIT_OK
        assert len((run / "training_log.csv").read_text().splitlines()) == 21
        resumed = tmp_path / "resumed"
        more = [*train, "--set", "trainer.phase1_episodes=25"]
        assert main(["train", "--out", str(resumed), "--resume", str(run / "ckpt_000000010.bin"), *more]) == EXIT_OK
        first = (resumed / "training_log.csv").read_text().splitlines()[1]
        assert first.startswith("11,")
        assert net.load_checkpoint(resumed / "final.bin").episodes == 25

        assert main(["gen-suite", "--out", str(tmp_path), "--set", "eval.count=4"]) == EXIT_OK
        suite = tmp_path / "suite.json"
        ev = tmp_path / "ev"
        assert main(["eval", "--out", str(ev), "--suite", str(suite), str(run / "final.bin"),
                     str(pretrained / "pretrain.bin"), "NonCooperative"]) == EXIT_OK
        rows = (ev / "report.csv").read_text().splitlines()
        assert len(rows) == 5 and (ev / "outcomes_final.json").exists()

        ro = tmp_path / "ro"
        args = ["rollout", "--out", str(ro), "--policy", str(run / "final.bin"), "--set", "rollout.kind=pair_swaps",
                "--set", "rollout.n_agents=6", "--probs"]
        assert main(args) == EXIT_OK
        doc = json.loads((ro / "episode.json").read_text())
        assert doc["n_agents"] == 6 and "policy" in doc["steps"][1]
        first_run = (ro / "episode.csv").read_bytes()
        assert main(args) == EXIT_OK
        assert (ro / "episode.csv").read_bytes() == first_run

    def test_divergence_exit_code(self, pretrained, tmp_path, capsys):
        ck = net.load_checkpoint(pretrained / "pretrain.bin")
        bad = dict(ck.params, v_b=np.array([np.nan], dtype=np.float32))
        net.save_checkpoint(tmp_path / "bad.bin", bad, ck.config)
        rc = main(["train", "--out", str(tmp_path / "o"), "--init", str(tmp_path / "bad.bin"),
                   "--set", "trainer.phase1_episodes=5", "--set", "trainer.phase2_episodes=0"])
        assert rc == EXIT_DIVERGED
        assert "ckpt_000000000.bin" in capsys.readouterr().err

    def test_gen_dataset(self, tmp_path):
        assert main(["gen-dataset", "--out", str(tmp_path), "--set", "pretrain.n_examples=50"]) == EXIT_OK
        with np.load(tmp_path / "dataset.npz") as d:
            assert d["actions"].shape == (50,) and d["others"].shape == (50, 19, 7)
