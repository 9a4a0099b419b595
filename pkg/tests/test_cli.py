import os

import numpy as np
import pytest

from hoikit import container as cont
from hoikit.cli import main
from hoikit.config import RunConfig, apply_overrides, load_config
from hoikit.errors import ValidationError

SMALL_CFG = """
seed = 7
epsilon = 0.05
window_key_count = 6
stride = 2
steps = 30
train_steps = 40
batch_size = 4
lr = 1e-2
width = 32
hidden = 48
blocks = 1
basis_count = 128
projected_count = 32
synth_count = 3
"""


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg_path = root / "run.cfg"
    cfg_path.write_text(SMALL_CFG)
    data = root / "data"
    assert main(["--config", str(cfg_path), "synth", "--out", str(data)]) == 0
    return root, str(cfg_path), str(data)


def run(args):
    return main(args)


class TestConfig:
    def test_defaults_and_overrides(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text("seed = 3\nepsilon = 0.02  # comment\n")
        cfg = load_config(str(path))
        assert cfg.seed == 3 and cfg.epsilon == 0.02
        apply_overrides(cfg, {"seed": 9, "epsilon": None})
        assert cfg.seed == 9 and cfg.epsilon == 0.02

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text("mystery = 1\n")
        with pytest.raises(ValidationError):
            load_config(str(path))

    def test_bad_value_rejected(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text("seed = banana\n")
        with pytest.raises(ValidationError):
            load_config(str(path))

    def test_env_overrides_paths(self, tmp_path, monkeypatch):
        monkeypatch.setenv("HOIKIT_DATA_DIR", "/somewhere")
        cfg = load_config(None)
        assert cfg.data_dir == "/somewhere"


class TestSynth:
    def test_outputs_valid_containers(self, workspace):
        root, cfg, data = workspace
        names = sorted(os.listdir(data))
        assert "box.obj" in names
        seqs = [n for n in names if n.endswith(".hoi")]
        assert len(seqs) == 3
        for name in seqs:
            summary = cont.validate_file(os.path.join(data, name))
            assert summary == {"motion": 1, "task": 1}

    def test_rerun_byte_identical(self, workspace, tmp_path):
        root, cfg, data = workspace
        again = tmp_path / "again"
        assert run(["--config", cfg, "synth", "--out", str(again)]) == 0
        for name in sorted(os.listdir(data)):
            a = open(os.path.join(data, name), "rb").read()
            b = open(os.path.join(again, name), "rb").read()
            assert a == b, name


class TestExtractInterp:
    def test_extract_interp_round_trip(self, workspace, tmp_path):
        root, cfg, data = workspace
        keys_dir = tmp_path / "keys"
        assert run(["--config", cfg, "extract", "--input", data, "--out", str(keys_dir)]) == 0
        summary = (keys_dir / "extract_summary.csv").read_text().splitlines()
        assert summary[0] == "name,key_count,max_error"
        assert len(summary) == 4
        for line in summary[1:]:
            assert float(line.split(",")[2]) <= 0.05
        dense_dir = tmp_path / "dense"
        assert run(["--config", cfg, "interp", "--input", str(keys_dir), "--out", str(dense_dir)]) == 0
        files = sorted(os.listdir(dense_dir))
        assert files and all(f.endswith(".dense.hoi") for f in files)
        for f in files:
            cont.validate_file(os.path.join(dense_dir, f))

    def test_missing_input_is_validation_failure(self, workspace):
        root, cfg, data = workspace
        assert run(["--config", cfg, "extract", "--input", "/nope", "--out", "/tmp/x"]) == 1

    def test_corrupt_container_rejected(self, workspace, tmp_path):
        root, cfg, data = workspace
        bad_dir = tmp_path / "bad"
        bad_dir.mkdir()
        (bad_dir / "broken.hoi").write_bytes(b"HOIC" + b"\xff" * 20)
        assert run(["--config", cfg, "extract", "--input", str(bad_dir), "--out", str(tmp_path / "o")]) == 1


class TestTrainSampleRollout:
    def test_full_pipeline(self, workspace, tmp_path):
        root, cfg, data = workspace
        out = tmp_path / "run"
        assert run(["--config", cfg, "train", "--data", data, "--out", str(out)]) == 0
        assert (out / "denoiser.hoip").exists()
        loss_lines = (out / "loss.csv").read_text().splitlines()
        assert loss_lines[0] == "step,loss"
        assert len(loss_lines) == 41

        gen = tmp_path / "gen"
        ckpt = str(out / "denoiser.hoip")
        assert run([
            "--config", cfg, "--data-dir", data, "sample",
            "--checkpoint", ckpt, "--tasks", data, "--out", str(gen),
        ]) == 0
        gen_files = [f for f in os.listdir(gen) if f.endswith(".gen.hoi")]
        assert len(gen_files) == 3

        long_dir = tmp_path / "long"
        assert run([
            "--config", cfg, "--data-dir", data, "genlong",
            "--checkpoint", ckpt, "--tasks", os.path.join(data, "seq_00000.hoi"),
            "--windows", "3", "--out", str(long_dir),
        ]) == 0
        for tag, payload in cont.read_chunks(os.path.join(long_dir, "long.genkeys.hoi")):
            if tag == "keyset":
                keys = cont.payload_keyset(payload)
                assert len(keys) == 3 * (7 - 2) + 2

        roll = tmp_path / "roll"
        assert run([
            "--config", cfg, "--data-dir", data, "rollout",
            "--data", data, "--out", str(roll),
        ]) == 0
        csv_text = (roll / "tracking.csv").read_text()
        assert "TTR" in csv_text
        assert all(row.split(",")[3] == "1.0" for row in csv_text.splitlines()[1:])
        assert (roll / "finetune.win.hoi").exists()

        # fine-tune windows feed straight back into training
        out2 = tmp_path / "run2"
        assert run(["--config", cfg, "train", "--data", str(roll), "--out", str(out2)]) == 0

        met = tmp_path / "met"
        assert run([
            "--config", cfg, "--data-dir", data, "metrics",
            "--gen", data, "--gt", data, "--out", str(met),
        ]) == 0
        table = (met / "generation.txt").read_text()
        assert "T_s" in table and "0.0" in table
        assert run(["--config", cfg, "report", "--input", str(met / "generation.csv"),
                    "--format", "table"]) == 0

    def test_train_rerun_byte_identical(self, workspace, tmp_path):
        root, cfg, data = workspace
        a, b = tmp_path / "a", tmp_path / "b"
        assert run(["--config", cfg, "train", "--data", data, "--out", str(a)]) == 0
        assert run(["--config", cfg, "train", "--data", data, "--out", str(b)]) == 0
        assert (a / "denoiser.hoip").read_bytes() == (b / "denoiser.hoip").read_bytes()
        assert (a / "loss.csv").read_text() == (b / "loss.csv").read_text()
