import csv
import json
import subprocess
import sys

import pytest

from ptspinn.cli import UsageError, config_to_ini, main, manifest, read_config, sweep_table
from ptspinn.trainer import TrainConfig

SMALL_INI = """\
[network]
width = 8
num_blocks = 1

[batch]
interior = 32
initial = 8
boundary = 8

[optimizer]
warmup = 2

[run]
iterations = 4
eval_every = 2
"""


@pytest.fixture
def ini(tmp_path):
    p = tmp_path / "small.ini"
    p.write_text(SMALL_INI)
    return p


def rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


class TestTrain:
    def test_advection_tau_column(self, ini, tmp_path, capsys):
        out = tmp_path / "adv"
        assert main(["train", "--config", str(ini), "--problem", "advection", "--method", "adaptive-pts", "--seed", "0", "--out", str(out)]) == 0
        data = rows(out / "metrics.csv")
        assert float(data[0]["tau"]) == 1.0
        assert [r["rel_l2"] != "" for r in data] == [False, True, False, True]
        assert "final loss" in capsys.readouterr().out
        assert (out / "checkpoints" / "ckpt_0000004.npz").exists()

    def test_cavity_three_taus(self, ini, tmp_path):
        out = tmp_path / "ldc"
        assert main(["train", "--config", str(ini), "--problem", "ldc", "--out", str(out)]) == 0
        header = rows(out / "metrics.csv")[0].keys()
        assert [c for c in header if c.startswith("tau")] == ["tau_u", "tau_v", "tau_p"]

    def test_fixed_needs_tau(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["train", "--problem", "burgers", "--method", "fixed-pts", "--out", str(tmp_path)])
        assert exc.value.code == 2

    def test_tau_only_with_fixed(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["train", "--problem", "burgers", "--method", "adaptive-pts", "--tau", "0.1", "--out", str(tmp_path)])
        assert exc.value.code == 2

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_exit_code(self, tmp_path):
        ini = tmp_path / "hot.ini"
        ini.write_text(SMALL_INI.replace("warmup = 2", "warmup = 0\nlr = 1e200").replace("iterations = 4", "iterations = 30"))
        out = tmp_path / "run"
        assert main(["train", "--config", str(ini), "--problem", "burgers", "--out", str(out)]) == 3
        snap = json.loads((out / "diverged.json").read_text())
        assert {"iter", "tau", "weights", "lr"} <= set(snap)

    def test_manifest_and_config_roundtrip(self, ini, tmp_path):
        out = tmp_path / "b"
        main(["train", "--config", str(ini), "--problem", "burgers", "--out", str(out)])
        man = json.loads((out / "manifest.json").read_text())
        cfg = TrainConfig(**read_config(out / "config.ini"))
        assert man["config_sha1"] == manifest(cfg)["config_sha1"]
        assert man["config"]["lr"] == 1e-3 and man["config"]["causal_chunks"] == 16


class TestConfigFile:
    def test_unknown_key(self, tmp_path):
        p = tmp_path / "bad.ini"
        p.write_text("[network]\nwidht = 8\n")
        with pytest.raises(UsageError):
            read_config(p)

    def test_unknown_section(self, tmp_path):
        p = tmp_path / "bad.ini"
        p.write_text("[net]\nwidth = 8\n")
        with pytest.raises(UsageError):
            read_config(p)

    def test_roundtrip(self, tmp_path):
        cfg = TrainConfig(problem="ldc", method="fixed-pts", tau=(0.1, 0.2, 0.3), constants={"Re": 100.0})
        p = tmp_path / "c.ini"
        p.write_text(config_to_ini(cfg))
        assert TrainConfig(**read_config(p)) == cfg


class TestVerify:
    @pytest.mark.parametrize("what", ["theorem2", "fig5", "theorem1", "jets"])
    def test_subcommands_pass(self, what, capsys):
        assert main(["verify", what]) == 0
        assert "PASS" in capsys.readouterr().out

    def test_theorem2_report_files(self, tmp_path, capsys):
        main(["verify", "theorem2", "--out", str(tmp_path)])
        text = capsys.readouterr().out
        assert "slope u_dag " in text and "FAIL" not in text
        assert (tmp_path / "theorem2.csv").read_text().startswith("h,tau,")

    def test_gradients(self, capsys):
        assert main(["verify", "gradients", "--width", "8"]) == 0
        assert "max relative deviation" in capsys.readouterr().out


class TestSweep:
    def test_flag_when_orderings_disagree(self):
        rows_ = [
            {"method": "fixed-pts", "tau": 0.1, "loss_mean": 1.0, "loss_std": 0.0, "err_mean": 0.2, "err_std": 0.0},
            {"method": "fixed-pts", "tau": 1.0, "loss_mean": 0.5, "loss_std": 0.0, "err_mean": 0.4, "err_std": 0.0},
            {"method": "adaptive-pts", "tau": None, "loss_mean": 0.7, "loss_std": 0.0, "err_mean": 0.1, "err_std": 0.0},
        ]
        assert "loss is not a reliable criterion" in sweep_table(rows_)
        rows_[0]["err_mean"] = 0.5
        assert "loss is not a reliable criterion" not in sweep_table(rows_)

    def test_small_sweep(self, ini, tmp_path, capsys):
        assert main(["sweep", "--config", str(ini), "--problem", "burgers", "--taus", "0.1,1", "--seeds", "0..1", "--out", str(tmp_path)]) == 0
        lines = (tmp_path / "sweep.csv").read_text().splitlines()
        assert len(lines) == 1 + 3
        assert lines[1].startswith("fixed-pts,0.1,")


def test_console_script():
    out = subprocess.run([sys.executable, "-m", "ptspinn.cli", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.startswith("ptspinn ")
