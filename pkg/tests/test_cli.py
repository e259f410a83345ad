import json
import subprocess
import sys

import pytest

from uav_aoi.cli import main
from uav_aoi.config import tiny_config


@pytest.fixture
def tiny_scenario(tmp_path):
    path = tmp_path / "tiny.json"
    tiny_config().to_json(path)
    return path


def test_train_eval_render_round_trip(tmp_path, tiny_scenario, capsys):
    out = tmp_path / "run"
    assert main(["train", "--scenario", str(tiny_scenario), "--mode", "centr-obj2", "--episodes", "3", "--seed", "1", "--out", str(out)]) == 0
    assert (out / "episodes.csv").exists()
    assert (out / "checkpoints" / "agent0_actor.json").exists()
    assert main(["eval", "--scenario", str(tiny_scenario), "--out", str(out), "--episodes", "2"]) == 0
    assert "objective1=" in capsys.readouterr().out
    assert main(["render", "--out", str(out)]) == 0
    assert list(out.rglob("*.svg"))


def test_oracle_command(tmp_path, tiny_scenario, capsys):
    assert main(["oracle", "--scenario", str(tiny_scenario), "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "oracle.json").read_text())
    assert set(doc) == {"obj1_min", "obj2_max"}
    assert doc["obj2_max"]["value"] > 0


def test_experiment_command(tmp_path):
    assert main(["experiment", "--desk-scale", "--episodes", "2", "--seed", "0", "--mode", "dec", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "summary.csv").exists()


@pytest.mark.parametrize(
    "argv",
    [
        ["train", "--episodes", "1"],
        ["train", "--scenario", "/nonexistent.json"],
        ["eval", "--desk-scale", "--out", "/nonexistent-dir"],
        ["oracle", "--desk-scale"],
        ["render", "--out", "/nonexistent-dir", "--desk-scale"],
    ],
)
def test_errors_exit_nonzero_with_diagnostic(argv, capsys):
    assert main(argv) != 0
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and "error:" in err[0]


def test_console_entry_point_runs():
    res = subprocess.run([sys.executable, "-m", "uav_aoi.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for sub in ("train", "eval", "oracle", "experiment", "render"):
        assert sub in res.stdout
    bad = subprocess.run([sys.executable, "-m", "uav_aoi.cli", "train", "--mode", "nope"], capture_output=True, text=True)
    assert bad.returncode != 0 and bad.stderr
