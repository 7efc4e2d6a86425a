import json
from importlib import resources
from pathlib import Path

import pytest

from ddq import cli, config


def test_packaged_preset_equals_defaults():
    text = resources.files("ddq").joinpath("configs", "crowd.json").read_text()
    assert json.loads(text) == config.defaults()
    assert config.preset("crowd") == config.defaults()


def test_parse_gradient_demo():
    rc = cli.parse_args(["gradient-demo", "--out", "g.csv"])
    assert rc.command == "gradient-demo" and rc.output == Path("g.csv")
    assert rc.seeds == config.defaults()["seeds"]
    assert rc.sidecar == Path("g.json")


def test_parse_override_from_config_file(tmp_path):
    p = tmp_path / "crowd.json"
    p.write_text(config.dump(config.defaults()))
    rc = cli.parse_args(["threshold-sweep", "--config", str(p), "--set", "dqs.thresh=0.8"])
    assert rc.config["dqs"]["thresh"] == 0.8


def test_override_value_parsing():
    cfg = config.apply_overrides(config.defaults(), ["sweep.thresholds=[0.6,\"none\"]", "eval.scene_file=x.json"])
    assert cfg["sweep"]["thresholds"] == [0.6, "none"]
    assert cfg["eval"]["scene_file"] == "x.json"


@pytest.mark.parametrize("argv", [
    ["frobnicate"],
    ["recall", "--set", "dqs.nope=1"],
    ["recall", "--set", "novalue"],
    ["recall", "--set", "dqs=1"],
    ["recall", "--set", "dqs.thresh=1.7"],
    ["recall", "--config", "/does/not/exist.json"],
    ["recall", "--seeds", "3-1"],
    ["recall", "--preset", "nope"],
    ["eval", "--set", "eval.scene_file=/missing.json"],
    [],
])
def test_usage_errors_exit_2(argv, capsys):
    assert cli.main(argv) == 2
    assert "error" in capsys.readouterr().err


def test_unknown_key_in_file_is_error(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"schema_version": 1, "scene": {"n_objects": 5, "colour": "red"}}))
    with pytest.raises(cli.UsageError, match="scene.colour"):
        cli.parse_args(["recall", "--config", str(p)])
    p.write_text(json.dumps({"schema_version": 2}))
    with pytest.raises(cli.UsageError, match="schema_version"):
        cli.parse_args(["recall", "--config", str(p)])


def test_partial_config_file_keeps_defaults(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"schema_version": 1, "noise": {"rho": 0.5}}))
    rc = cli.parse_args(["recall", "--config", str(p)])
    assert rc.config["noise"]["rho"] == 0.5
    assert rc.config["scene"] == config.defaults()["scene"]


def test_seed_lists():
    assert cli.parse_seeds("0-3,7") == [0, 1, 2, 3, 7]
    with pytest.raises(cli.UsageError):
        cli.parse_seeds("a")


def test_gradient_demo_csv_and_sidecar_roundtrip(tmp_path):
    out = tmp_path / "g.csv"
    assert cli.main(["gradient-demo", "--out", str(out)]) == 0
    lines = out.read_bytes().split(b"\n")
    assert lines[0] == b"p,alpha,fd_alpha,regime"
    assert len(lines) == 99 + 2 and lines[-1] == b""
    out2 = tmp_path / "g2.csv"
    assert cli.main(["gradient-demo", "--config", str(tmp_path / "g.json"), "--out", str(out2)]) == 0
    assert out.read_bytes() == out2.read_bytes()


def test_threshold_sweep_rows_per_threshold(tmp_path):
    out = tmp_path / "t.csv"
    argv = ["threshold-sweep", "--out", str(out), "--seeds", "0", "--set", "train.steps=2",
            "--set", "train.n_scenes=1", "--set", "scene.n_objects=4"]
    assert cli.main(argv) == 0
    rows = out.read_text().splitlines()
    assert [r.split(",")[0] for r in rows[1:]] == ["0.5", "0.6", "0.7", "0.8", "0.9", "none"]


def test_experiment_failure_exit_1(tmp_path, capsys):
    out = tmp_path / "r.csv"
    argv = ["recall", "--out", str(out), "--seeds", "0", "--set", "scene.crowding=0.9",
            "--set", "scene.max_retries=1", "--set", "scene.tolerance=0.001"]
    assert cli.main(argv) == 1
    assert "ddq.simulator.scene.SceneGenerationError" in capsys.readouterr().err
    assert not out.exists()


def test_train_toy_writes_curve(tmp_path):
    out = tmp_path / "t.csv"
    argv = ["train-toy", "--out", str(out), "--seeds", "0", "--set", "train.steps=2",
            "--set", "scene.n_objects=4", "--set", "train.with_dqs=[true]"]
    assert cli.main(argv) == 0
    assert (tmp_path / "t.curve.csv").read_text().startswith("seed,dqs,step,loss,recall,precision\n")
