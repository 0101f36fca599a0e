import json
import os

import numpy as np
import pytest

from nodereg.config import (
    ConfigError, ExperimentConfig, GenConfig, from_dict, load_config, to_dict, unwrap_manifest,
)
from nodereg.io import atomic_write_csv, atomic_write_json, json_safe, write_manifest


def test_defaults_round_trip():
    cfg = ExperimentConfig()
    assert from_dict(ExperimentConfig, json.loads(json.dumps(to_dict(cfg)))) == cfg


@pytest.mark.parametrize("doc,match", [
    ({"epoch": 3}, "unknown key"),
    ({"model": {"hidden": 3}}, r"config\.model: unknown key"),
    ({"epochs": "10"}, "integer"),
    ({"epochs": 1.5}, "integer"),
    ({"model": {"bias": 1}}, "true/false"),
    ({"seeds": [True]}, "seeds"),
    ({"loss": {"variant": "ce+focal"}}, "unknown loss variant"),
    ({"loss": {"nodereg": {"gamma": 0}}}, "gamma"),
    ({"imbalance": {"ratios": [0.0]}}, "ratios"),
    ({"snr": {"test_points": 100}}, "test_points"),
    ({"selection": "best"}, "selection"),
    ({"dataset": {"kind": "file"}}, "path"),
    ([], "object"),
])
def test_validation_errors(doc, match):
    with pytest.raises(ConfigError, match=match):
        cfg = from_dict(ExperimentConfig, doc)
        cfg.validate()


def test_int_accepted_for_float():
    cfg = from_dict(ExperimentConfig, {"optim": {"lr": 1}})
    assert cfg.optim.lr == 1.0 and isinstance(cfg.optim.lr, float)


def test_gen_config_validation():
    with pytest.raises(ConfigError, match="snm_sbm"):
        from_dict(GenConfig, {"generator": "snm_sbm"})
    g = from_dict(GenConfig, {"generator": "snm_sbm", "snm_sbm": {
        "n": 10, "p": 0.5, "s": 0.1, "mu": [1.0], "sigma_p": 1.0}})
    assert g.snm_sbm.d == 1
    with pytest.raises(ConfigError, match="edge probabilities"):
        from_dict(GenConfig, {"snm_sbm": {"n": 10, "p": 2.0, "s": 0.1, "mu": [1.0], "sigma_p": 1.0}})


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{\n  \"epochs\": ,\n}")
    with pytest.raises(ConfigError, match="line 2"):
        load_config(bad)


def test_manifest_is_accepted_as_config(tmp_path):
    cfg = ExperimentConfig(epochs=7)
    write_manifest(tmp_path, "train", to_dict(cfg), [0], ["checkpoint.json"])
    assert load_config(tmp_path / "manifest.json") == cfg
    assert unwrap_manifest({"epochs": 3}) == {"epochs": 3}


def test_manifest_content(tmp_path):
    path = write_manifest(tmp_path, "ood", {"a": 1}, [3, 4], ["b.csv", "a.json"], {"x": "y"})
    doc = json.loads(path.read_text())
    assert doc["command"] == "ood" and doc["seeds"] == [3, 4]
    assert doc["outputs"] == ["a.json", "b.csv"] and doc["inputs"] == {"x": "y"}
    assert {"nodereg", "python", "numpy", "kernel_backend"} <= set(doc["versions"])


def test_json_safe():
    doc = json_safe({"a": np.float64(np.nan), "b": [np.int64(3), np.inf], 1: np.bool_(True),
                     "c": (1.5,)})
    assert doc == {"a": None, "b": [3, None], "1": True, "c": [1.5]}


def test_atomic_writes_leave_no_temp_files(tmp_path):
    atomic_write_json(tmp_path / "a.json", {"x": float("nan")})
    atomic_write_csv(tmp_path / "b.csv", ["x", "y"], [(0.1, "s"), (np.float64(2.0), np.int64(4))])
    assert sorted(os.listdir(tmp_path)) == ["a.json", "b.csv"]
    assert json.loads((tmp_path / "a.json").read_text()) == {"x": None}
    assert (tmp_path / "b.csv").read_text() == "x,y\n0.1,s\n2.0,4\n"


def test_atomic_write_failure_keeps_old_file(tmp_path, monkeypatch):
    target = tmp_path / "a.json"
    atomic_write_json(target, {"v": 1})

    def broken_rename(src, dst):
        raise OSError("disk full")

    monkeypatch.setattr(os, "replace", broken_rename)
    with pytest.raises(OSError):
        atomic_write_json(target, {"v": 2})
    assert json.loads(target.read_text()) == {"v": 1}
    assert os.listdir(tmp_path) == ["a.json"]
