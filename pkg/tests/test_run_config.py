import json

import pytest
from pydantic import ValidationError

from fgel.models.errors import ConfigError
from fgel.models.run_config import RunConfig, load_run_config


def test_defaults():
    cfg = RunConfig()
    assert cfg.sizes == [256]
    assert cfg.f0_names == ["sin"]
    assert cfg.estimator_names(["lsq"]) == ["lsq"]
    assert cfg.to_dict()["seed"] == 0


def test_lambda_alias():
    cfg = RunConfig.model_validate({"lambda": 0.1, "divergence": "kl"})
    assert cfg.lam == 0.1
    assert cfg.to_dict()["lambda"] == 0.1
    assert "lam" not in cfg.to_dict()


def test_estimator_precedence():
    assert RunConfig(estimator="mmr").estimator_names(["lsq"]) == ["mmr"]
    assert RunConfig(estimator="mmr", estimators=["cue", "owgmm"]).estimator_names(["lsq"]) == ["cue", "owgmm"]


def test_list_valued_grid_keys():
    cfg = RunConfig(n=[32, 64], f0=["abs", "step"])
    assert cfg.sizes == [32, 64]
    assert cfg.f0_names == ["abs", "step"]


@pytest.mark.parametrize("payload", [
    {"estimator": "ridge"},
    {"estimators": []},
    {"estimators": ["lsq", "kernel_fgel_hellinger"]},
    {"divergence": "hellinger"},
    {"divergences": ["chi2", "tv"]},
    {"lambda": 0.0},
    {"lambda_grid": [0.1, -1.0]},
    {"n": 1},
    {"n": [64, 1]},
    {"f0": ["sin", "cos"]},
    {"experiment": "bootstrap"},
    {"net_widths": [20, 0]},
    {"noise": "laplace"},
    {"unknown_key": 1},
])
def test_rejected_payloads(payload):
    with pytest.raises(ValidationError):
        RunConfig.model_validate(payload)


def test_load_run_config(write_config):
    cfg = load_run_config(write_config({"experiment": "iv", "estimators": ["lsq"], "f0": "abs", "seeds": 3}))
    assert cfg.experiment == "iv"
    assert cfg.seeds == 3


def test_load_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_run_config(tmp_path / "missing.json")


def test_load_invalid_json(tmp_path):
    path = tmp_path / "config.json"
    path.write_text("{not json", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_run_config(path)


def test_load_non_object(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps([1, 2]), encoding="utf-8")
    with pytest.raises(ConfigError):
        load_run_config(path)


def test_load_validation_error(write_config):
    with pytest.raises(ValidationError):
        load_run_config(write_config({"estimator": "ridge"}))
