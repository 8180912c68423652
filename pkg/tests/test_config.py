import json

import pytest

from tabncd import config
from tabncd.config import ConfigError


def test_valid_config(blob_config):
    cfg = config.from_dict(blob_config)
    assert cfg.runs == 2 and cfg.joint.topk_percent == 10
    assert cfg.ssl.corruption.p_m == 0.30 and cfg.ssl.corruption.alpha == 2.0
    ds = cfg.load_dataset()
    assert ds.n_known + ds.n_unknown == 6


@pytest.mark.parametrize("patch", [
    {"ssl": {"p_m": 1.5}},
    {"joint": {"w1": 2}},
    {"runs": 0},
    {"joint": {"topk_percent": 0}},
    {"bogus": 1},
    {"dataset": {"label_column": "target"}},
])
def test_schema_rejections(blob_config, patch):
    data = json.loads(json.dumps(blob_config))
    for key, val in patch.items():
        if isinstance(val, dict) and isinstance(data.get(key), dict) and key != "dataset":
            data[key].update(val)
        else:
            data[key] = val
    with pytest.raises(ConfigError, match="invalid config"):
        config.from_dict(data)


def test_presets_load():
    names = config.preset_names()
    assert {"satimage", "pendigits", "letter", "mnist5k", "human"} <= set(names)
    cfg = config.load("satimage")
    assert cfg.split.unknown_classes == ["1", "2", "4"]
    assert cfg.dataset_path.exists()


def test_env_var_expansion(tmp_path, monkeypatch, blob_config, blob_csv):
    monkeypatch.setenv("BLOB_DIR", str(blob_csv.parent))
    blob_config["dataset"]["path"] = "${BLOB_DIR}/" + blob_csv.name
    path = tmp_path / "c.json"
    path.write_text(json.dumps(blob_config))
    assert config.load(path).dataset_path == blob_csv


def test_missing_and_malformed(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        config.load("no-such-preset")
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    with pytest.raises(ConfigError, match="valid JSON"):
        config.load(bad)


def test_with_joint_copies(blob_config):
    cfg = config.from_dict(blob_config)
    other = cfg.with_joint(w1=0.3)
    assert other.joint.w1 == 0.3 and cfg.joint.w1 == 0.8
    assert other.joint.topk_percent == cfg.joint.topk_percent
