"""Experiment configuration: JSON schema, loading and bundled presets."""

from __future__ import annotations

import copy
import json
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema

from .data import ColumnKind, ColumnSpec, SplitConfig, load_csv, preprocess
from .joint import JointConfig
from .ssl import CorruptionConfig

_prob = {"type": "number", "minimum": 0, "maximum": 1}
_pos = {"type": "number", "exclusiveMinimum": 0}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "tabncd experiment",
    "type": "object",
    "required": ["dataset"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "seed": {"type": "integer"},
        "runs": {"type": "integer", "minimum": 1},
        "output_dir": {"type": "string"},
        "dataset": {
            "type": "object",
            "required": ["path", "label_column"],
            "additionalProperties": False,
            "properties": {
                "path": {"type": "string"},
                "label_column": {"type": "string"},
                "categorical": {"type": "array", "items": {"type": "string"}},
                "columns": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["name"],
                        "additionalProperties": False,
                        "properties": {
                            "name": {"type": "string"},
                            "kind": {"enum": ["numeric", "categorical"]},
                            "categories": {"type": "array", "items": {"type": "string"}},
                        },
                    },
                },
                "split": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "unknown_classes": {
                            "type": "array",
                            "items": {"type": ["string", "integer"]},
                            "minItems": 2,
                        },
                        "unknown_fraction": {"type": "number", "exclusiveMinimum": 0,
                                             "exclusiveMaximum": 1},
                        "train_fraction": {"type": "number", "exclusiveMinimum": 0,
                                           "exclusiveMaximum": 1},
                        "seed": {"type": "integer"},
                        "drop_constant": {"type": "boolean"},
                        "train_rows": {"type": "integer", "minimum": 1},
                    },
                },
            },
        },
        "ssl": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "p_m": _prob,
                "alpha": {"type": "number", "minimum": 0},
                "epochs": {"type": "integer", "minimum": 0},
                "batch_size": {"type": "integer", "minimum": 2},
                "lr": _pos,
            },
        },
        "joint": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "w1": _prob,
                "w2": _prob,
                "lr_classif": {"type": "number", "minimum": 0},
                "lr_cluster": {"type": "number", "minimum": 0},
                "topk_percent": {"type": "number", "exclusiveMinimum": 0, "maximum": 100},
                "k_neighbors": {"type": "integer", "minimum": 1},
                "epochs": {"type": "integer", "minimum": 0},
                "batch_size": {"type": "integer", "minimum": 2},
                "dropout": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                "activation": {"enum": ["relu", "sigmoid", "identity"]},
                "weight_decay": {"type": "number", "minimum": 0},
            },
        },
        "baseline": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "epochs": {"type": "integer", "minimum": 0},
                "lr": _pos,
                "n_init": {"type": "integer", "minimum": 1},
            },
        },
    },
}


class ConfigError(ValueError):
    pass


@dataclass
class SSLSettings:
    corruption: CorruptionConfig = field(default_factory=CorruptionConfig)
    epochs: int = 30
    batch_size: int = 128
    lr: float = 1e-3


@dataclass
class BaselineSettings:
    epochs: int = 30
    lr: float | None = None  # defaults to the joint classification lr
    n_init: int = 10


@dataclass
class ExperimentConfig:
    name: str
    dataset_path: Path
    label_column: str
    columns: list | None
    split: SplitConfig
    ssl: SSLSettings
    joint: JointConfig
    baseline: BaselineSettings
    runs: int = 10
    seed: int = 0
    output_dir: Path = Path("runs")
    raw: dict = field(default_factory=dict)

    def load_dataset(self):
        raw = load_csv(self.dataset_path, self.columns, self.label_column)
        return preprocess(raw, self.split, name=self.name)

    def with_joint(self, **changes):
        """Copy with some joint-training fields replaced."""
        data = copy.deepcopy(self.raw)
        data.setdefault("joint", {}).update(changes)
        data["dataset"]["path"] = str(self.dataset_path.resolve())
        return from_dict(data)


def validate(data):
    try:
        jsonschema.validate(data, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"invalid config at {where}: {exc.message}") from None


def _columns(ds_block):
    if "columns" in ds_block:
        return [ColumnSpec(c["name"], ColumnKind(c.get("kind", "numeric")),
                           c.get("categories")) for c in ds_block["columns"]]
    return None


def from_dict(data, base_dir="."):
    validate(data)
    ds_block = data["dataset"]
    path = Path(os.path.expandvars(ds_block["path"]))
    if not path.is_absolute():
        path = Path(base_dir) / path
    columns = _columns(ds_block)
    categorical = set(ds_block.get("categorical", []))
    if categorical and columns is None:
        columns = "infer"
    split_block = dict(ds_block.get("split", {}))
    if "unknown_classes" in split_block:
        split_block["unknown_classes"] = [str(c) for c in split_block["unknown_classes"]]
    ssl_block = data.get("ssl", {})
    corruption = CorruptionConfig(
        p_m=ssl_block.get("p_m", 0.30), alpha=ssl_block.get("alpha", 2.0)
    )
    cfg = ExperimentConfig(
        name=data.get("name", path.name.split(".")[0]),
        dataset_path=path,
        label_column=ds_block["label_column"],
        columns=columns,
        split=SplitConfig(**split_block),
        ssl=SSLSettings(corruption, ssl_block.get("epochs", 30), ssl_block.get("batch_size", 128),
                        ssl_block.get("lr", 1e-3)),
        joint=JointConfig(**data.get("joint", {})),
        baseline=BaselineSettings(**data.get("baseline", {})),
        runs=data.get("runs", 10),
        seed=data.get("seed", 0),
        output_dir=Path(data.get("output_dir", "runs")),
        raw=copy.deepcopy(data),
    )
    if columns == "infer":
        cfg.columns = _infer_columns(path, cfg.label_column, categorical)
    return cfg


def _infer_columns(path, label_column, categorical):
    import csv
    import gzip

    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "rt", encoding="utf-8", newline="") as fh:
        header = [h.strip() for h in next(csv.reader(fh))]
    return [ColumnSpec(h, ColumnKind.CATEGORICAL if h in categorical else ColumnKind.NUMERIC)
            for h in header if h != label_column]


def preset_names():
    root = resources.files("tabncd") / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load(path_or_name):
    """Load a config file, or a bundled preset when given a bare preset name."""
    path = Path(path_or_name)
    if not path.exists() and str(path_or_name) in preset_names():
        path = Path(str(resources.files("tabncd") / "presets" / f"{path_or_name}.json"))
    if not path.exists():
        raise ConfigError(f"config {path_or_name!r} not found (presets: {preset_names()})")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from None
    return from_dict(data, base_dir=path.parent)
