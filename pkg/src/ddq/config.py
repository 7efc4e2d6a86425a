"""Experiment configuration: JSON files with a schema version, strict keys and dotted overrides."""

from __future__ import annotations

import copy
import json
from dataclasses import fields
from importlib import resources
from pathlib import Path
from typing import Any, Dict, Sequence

from .assignment import CostWeights
from .simulator.experiments import DEFAULT_P_GRID, parse_threshold
from .simulator.queries import PyramidConfig, QueryNoiseModel
from .simulator.scene import SceneConfig
from .simulator.toy import TrainConfig

SCHEMA_VERSION = 1
PRESETS = ("crowd",)


class ConfigError(ValueError):
    pass


def _section(cls, skip=()):
    d = {}
    for f in fields(cls):
        if f.name not in skip:
            d[f.name] = f.default
    return d


def defaults() -> Dict[str, Any]:
    """The crowd preset, built from the dataclass defaults plus the frozen overrides."""
    noise = _section(QueryNoiseModel)
    noise["rho"] = 1.0
    train = _section(TrainConfig)
    train.update(steps=100, with_dqs=[True, False])
    return {
        "schema_version": SCHEMA_VERSION,
        "scene": _section(SceneConfig, skip=("seed",)),
        "pyramid": {"strides": list(PyramidConfig().strides), "ref_scale": PyramidConfig().ref_scale},
        "noise": noise,
        "dqs": {"thresh": 0.7, "topk": 1000},
        "assign": _section(CostWeights),
        "train": train,
        "sweep": {"query_counts": [30, 100, 300, 1000, 3000, 13343],
                  "thresholds": [0.5, 0.6, 0.7, 0.8, 0.9, "none"]},
        "recall": {"sparse_n": 300, "ks": [100, 200, 300]},
        "gradient": {"p_grid": list(DEFAULT_P_GRID)},
        "eval": {"scene_file": None},
        "seeds": list(range(10)),
    }


def _check_keys(cfg, ref, path=""):
    for k in cfg:
        if k not in ref:
            raise ConfigError(f"unknown config key '{path}{k}'")
        if isinstance(ref[k], dict):
            if not isinstance(cfg[k], dict):
                raise ConfigError(f"config key '{path}{k}' must be an object")
            _check_keys(cfg[k], ref[k], f"{path}{k}.")


def _merge(base, new):
    for k, v in new.items():
        if isinstance(v, dict) and isinstance(base.get(k), dict):
            _merge(base[k], v)
        else:
            base[k] = v
    return base


def load(path) -> Dict[str, Any]:
    """Read a config file; missing keys keep their defaults."""
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e.strerror}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"config {path} is not valid JSON: {e}") from None
    return from_dict(raw)


def from_dict(raw: Dict[str, Any]) -> Dict[str, Any]:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    if raw.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"config schema_version must be {SCHEMA_VERSION}, got {raw.get('schema_version')!r}")
    ref = defaults()
    _check_keys(raw, ref)
    cfg = _merge(ref, copy.deepcopy(raw))
    validate(cfg)
    return cfg


def preset(name: str) -> Dict[str, Any]:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset '{name}', choose from {', '.join(PRESETS)}")
    text = resources.files("ddq").joinpath("configs", f"{name}.json").read_text()
    return from_dict(json.loads(text))


def parse_override(token: str):
    """``a.b=value`` to ``(["a", "b"], value)``; the value is parsed as JSON when possible."""
    key, sep, value = token.partition("=")
    if not sep or not key:
        raise ConfigError(f"malformed override '{token}', expected key=value")
    try:
        parsed = json.loads(value)
    except json.JSONDecodeError:
        parsed = value
    return key.split("."), parsed


def apply_overrides(cfg: Dict[str, Any], tokens: Sequence[str]) -> Dict[str, Any]:
    cfg = copy.deepcopy(cfg)
    for token in tokens:
        keys, value = parse_override(token)
        node = cfg
        for i, k in enumerate(keys):
            if not isinstance(node, dict) or k not in node:
                raise ConfigError(f"unknown config key '{'.'.join(keys[:i + 1])}' in override '{token}'")
            if i == len(keys) - 1:
                if isinstance(node[k], dict):
                    raise ConfigError(f"override '{token}' targets a whole section")
                node[k] = value
            else:
                node = node[k]
    validate(cfg)
    return cfg


def validate(cfg):
    try:
        scene_config(cfg)
        noise_model(cfg)
        pyramid_config(cfg)
        train_config(cfg)
        cost_weights(cfg)
        for t in cfg["sweep"]["thresholds"]:
            parse_threshold(t)
        if cfg["dqs"]["thresh"] is not None:
            parse_threshold(cfg["dqs"]["thresh"])
        if cfg["dqs"]["topk"] is not None and int(cfg["dqs"]["topk"]) < 1:
            raise ValueError("dqs.topk must be >= 1 or null")
        if not cfg["sweep"]["query_counts"] or min(int(c) for c in cfg["sweep"]["query_counts"]) < 1:
            raise ValueError("sweep.query_counts must be positive integers")
        if int(cfg["recall"]["sparse_n"]) < 1 or any(int(k) < 1 for k in cfg["recall"]["ks"]):
            raise ValueError("recall.sparse_n and recall.ks must be positive")
        if any(not 0.0 < float(p) < 1.0 for p in cfg["gradient"]["p_grid"]):
            raise ValueError("gradient.p_grid values must lie in (0, 1)")
        if not cfg["seeds"] or any(isinstance(s, bool) or int(s) != s for s in cfg["seeds"]):
            raise ValueError("seeds must be a non-empty list of integers")
        if not isinstance(cfg["train"]["with_dqs"], list) or not cfg["train"]["with_dqs"]:
            raise ValueError("train.with_dqs must be a non-empty list of booleans")
    except (TypeError, ValueError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"invalid config: {e}") from None


def scene_config(cfg) -> SceneConfig:
    return SceneConfig(**cfg["scene"])


def noise_model(cfg) -> QueryNoiseModel:
    return QueryNoiseModel(**cfg["noise"])


def pyramid_config(cfg) -> PyramidConfig:
    return PyramidConfig(**cfg["pyramid"])


def train_config(cfg) -> TrainConfig:
    return TrainConfig(**{k: v for k, v in cfg["train"].items() if k != "with_dqs"})


def cost_weights(cfg) -> CostWeights:
    return CostWeights(**cfg["assign"])


def dump(cfg) -> str:
    return json.dumps(cfg, indent=2, sort_keys=True) + "\n"
