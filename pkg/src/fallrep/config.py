"""Experiment config: one YAML/JSON tree with a section per stage.

    synth:    SynthConfig fields
    labeling: LabelingConfig fields
    train:    TrainConfig fields, with a nested ``loss`` section (LossConfig)
    eval:     EvalConfig fields plus ``split`` and ``checkpoint`` (best|final)

Dotted overrides (``train.loss.tau=0.1``) are applied on top of the file.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Sequence

import yaml

from .labeling import LabelingConfig
from .losses import LossConfig
from .report import EvalConfig
from .synth import SynthConfig
from .training import TrainConfig


class ConfigError(ValueError):
    """Config validation failure; the message names the offending key path."""


@dataclass(frozen=True)
class EvalSection:
    metrics: EvalConfig = field(default_factory=EvalConfig)
    split: str = "test"
    checkpoint: str = "best"


@dataclass(frozen=True)
class ExperimentConfig:
    synth: SynthConfig = field(default_factory=SynthConfig)
    labeling: LabelingConfig = field(default_factory=LabelingConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalSection = field(default_factory=EvalSection)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["eval"] = {**d["eval"].pop("metrics"), **d["eval"]}
        return _plain(d)


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def _build(cls, data: Any, path: str):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping")
    known = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key, value in data.items():
        where = f"{path}.{key}" if path else key
        if key not in known:
            raise ConfigError(f"unknown config key {where!r}")
        if key == "loss" and cls is TrainConfig:
            value = _build(LossConfig, value, where)
        elif isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


def build_config(tree: dict | None) -> ExperimentConfig:
    tree = dict(tree or {})
    unknown = set(tree) - {"synth", "labeling", "train", "eval"}
    if unknown:
        raise ConfigError(f"unknown config key {sorted(unknown)[0]!r}")
    ev = dict(tree.get("eval") or {})
    section = {k: ev.pop(k) for k in ("split", "checkpoint") if k in ev}
    if section.get("checkpoint", "best") not in ("best", "final"):
        raise ConfigError("eval.checkpoint must be 'best' or 'final'")
    if section.get("split", "test") not in ("train", "val", "test"):
        raise ConfigError("eval.split must be one of train, val, test")
    return ExperimentConfig(
        synth=_build(SynthConfig, tree.get("synth"), "synth"),
        labeling=_build(LabelingConfig, tree.get("labeling"), "labeling"),
        train=_build(TrainConfig, tree.get("train"), "train"),
        eval=EvalSection(metrics=_build(EvalConfig, ev, "eval"), **section),
    )


def apply_overrides(tree: dict, overrides: Sequence[str]) -> dict:
    tree = _plain(dict(tree or {}))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key.path=value")
        key, raw = item.split("=", 1)
        parts = key.strip().split(".")
        node = tree
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {key!r}: {p!r} is not a section")
        node[parts[-1]] = yaml.safe_load(raw)
    return tree


def load_config(path: str | Path | None = None, overrides: Sequence[str] = ()) -> ExperimentConfig:
    tree = {}
    if path is not None:
        try:
            tree = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: not valid YAML/JSON ({exc})") from None
        if not isinstance(tree, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
    return build_config(apply_overrides(tree, overrides))
