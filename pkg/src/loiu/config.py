"""Experiment configuration: YAML files, named presets, field-level validation."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from typing import Optional

import yaml

from .env import EnvConfig
from .maddpg import TrainConfig

SCHEMA_VERSION = 1
POLICIES = ("proposed", "ddpg", "dqn", "random", "all-allocated", "threshold", "tdm")
LEARNED = ("proposed", "ddpg", "dqn")
METRICS = ("LoIU", "AoI", "AoII", "UoI", "AoCI")


class ConfigError(ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid config:\n  " + "\n  ".join(self.problems))


@dataclass
class ExperimentConfig:
    env: EnvConfig = field(default_factory=EnvConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    policies: tuple = ("proposed", "random", "all-allocated")
    seeds: tuple = (0, 1, 2, 3, 4)
    eval_episodes: int = 5
    eval_slots: int = 100
    threshold_zeta: float = 0.1
    output_dir: str = "results"
    workers: int = 1
    schema_version: int = SCHEMA_VERSION

    def validate(self) -> "ExperimentConfig":
        problems = []
        for name, sub in (("env", self.env), ("train", self.train)):
            try:
                sub.validate()
            except ValueError as exc:
                problems += [f"{name}.{p.strip()}" for p in str(exc).split(":", 1)[1].split(";")]
        for p in self.policies:
            if p not in POLICIES:
                problems.append(f"policies: unknown policy {p!r} (known: {', '.join(POLICIES)})")
        if not self.policies:
            problems.append("policies: need at least one")
        if not self.seeds:
            problems.append("seeds: need at least one")
        if len(set(self.seeds)) != len(self.seeds):
            problems.append("seeds: duplicates")
        if self.eval_episodes < 1 or self.eval_slots < 1:
            problems.append("eval_episodes/eval_slots: must be >= 1")
        if not 0 < self.threshold_zeta <= 1:
            problems.append("threshold_zeta: must be in (0, 1]")
        if self.workers < 1:
            problems.append("workers: must be >= 1")
        if self.schema_version != SCHEMA_VERSION:
            problems.append(f"schema_version: expected {SCHEMA_VERSION}, got {self.schema_version}")
        if problems:
            raise ConfigError(problems)
        return self

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        return json.loads(json.dumps(d))     # tuples -> lists

    def digest(self) -> str:
        # output_dir and workers do not affect results
        d = self.to_dict()
        d.pop("output_dir")
        d.pop("workers")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    def replace(self, env=None, train=None, **kw) -> "ExperimentConfig":
        cfg = dataclasses.replace(self, **kw)
        if env:
            cfg.env = dataclasses.replace(cfg.env, **env)
        if train:
            cfg.train = dataclasses.replace(cfg.train, **train)
        return cfg


def _tuplify(v):
    return tuple(_tuplify(x) for x in v) if isinstance(v, list) else v


def _build(cls, data: dict, prefix: str, problems: list):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    problems += [f"{prefix}{k}: unknown field" for k in unknown]
    return {k: _tuplify(v) for k, v in data.items() if k in names}


def from_dict(data: dict, base: Optional[ExperimentConfig] = None) -> ExperimentConfig:
    base = base or ExperimentConfig()
    data = dict(data or {})
    problems: list = []
    env_kw = _build(EnvConfig, data.pop("env", {}) or {}, "env.", problems)
    train_kw = _build(TrainConfig, data.pop("train", {}) or {}, "train.", problems)
    data.pop("preset", None)
    top = _build(ExperimentConfig, data, "", problems)
    if problems:
        raise ConfigError(problems)
    try:
        cfg = base.replace(env=env_kw, train=train_kw, **top)
    except TypeError as exc:
        raise ConfigError([str(exc)]) from exc
    return cfg.validate()


# Reference parameter table at full training scale.
PRESETS = {
    "paper-table-3": dict(
        env=dict(n_robots=5, n_rbs=4, n_collab=4, sigma_range=(0.001, 10.0), z_range=(0.2, 15.0),
                 deadline_range=(0.002, 0.1), alpha_bytes=(40.0, 120.0)),
        train=dict(batch_size=1000, buffer_capacity=1_000_000, episodes=150, slots_per_episode=100),
    ),
    # desk-scale budget on the same parameter table
    "desk": dict(train=dict(batch_size=64, buffer_capacity=100_000, episodes=150, slots_per_episode=100)),
    # metric comparison setting
    "table-4": dict(
        env=dict(n_robots=15, n_rbs=4, n_collab=4, z_range=(1.0, 5.0), deadline_range=(0.002, 0.1)),
        policies=("proposed", "ddpg", "dqn", "random", "all-allocated", "threshold", "tdm"),
    ),
    # seconds-scale smoke run
    "smoke": dict(train=dict(batch_size=16, episodes=3, slots_per_episode=20), seeds=(0, 1),
                  eval_episodes=1, eval_slots=20),
}


def preset(name: str) -> ExperimentConfig:
    if name not in PRESETS:
        raise ConfigError([f"preset: unknown preset {name!r} (known: {', '.join(PRESETS)})"])
    return from_dict(PRESETS[name])


def load(path=None, preset_name: Optional[str] = None) -> ExperimentConfig:
    """Preset first, then the file's fields on top.  A file may name its own ``preset``."""
    data = {}
    if path:
        with open(path) as fh:
            try:
                data = yaml.safe_load(fh) or {}
            except yaml.YAMLError as exc:
                raise ConfigError([f"{path}: not valid YAML ({exc})"]) from exc
        if not isinstance(data, dict):
            raise ConfigError([f"{path}: top level must be a mapping"])
    name = preset_name or data.get("preset")
    base = preset(name) if name else ExperimentConfig()
    return from_dict(data, base)


def dump(cfg: ExperimentConfig, path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(cfg.to_dict(), fh, sort_keys=True)
