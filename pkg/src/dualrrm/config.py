"""Experiment configuration: defaults, file I/O, canonical hashing.

A config file is JSON with nested sections mirroring the module configs.
Only the keys being overridden need to appear; everything else keeps its
default.  The canonical serialization (sorted keys, compact separators,
shortest-round-trip floats) defines the config hash embedded in every
artifact, so any field change is visible in the outputs.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, fields, is_dataclass, replace
from pathlib import Path

from .baselines import ItlinqConfig
from .channel import DEFAULT_FADING_RHO, PathlossConfig, TopologyConfig
from .core import RrmProblemConfig
from .errors import ConfigError
from .execution import ExecConfig
from .policy import GnnConfig
from .training import TrainConfig


@dataclass(frozen=True)
class FadingConfig:
    rho: float = DEFAULT_FADING_RHO

    def validate(self) -> None:
        if not (0.0 <= self.rho <= 1.0):
            raise ConfigError("fading rho must lie in [0, 1]")


@dataclass(frozen=True)
class DatasetConfig:
    n_train: int = 256
    n_test: int = 128

    def validate(self) -> None:
        if self.n_train < 0 or self.n_test < 0:
            raise ConfigError("dataset sizes must be >= 0")


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    output_dir: str = "runs/default"
    topology: TopologyConfig = field(default_factory=TopologyConfig)
    fading: FadingConfig = field(default_factory=FadingConfig)
    problem: RrmProblemConfig = field(default_factory=lambda: RrmProblemConfig(m=50))
    gnn: GnnConfig = field(default_factory=GnnConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    execution: ExecConfig = field(default_factory=ExecConfig)
    itlinq: ItlinqConfig = field(default_factory=ItlinqConfig)
    data: DatasetConfig = field(default_factory=DatasetConfig)

    def validate(self) -> "ExperimentConfig":
        cfg = self._synced()
        cfg.topology.validate()
        cfg.fading.validate()
        cfg.gnn.validate()
        cfg.train.validate()
        cfg.execution.validate()
        cfg.itlinq.validate()
        cfg.data.validate()
        return cfg

    def _synced(self) -> "ExperimentConfig":
        """topology.m is authoritative for the user count; the training seed
        inherits the master seed unless set explicitly."""
        cfg = self
        if cfg.problem.m != cfg.topology.m:
            cfg = replace(cfg, problem=replace(cfg.problem, m=cfg.topology.m))
        if cfg.train.seed is None:
            cfg = replace(cfg, train=replace(cfg.train, seed=cfg.seed))
        return cfg

    def with_m(self, m: int) -> "ExperimentConfig":
        return replace(
            self,
            topology=replace(self.topology, m=m),
            problem=replace(self.problem, m=m),
        ).validate()


def _to_jsonable(value):
    if is_dataclass(value) and not isinstance(value, type):
        return {f.name: _to_jsonable(getattr(value, f.name)) for f in fields(value)}
    if isinstance(value, (list, tuple)):
        return [_to_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {k: _to_jsonable(v) for k, v in value.items()}
    return value


def config_to_dict(cfg: ExperimentConfig) -> dict:
    return _to_jsonable(cfg)


def _build_dataclass(cls, data: dict, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"section {path or cls.__name__} must be an object")
    known = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in known:
            raise ConfigError(f"unknown config key {path + key!r}")
        target = _SECTION_TYPES.get((cls, key))
        if target is not None and value is not None:
            value = _build_dataclass(target, value, f"{path}{key}.")
        elif key in _TUPLE_FIELDS.get(cls, ()) and value is not None:
            value = tuple(value)
        kwargs[key] = value
    try:
        return cls(**{**{f.name: getattr(_DEFAULTS[cls], f.name) for f in fields(cls)}, **kwargs})
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


_SECTION_TYPES = {
    (ExperimentConfig, "topology"): TopologyConfig,
    (ExperimentConfig, "fading"): FadingConfig,
    (ExperimentConfig, "problem"): RrmProblemConfig,
    (ExperimentConfig, "gnn"): GnnConfig,
    (ExperimentConfig, "train"): TrainConfig,
    (ExperimentConfig, "execution"): ExecConfig,
    (ExperimentConfig, "itlinq"): ItlinqConfig,
    (ExperimentConfig, "data"): DatasetConfig,
    (TopologyConfig, "pathloss"): PathlossConfig,
}

_TUPLE_FIELDS = {
    TrainConfig: ("mu_dist",),
    ExecConfig: ("mu_init",),
}

_DEFAULTS = {
    ExperimentConfig: ExperimentConfig(),
    TopologyConfig: TopologyConfig(),
    FadingConfig: FadingConfig(),
    RrmProblemConfig: RrmProblemConfig(m=50),
    GnnConfig: GnnConfig(),
    TrainConfig: TrainConfig(),
    ExecConfig: ExecConfig(),
    ItlinqConfig: ItlinqConfig(),
    DatasetConfig: DatasetConfig(),
    PathlossConfig: PathlossConfig(),
}


def config_from_dict(data: dict) -> ExperimentConfig:
    return _build_dataclass(ExperimentConfig, data, "")


def load_config(path: str | Path | None) -> ExperimentConfig:
    """Config from a JSON file, or pure defaults when no path is given."""
    if path is None:
        return ExperimentConfig().validate()
    try:
        with open(path) as f:
            data = json.load(f)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    return config_from_dict(data).validate()


def canonical_json(cfg: ExperimentConfig) -> str:
    return json.dumps(config_to_dict(cfg), sort_keys=True, separators=(",", ":"))


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(canonical_json(cfg).encode()).hexdigest()


def save_config(path: str | Path, cfg: ExperimentConfig) -> None:
    with open(path, "w") as f:
        json.dump(config_to_dict(cfg), f, sort_keys=True, indent=2)
        f.write("\n")
