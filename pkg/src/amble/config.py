"""One structured config file (JSON, versioned) covering every module.

``default_config()`` is the source of truth for defaults; the shipped
``configs/default.json`` is its exact serialization.  Loading validates field
names and value domains and raises ConfigError (CLI exit code 2) on any
problem before compute starts.

Planar-task note: the default file zeroes the lateral and yaw command-reward
weights because those velocities are identically zero in the planar model,
which would otherwise pin their tracking terms at their maxima.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field, fields
from typing import Any

from .amp import AmpConfig
from .errors import ConfigError
from .gait import GaitClock
from .rewards import RewardWeights
from .sim.env import CommandRanges, SimConfig
from .sim.randomize import RandomizationRanges

CONFIG_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class PpoConfig:
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_ratio: float = 0.2
    epochs: int = 5
    minibatch_size: int = 512
    policy_lr: float = 3e-4
    value_lr: float = 3e-4
    entropy_coef: float = 1e-3
    value_loss_coef: float = 0.5
    hidden: tuple[int, ...] = (128, 128)
    init_log_std: float = -1.0
    log_std_bounds: tuple[float, float] = (-4.0, 1.0)

    def __post_init__(self):
        if not (0.0 <= self.gamma <= 1.0):
            raise ConfigError("gamma must lie in [0, 1]")
        if not (0.0 <= self.gae_lambda <= 1.0):
            raise ConfigError("gae_lambda must lie in [0, 1]")
        if self.clip_ratio <= 0.0:
            raise ConfigError("clip_ratio must be > 0")
        if self.epochs < 1 or self.minibatch_size < 1:
            raise ConfigError("epochs and minibatch_size must be >= 1")


@dataclass(frozen=True)
class ClockConfig:
    period: float = 0.7
    swing_ratio: float = 0.45
    kappa: float = 50.0
    theta_left: float = 0.0
    theta_right: float = 0.5

    def template(self) -> GaitClock:
        return GaitClock(phase=0.0, period=self.period,
                         swing_ratio=self.swing_ratio,
                         theta_left=self.theta_left,
                         theta_right=self.theta_right, kappa=self.kappa)


@dataclass(frozen=True)
class ClipsConfig:
    source: str = "synthetic"            # "synthetic" | "files"
    files: tuple[str, ...] = ()
    weights: tuple[float, ...] = ()

    def __post_init__(self):
        if self.source not in ("synthetic", "files"):
            raise ConfigError("clips.source must be 'synthetic' or 'files'")
        if self.source == "files" and not self.files:
            raise ConfigError("clips.source is 'files' but no files listed")


@dataclass(frozen=True)
class TrainConfig:
    schema_version: int = CONFIG_SCHEMA_VERSION
    seed: int = 0
    iterations: int = 600
    n_envs: int = 64
    horizon: int = 24                    # control steps per env per iteration
    checkpoint_every: int = 200
    log_rewards_env: int = -1            # >= 0 streams that env's RewardReport rows
    obs_lin_vel_noise: float = 0.05      # additive observation noise half-width
    model_file: str = ""                 # empty -> built-in planar biped
    sim: SimConfig = field(default_factory=SimConfig)
    randomization: RandomizationRanges = field(default_factory=RandomizationRanges)
    commands: CommandRanges = field(default_factory=CommandRanges)
    clock: ClockConfig = field(default_factory=ClockConfig)
    rewards: RewardWeights = field(default_factory=RewardWeights)
    amp: AmpConfig = field(default_factory=AmpConfig)
    ppo: PpoConfig = field(default_factory=PpoConfig)
    clips: ClipsConfig = field(default_factory=ClipsConfig)

    def __post_init__(self):
        if self.schema_version != CONFIG_SCHEMA_VERSION:
            raise ConfigError(f"unsupported config schema_version "
                              f"{self.schema_version}")
        if self.iterations < 0 or self.n_envs < 1 or self.horizon < 1:
            raise ConfigError("iterations must be >= 0; n_envs, horizon >= 1")


def default_config() -> TrainConfig:
    # planar task: lateral/yaw velocities are identically zero, so their
    # command-tracking weights are disabled in the default file; the swing
    # foot-speed reward is saturated at 1 m/s so fast legit swings earn it in
    # full but leg-flailing cannot milk its quadratic growth; command tracking
    # carries a full weight of 1.0 so the velocity task competes with style
    return TrainConfig(iterations=800,
                       rewards=RewardWeights(command_weight=(1.0, 0.0, 0.0),
                                             foot_speed_cap=1.0,
                                             w_command=1.0))


_SECTIONS = {
    "sim": SimConfig,
    "randomization": RandomizationRanges,
    "commands": CommandRanges,
    "clock": ClockConfig,
    "rewards": RewardWeights,
    "amp": AmpConfig,
    "ppo": PpoConfig,
    "clips": ClipsConfig,
}


def _tuplify(value: Any) -> Any:
    if isinstance(value, list):
        return tuple(_tuplify(v) for v in value)
    return value


def _coerce(value: Any, target_type: Any, name: str) -> Any:
    # dataclass field types are strings under `from __future__ import annotations`
    t = target_type if isinstance(target_type, str) else getattr(target_type, "__name__", "")
    if t.startswith("float"):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{name}: expected a number")
        return float(value)
    if t.startswith("int"):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{name}: expected an integer")
        return value
    if t.startswith("bool"):
        if not isinstance(value, bool):
            raise ConfigError(f"{name}: expected true/false")
        return value
    if t.startswith("str"):
        if not isinstance(value, str):
            raise ConfigError(f"{name}: expected a string")
        return value
    if t.startswith("tuple"):
        if not isinstance(value, list):
            raise ConfigError(f"{name}: expected an array")
        return _tuplify(value)
    raise ConfigError(f"{name}: unsupported value {value!r}")


def _section_from_dict(cls, data: dict, section: str):
    if not isinstance(data, dict):
        raise ConfigError(f"section {section!r} must be an object")
    known = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in known:
            raise ConfigError(f"unknown field {section}.{key}")
        kwargs[key] = _coerce(value, known[key].type, f"{section}.{key}")
    try:
        return cls(**kwargs)
    except (TypeError, ValueError, ConfigError) as exc:
        raise ConfigError(f"section {section!r}: {exc}") from exc


def config_from_dict(data: dict) -> TrainConfig:
    if not isinstance(data, dict):
        raise ConfigError("config root must be an object")
    top_fields = {f.name: f for f in fields(TrainConfig)}
    kwargs: dict[str, Any] = {}
    for key, value in data.items():
        if key not in top_fields:
            raise ConfigError(f"unknown config field {key!r}")
        if key in _SECTIONS:
            kwargs[key] = _section_from_dict(_SECTIONS[key], value, key)
        else:
            kwargs[key] = _coerce(value, top_fields[key].type, key)
    try:
        return TrainConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _to_jsonable(obj: Any) -> Any:
    if dataclasses.is_dataclass(obj):
        return {f.name: _to_jsonable(getattr(obj, f.name))
                for f in fields(obj)}
    if isinstance(obj, tuple):
        return [_to_jsonable(v) for v in obj]
    return obj


def config_to_dict(cfg: TrainConfig) -> dict:
    return _to_jsonable(cfg)


def load_config(path) -> TrainConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from exc
    return config_from_dict(data)


def save_config(cfg: TrainConfig, path) -> None:
    with open(path, "w") as fh:
        json.dump(config_to_dict(cfg), fh, indent=2)
        fh.write("\n")
