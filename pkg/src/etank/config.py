"""Experiment configuration: one versioned JSON file drives every command.

The file holds four blocks (sac, pendulum, wrapper, force_field) plus run
metadata.  Infinite tank capacity is written as the JSON literal Infinity
or the string "inf"; both parse.  CLI flags override file values, and the
resolved config's content hash lands in the run manifest so results stay
traceable to their exact inputs.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .dynamics import PendulumParams
from .env import PendulumEnv
from .passivize import (
    ExtendedStateWrapper,
    ExtendedTerminationWrapper,
    ForceField,
    ForceFieldWrapper,
    InferenceTankWrapper,
)
from .sac import SacConfig
from .tank import DEFAULT_GATE_EPSILON

__all__ = [
    "CONFIG_VERSION",
    "WrapperSpec",
    "ForceFieldSpec",
    "ExperimentConfig",
    "load_config",
    "save_config",
    "config_to_dict",
    "config_hash",
    "build_env",
]

CONFIG_VERSION = 1

WRAPPER_KINDS = ("none", "inference_tank", "extended_termination", "extended_state")
FIELD_PROFILES = ("none", "constant", "velocity_aligned")


def _as_capacity(value) -> float:
    if isinstance(value, str):
        if value.lower() in ("inf", "infinity"):
            return math.inf
        raise ValueError(f"capacity string must be 'inf', got {value!r}")
    return float(value)


@dataclass
class WrapperSpec:
    """Which passivization scheme to put around the env, if any.

    kind "none" still wraps an infinite logging tank so every run reports
    episode energy; it is behaviorally identical to the bare env.
    """

    kind: str = "none"
    capacity: float = math.inf  # J
    epsilon: float = DEFAULT_GATE_EPSILON

    def __post_init__(self):
        if self.kind not in WRAPPER_KINDS:
            raise ValueError(f"wrapper kind must be one of {WRAPPER_KINDS}, got {self.kind!r}")
        self.capacity = _as_capacity(self.capacity)
        if math.isnan(self.capacity) or self.capacity < 0.0:
            raise ValueError("wrapper capacity must be >= 0")
        if self.kind != "none" and self.kind != "inference_tank" and math.isinf(self.capacity):
            raise ValueError(f"{self.kind} needs a finite capacity")


@dataclass
class ForceFieldSpec:
    profile: str = "none"
    magnitude: float = 0.0  # N*m

    def __post_init__(self):
        if self.profile not in FIELD_PROFILES:
            raise ValueError(
                f"force field profile must be one of {FIELD_PROFILES}, got {self.profile!r}"
            )
        self.magnitude = float(self.magnitude)
        if not math.isfinite(self.magnitude):
            raise ValueError("force field magnitude must be finite")


@dataclass
class ExperimentConfig:
    name: str = "run"
    config_version: int = CONFIG_VERSION
    seeds: tuple = (0, 1, 2, 3, 4)
    eval_episodes: int = 100
    sac: SacConfig = field(default_factory=SacConfig)
    pendulum: PendulumParams = field(default_factory=PendulumParams)
    wrapper: WrapperSpec = field(default_factory=WrapperSpec)
    force_field: ForceFieldSpec = field(default_factory=ForceFieldSpec)

    def __post_init__(self):
        if self.config_version != CONFIG_VERSION:
            raise ValueError(
                f"unsupported config_version {self.config_version}; this build reads {CONFIG_VERSION}"
            )
        if isinstance(self.seeds, list):
            self.seeds = tuple(int(s) for s in self.seeds)
        if not self.seeds:
            raise ValueError("need at least one seed")
        if self.eval_episodes < 1:
            raise ValueError("eval_episodes must be >= 1")


def config_to_dict(cfg: ExperimentConfig) -> dict:
    d = dataclasses.asdict(cfg)
    d["seeds"] = list(cfg.seeds)
    d["sac"]["hidden_sizes"] = list(cfg.sac.hidden_sizes)
    return d


def _build_section(cls, data: dict, section: str):
    if not isinstance(data, dict):
        raise ValueError(f"config section {section!r} must be an object")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown keys in config section {section!r}: {sorted(unknown)}")
    return cls(**data)


def config_from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ValueError("config root must be a JSON object")
    data = dict(data)
    sections = {
        "sac": SacConfig,
        "pendulum": PendulumParams,
        "wrapper": WrapperSpec,
        "force_field": ForceFieldSpec,
    }
    kwargs = {}
    for key, cls in sections.items():
        if key in data:
            kwargs[key] = _build_section(cls, data.pop(key), key)
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown top-level config keys: {sorted(unknown)}")
    kwargs.update(data)
    return ExperimentConfig(**kwargs)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ValueError(f"config file {path} does not exist") from None
    except json.JSONDecodeError as exc:
        raise ValueError(f"config file {path} is not valid JSON: {exc}") from None
    return config_from_dict(raw)


def save_config(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(json.dumps(config_to_dict(cfg), indent=2, sort_keys=True) + "\n")


def config_hash(cfg: ExperimentConfig) -> str:
    """Content hash of the resolved config, first 16 hex chars of sha256."""
    canonical = json.dumps(config_to_dict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def build_env(cfg: ExperimentConfig, seed=None):
    """Assemble plant + wrapper + force field per the config.

    The tank wrapper sits inside the force field wrapper, so disturbance
    torque reaches the plant without ever touching the energy ledger.
    """
    env = PendulumEnv(cfg.pendulum, max_steps=cfg.sac.steps_per_trajectory, seed=seed)
    w = cfg.wrapper
    if w.kind == "none":
        wrapped = InferenceTankWrapper(env, math.inf, w.epsilon)
    elif w.kind == "inference_tank":
        wrapped = InferenceTankWrapper(env, w.capacity, w.epsilon)
    elif w.kind == "extended_termination":
        wrapped = ExtendedTerminationWrapper(env, w.capacity, w.epsilon)
    else:
        wrapped = ExtendedStateWrapper(env, w.capacity, w.epsilon)
    if cfg.force_field.profile != "none":
        wrapped = ForceFieldWrapper(
            wrapped, ForceField(cfg.force_field.profile, cfg.force_field.magnitude)
        )
    return wrapped
