"""Experiment configuration: dataclasses plus an INI loader with dotted overrides.

File layout mirrors the dataclasses::

    [experiment]
    episodes = 200
    seed = 7

    [env]
    N = 32
    p_t_dbm = 30

    [mdqn]
    hidden = 128, 128, 128

Tuple values use Python literal syntax (parentheses optional); ``none`` maps
to None for optional fields.
"""
from __future__ import annotations

import ast
import configparser
import dataclasses
import types
import typing
from dataclasses import dataclass, field
from typing import Optional

from .ddpg import DdpgConfig
from .env import EnvConfig
from .mdqn import MdqnConfig

BASELINES = ("learned", "random", "no-irs", "fixed-beamforming")
SWEEP_AXES = {
    "none": (),
    "power": (15.0, 20.0, 25.0, 30.0, 35.0, 40.0),
    "elements": (16, 32, 48, 64),
}


@dataclass
class ExperimentConfig:
    env: EnvConfig = field(default_factory=EnvConfig)
    mdqn: MdqnConfig = field(default_factory=MdqnConfig)
    ddpg: DdpgConfig = field(default_factory=DdpgConfig)
    replay_capacity: int = 6000
    episodes: int = 200
    seed: int = 0
    baseline: str = "learned"
    sweep: str = "none"
    sweep_values: Optional[tuple] = None
    n_seeds: int = 5
    eval_episodes: int = 10
    # learning starts once the buffer holds this many transitions (batch size when unset)
    learn_start: Optional[int] = None
    workers: int = 1
    out_dir: Optional[str] = None

    def __post_init__(self):
        if self.episodes < 1:
            raise ValueError("episodes must be >= 1")
        if self.baseline not in BASELINES:
            raise ValueError(f"baseline must be one of {BASELINES}")
        if self.sweep not in SWEEP_AXES:
            raise ValueError(f"sweep must be one of {tuple(SWEEP_AXES)}")
        if self.replay_capacity < 1 or self.n_seeds < 1 or self.eval_episodes < 1:
            raise ValueError("replay_capacity, n_seeds and eval_episodes must be >= 1")
        if self.sweep_values is not None:
            check_sweep_values(self.sweep, self.sweep_values)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def with_env(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, env=dataclasses.replace(self.env, **changes))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def check_sweep_values(axis, values):
    if axis == "power" and any(not 15.0 <= v <= 40.0 for v in values):
        raise ValueError("power sweep values must lie in [15, 40] dBm")
    if axis == "elements" and any(not 16 <= v <= 64 for v in values):
        raise ValueError("element sweep values must lie in [16, 64]")


_SECTIONS = {"env": EnvConfig, "mdqn": MdqnConfig, "ddpg": DdpgConfig}


def _coerce(text: str, hint):
    text = text.strip()
    origin = typing.get_origin(hint)
    args = typing.get_args(hint)
    if origin is typing.Union or origin is types.UnionType:
        if text.lower() in ("none", "null", ""):
            return None
        hint = next(a for a in args if a is not type(None))
        origin = typing.get_origin(hint)
    if hint is bool:
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if hint is int:
        return int(text)
    if hint is float:
        return float(text)
    if hint is str:
        return text
    if hint is tuple or origin is tuple:
        value = ast.literal_eval(text)
        return tuple(value) if isinstance(value, (list, tuple)) else (value,)
    raise TypeError(f"cannot parse into {hint!r}")


def _updated(obj, values: dict):
    hints = typing.get_type_hints(type(obj))
    names = {f.name for f in dataclasses.fields(obj)}
    changes = {}
    for key, text in values.items():
        if key not in names:
            raise KeyError(f"unknown field {key!r} for {type(obj).__name__}")
        changes[key] = _coerce(text, hints[key]) if isinstance(text, str) else text
    return dataclasses.replace(obj, **changes)


def apply_overrides(cfg: ExperimentConfig, overrides) -> ExperimentConfig:
    """Apply ``section.key=value`` / ``key=value`` strings (or a {dotted: value} dict)."""
    items = overrides.items() if isinstance(overrides, dict) else (o.split("=", 1) for o in overrides)
    grouped: dict = {}
    for key, value in items:
        key = key.strip()
        section, _, name = key.rpartition(".")
        grouped.setdefault(section or "experiment", {})[name] = value
    for section, values in grouped.items():
        if section == "experiment":
            cfg = _updated(cfg, values)
        elif section in _SECTIONS:
            cfg = dataclasses.replace(cfg, **{section: _updated(getattr(cfg, section), values)})
        else:
            raise KeyError(f"unknown config section {section!r}")
    return cfg


def config_from_dict(data: dict) -> ExperimentConfig:
    """Inverse of :meth:`ExperimentConfig.to_dict` (e.g. a run manifest's ``config``)."""
    flat = {}
    for key, value in data.items():
        if key in _SECTIONS:
            for name, v in value.items():
                flat[f"{key}.{name}"] = tuple(v) if isinstance(v, list) else v
        else:
            flat[key] = tuple(value) if isinstance(value, list) else value
    return apply_overrides(ExperimentConfig(), flat)


def load_config(path=None, overrides=()) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if path is not None:
        parser = configparser.ConfigParser()
        parser.optionxform = str  # keep M/N/K/C case
        with open(path) as fh:
            parser.read_file(fh)
        flat = {}
        for section in parser.sections():
            if section != "experiment" and section not in _SECTIONS:
                raise KeyError(f"unknown config section {section!r}")
            for key, value in parser.items(section):
                flat[f"{section}.{key}"] = value
        cfg = apply_overrides(cfg, flat)
    return apply_overrides(cfg, list(overrides))
