"""Environment registry and configuration loading.

Each task ships a bundled default config under ``envs/data/``; a user
config file (JSON) is validated and merged over the defaults, with
unknown fields rejected.  The field schema is documented in
docs/FORMATS.md.
"""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

from ..errors import ConfigError
from .base import Env, EnvSpec, StepOutcome, env_reset
from .dst import DeepSeaTreasure, dst_step
from .energy import EnergyState, EnergyStorage, energy_step
from .fruit_tree import FruitTree, ft_step
from .resource import ResourceGathering, rg_step

ENV_NAMES = ("dst", "ft", "rg", "energy")

_CLASSES = {
    "dst": DeepSeaTreasure,
    "ft": FruitTree,
    "rg": ResourceGathering,
    "energy": EnergyStorage,
}

_SCHEMAS: dict[str, dict[str, type | tuple]] = {
    "dst": {
        "rows": int,
        "cols": int,
        "treasures": list,
        "max_episode_len": int,
        "segment_len": int,
        "reference_gamma": float,
    },
    "ft": {
        "depth": int,
        "leaf_seed": int,
        "max_episode_len": int,
        "segment_len": int,
    },
    "rg": {
        "rows": int,
        "cols": int,
        "home": list,
        "gold": list,
        "gem": list,
        "enemies": list,
        "death_prob": float,
        "max_episode_len": int,
        "segment_len": int,
    },
    "energy": {
        "storage_max": float,
        "initial_storage": float,
        "action_levels": list,
        "renewable": dict,
        "demand": dict,
        "price": dict,
        "max_episode_len": int,
        "segment_len": int,
    },
}


def default_config(name: str) -> dict:
    """The bundled defaults for a task."""
    if name not in ENV_NAMES:
        raise ConfigError(f"unknown environment {name!r}; choose from {ENV_NAMES}")
    text = resources.files("prefmorl.envs").joinpath(f"data/{name}.json").read_text()
    return json.loads(text)


def validate_env_config(name: str, config: dict) -> dict:
    """Type-check config fields against the schema for ``name``."""
    schema = _SCHEMAS[name]
    for key, value in config.items():
        if key not in schema:
            raise ConfigError(f"unknown {name} config field {key!r}")
        expected = schema[key]
        if expected is float:
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                raise ConfigError(f"{name}.{key} must be a number, got {value!r}")
        elif not isinstance(value, expected):
            raise ConfigError(
                f"{name}.{key} must be {expected.__name__}, got {type(value).__name__}"
            )
    return config


def make_env(name: str, config_path: str | Path | None = None, overrides: dict | None = None) -> Env:
    """Instantiate a task from bundled defaults plus optional overrides."""
    config = default_config(name)
    if config_path is not None:
        try:
            user = json.loads(Path(config_path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed config file {config_path}: {exc}") from exc
        if not isinstance(user, dict):
            raise ConfigError(f"config file {config_path} must hold a JSON object")
        config.update(validate_env_config(name, user))
    if overrides:
        config.update(validate_env_config(name, overrides))
    return _CLASSES[name](config)


__all__ = [
    "ENV_NAMES",
    "DeepSeaTreasure",
    "EnergyState",
    "EnergyStorage",
    "Env",
    "EnvSpec",
    "FruitTree",
    "ResourceGathering",
    "StepOutcome",
    "default_config",
    "dst_step",
    "energy_step",
    "env_reset",
    "ft_step",
    "make_env",
    "rg_step",
    "validate_env_config",
]
