"""Run configuration: a flat JSON document validated against known keys.

Schema (every key optional)::

    {
      "policy": "diffusion" | "mlp",
      "seed": 0, "rounds": 100, "out_dir": "runs/dipo",
      "eval_every": 10, "eval_episodes": 100, "checkpoint_every": 10,
      "env": {"name": "multigoal", <environment keyword arguments>},
      <any DipoConfig field>: <value>
    }
"""
from __future__ import annotations

import inspect
import json
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from ..envs import ConstantChain, MultiGoalEnv, QuadraticBandit
from ..rl.agent import DipoConfig


class ConfigError(Exception):
    """Base class for configuration problems."""


class UnknownKeyError(ConfigError):
    pass


class ConfigTypeError(ConfigError):
    pass


class ConfigValueError(ConfigError):
    pass


class ConfigReadError(ConfigError):
    """The file is missing, unreadable, not UTF-8, or not JSON."""


ENV_CLASSES = {"multigoal": MultiGoalEnv, "bandit": QuadraticBandit, "chain": ConstantChain}
POLICY_KINDS = ("diffusion", "mlp")


@dataclass
class RunConfig:
    dipo: DipoConfig = field(default_factory=DipoConfig)
    env: str = "multigoal"
    env_knobs: dict[str, Any] = field(default_factory=dict)
    policy: str = "diffusion"
    seed: int = 0
    rounds: int = 100
    out_dir: str = "runs/dipo"
    eval_every: int = 10
    eval_episodes: int = 100
    checkpoint_every: int = 10

    def validate(self) -> None:
        if self.env not in ENV_CLASSES:
            raise ConfigValueError(f"unknown environment {self.env!r}; choose from {sorted(ENV_CLASSES)}")
        allowed = env_knob_types(self.env)
        for k, v in self.env_knobs.items():
            if k not in allowed:
                raise UnknownKeyError(f"unknown knob {k!r} for environment {self.env!r}")
            _check_type(f"env.{k}", v, allowed[k])
        if self.policy not in POLICY_KINDS:
            raise ConfigValueError(f"policy must be one of {POLICY_KINDS}, got {self.policy!r}")
        if not 0 <= self.seed < 2**64:
            raise ConfigValueError("seed must be an unsigned 64-bit integer")
        if self.rounds < 0:
            raise ConfigValueError("rounds must be non-negative")
        for name in ("eval_every", "checkpoint_every"):
            if getattr(self, name) < 0:
                raise ConfigValueError(f"{name} must be non-negative (0 disables)")
        if self.eval_episodes < 1:
            raise ConfigValueError("eval_episodes must be at least 1")
        try:
            self.dipo.validate()
        except ValueError as e:
            raise ConfigValueError(str(e)) from None

    def make_env(self, rng):
        try:
            return ENV_CLASSES[self.env](rng=rng, **self.env_knobs)
        except (TypeError, ValueError) as e:
            raise ConfigValueError(f"cannot build environment {self.env!r}: {e}") from None


_RUN_KEYS = {"policy": str, "seed": int, "rounds": int, "out_dir": str,
             "eval_every": int, "eval_episodes": int, "checkpoint_every": int}


def env_knob_types(name: str) -> dict[str, type]:
    """Keyword arguments accepted by an environment, typed by their defaults."""
    params = inspect.signature(ENV_CLASSES[name]).parameters
    out = {}
    for p in params.values():
        if p.name == "rng":
            continue
        default = p.default
        out[p.name] = list if isinstance(default, (list, tuple)) or default is inspect.Parameter.empty else type(default)
    return out


def _dipo_types() -> dict[str, Any]:
    return typing.get_type_hints(DipoConfig)


def _check_type(key: str, value: Any, expected) -> Any:
    origin = typing.get_origin(expected)
    if origin in (tuple, list) or expected in (tuple, list):
        if not isinstance(value, (list, tuple)):
            raise ConfigTypeError(f"{key} must be a list, got {type(value).__name__}")
        args = typing.get_args(expected)
        if args:
            for v in value:
                _check_type(key, v, args[0])
        return value
    if isinstance(value, bool) or value is None:
        if expected is bool and isinstance(value, bool):
            return value
        raise ConfigTypeError(f"{key} must be {expected.__name__}, got {value!r}")
    if expected is float:
        if not isinstance(value, (int, float)):
            raise ConfigTypeError(f"{key} must be a number, got {type(value).__name__}")
        return float(value)
    if expected is int:
        if isinstance(value, float) and value.is_integer():
            return int(value)
        if not isinstance(value, int):
            raise ConfigTypeError(f"{key} must be an integer, got {value!r}")
        return value
    if not isinstance(value, expected):
        raise ConfigTypeError(f"{key} must be {expected.__name__}, got {type(value).__name__}")
    return value


def config_from_dict(doc: dict[str, Any]) -> RunConfig:
    """Build and validate a :class:`RunConfig`; absent keys keep their defaults."""
    if not isinstance(doc, dict):
        raise ConfigTypeError("configuration must be a JSON object")
    dipo_types = _dipo_types()
    dipo_kw, run_kw = {}, {}
    env_name, env_knobs = "multigoal", {}
    for key, value in doc.items():
        if key in dipo_types:
            dipo_kw[key] = _check_type(key, value, dipo_types[key])
        elif key in _RUN_KEYS:
            run_kw[key] = _check_type(key, value, _RUN_KEYS[key])
        elif key == "env":
            if isinstance(value, str):
                env_name = value
            elif isinstance(value, dict):
                env_knobs = dict(value)
                env_name = env_knobs.pop("name", env_name)
                if not isinstance(env_name, str):
                    raise ConfigTypeError("env.name must be a string")
            else:
                raise ConfigTypeError("env must be a name or an object")
        else:
            raise UnknownKeyError(f"unknown configuration key {key!r}")
    try:
        dipo = DipoConfig(**dipo_kw)
    except ValueError as e:
        raise ConfigValueError(str(e)) from None
    cfg = RunConfig(dipo=dipo, env=env_name, env_knobs=env_knobs, **run_kw)
    cfg.validate()
    return cfg


def config_to_dict(cfg: RunConfig) -> dict[str, Any]:
    out: dict[str, Any] = {"policy": cfg.policy, "seed": cfg.seed, "rounds": cfg.rounds, "out_dir": cfg.out_dir,
                           "eval_every": cfg.eval_every, "eval_episodes": cfg.eval_episodes,
                           "checkpoint_every": cfg.checkpoint_every,
                           "env": {"name": cfg.env, **cfg.env_knobs}}
    out.update(cfg.dipo.to_dict())
    return out


def load_config(path: str | Path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        raise ConfigReadError(f"cannot read config {path}: {e}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigReadError(f"config {path} is not valid JSON: {e}") from None
    return config_from_dict(doc)


def save_config(cfg: RunConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(config_to_dict(cfg), indent=2, sort_keys=True) + "\n", encoding="utf-8")
