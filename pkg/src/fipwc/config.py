"""Run configuration: one YAML file, validated against the module dataclasses.

Defaults reproduce the nominal model, the disturbance and learning parameters
and the reward weights.  Unknown keys are rejected and every error message
names the offending line.
"""

from __future__ import annotations

import copy
import dataclasses
import os
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .ddpg import AgentConfig
from .dynamics import ModelParams
from .env import EnvConfig
from .pd import PdGains, PdSearchSpec
from .stochastic import DisturbanceConfig, UncertaintySpec

OUTPUT_DIR_ENV = "FIPWC_OUTPUT_DIR"
CELLS = ("pd_no_dz", "drl_no_dz", "pd", "drl")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class CampaignConfig:
    n_runs: int = 100
    master_seed: int = 1
    cells: tuple[str, ...] = CELLS
    checkpoint: str = "actor.mlp"
    gains_file: str = "pd_gains.txt"

    def __post_init__(self):
        object.__setattr__(self, "cells", tuple(self.cells))
        if self.n_runs < 1:
            raise ValueError("n_runs must be >= 1")
        unknown = sorted(set(self.cells) - set(CELLS))
        if unknown or not self.cells:
            raise ValueError(f"unknown campaign cells {unknown}; choose from {list(CELLS)}")


@dataclass(frozen=True)
class PdConfig:
    gains: PdGains = field(default_factory=PdGains)
    search: PdSearchSpec = field(default_factory=PdSearchSpec)


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    output_dir: str = ""
    workers: int = 1
    model: ModelParams = field(default_factory=ModelParams)
    uncertainty: UncertaintySpec = field(default_factory=UncertaintySpec)
    disturbance: DisturbanceConfig = field(default_factory=DisturbanceConfig)
    env: EnvConfig = field(default_factory=EnvConfig)
    agent: AgentConfig = field(default_factory=AgentConfig)
    pd: PdConfig = field(default_factory=PdConfig)
    campaign: CampaignConfig = field(default_factory=CampaignConfig)

    def env_config(self, **overrides) -> EnvConfig:
        """EnvConfig with the model/uncertainty/disturbance sections folded in."""
        return dataclasses.replace(self.env, nominal=self.model, uncertainty=self.uncertainty, disturbance=self.disturbance, **overrides)

    def resolved_output_dir(self) -> Path:
        return Path(self.output_dir or os.environ.get(OUTPUT_DIR_ENV, "runs"))


# env fields that live in their own top-level sections
_ENV_NESTED = {"nominal", "uncertainty", "disturbance"}

PROFILES: dict[str, dict] = {
    # smaller actor steps and scaled critic targets keep desk-budget training from diverging
    "desk": {"agent": {"actor_lr": 1e-4, "reward_scale": 0.1}},
    "paper": {
        "agent": {
            "total_train_steps": 100_000,
            "batch_size": 512,
            "actor_hidden": [256] * 20,
            "critic_hidden": [512] * 20,
        },
        "campaign": {"n_runs": 10_000},
    },
}


class _Lines:
    """Maps dotted key paths to source line numbers."""

    def __init__(self, node: yaml.Node | None):
        self.lines: dict[str, int] = {}
        if node is not None:
            self._walk(node, "")

    def _walk(self, node, prefix):
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                path = f"{prefix}.{k.value}" if prefix else str(k.value)
                self.lines[path] = k.start_mark.line + 1
                self._walk(v, path)

    def where(self, path: str) -> str:
        while path:
            if path in self.lines:
                return f"line {self.lines[path]}: "
            path = path.rpartition(".")[0]
        return ""


def _coerce(value, target_type, path, lines: _Lines):
    origin = getattr(target_type, "__origin__", None)
    try:
        if target_type in (float,):
            if isinstance(value, bool):
                raise TypeError
            return float(value)
        if target_type is int:
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise TypeError
            return int(value)
        if target_type is bool:
            if not isinstance(value, bool):
                raise TypeError
            return value
        if target_type is str:
            return str(value)
        if origin is tuple:
            if not isinstance(value, (list, tuple)):
                raise TypeError
            inner = target_type.__args__[0]
            return tuple(_coerce(v, inner, f"{path}[{i}]", lines) for i, v in enumerate(value))
    except (TypeError, ValueError):
        raise ConfigError(f"{lines.where(path)}{path}: expected {getattr(target_type, '__name__', target_type)}, got {value!r}") from None
    return value


def _build(cls, data: dict, path: str, lines: _Lines, skip: set[str] = frozenset()):
    if not isinstance(data, dict):
        raise ConfigError(f"{lines.where(path)}{path}: expected a mapping, got {data!r}")
    hints = {f.name: f for f in dataclasses.fields(cls) if f.name not in skip}
    unknown = set(data) - set(hints)
    if unknown:
        key = sorted(unknown)[0]
        raise ConfigError(f"{lines.where(f'{path}.{key}' if path else key)}unknown key {f'{path}.{key}' if path else key!r}")
    types = typing.get_type_hints(cls)
    kwargs = {}
    for name, value in data.items():
        sub = f"{path}.{name}" if path else name
        t = types[name]
        if dataclasses.is_dataclass(t):
            kwargs[name] = _build(t, value, sub, lines, _ENV_NESTED if t is EnvConfig else frozenset())
        else:
            args = typing.get_args(t)
            if type(None) in args:
                if value is None:
                    kwargs[name] = None
                    continue
                t = next(a for a in args if a is not type(None))
            kwargs[name] = _coerce(value, t, sub, lines)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{lines.where(path)}{path or 'config'}: {exc}") from None


def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def parse_override(text: str) -> dict:
    """``"agent.tau=0.01"`` -> ``{"agent": {"tau": 0.01}}`` (value parsed as YAML)."""
    key, sep, raw = text.partition("=")
    if not sep or not key:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    value = yaml.safe_load(raw)
    for part in reversed(key.strip().split(".")):
        value = {part: value}
    return value


def load_config(path=None, profile: str = "desk", overrides: list[str] | None = None) -> RunConfig:
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r} (choose from {sorted(PROFILES)})")
    data: dict = copy.deepcopy(PROFILES[profile])
    lines = _Lines(None)
    if path is not None:
        text = Path(path).read_text()
        try:
            node = yaml.compose(text)
            user = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        if not isinstance(user, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        lines = _Lines(node)
        data = _merge(data, user)
    for o in overrides or []:
        data = _merge(data, parse_override(o))
    return _build(RunConfig, data, "", lines)


def to_dict(cfg: RunConfig) -> dict[str, Any]:
    def conv(obj):
        if dataclasses.is_dataclass(obj):
            skip = _ENV_NESTED if isinstance(obj, EnvConfig) else set()
            return {f.name: conv(getattr(obj, f.name)) for f in dataclasses.fields(obj) if f.name not in skip}
        if isinstance(obj, tuple):
            return [conv(v) for v in obj]
        return obj

    return conv(cfg)


def dump_config(cfg: RunConfig, path) -> None:
    Path(path).write_text(yaml.safe_dump(to_dict(cfg), sort_keys=False))
