"""Run configuration: one YAML file, strict keys, CLI overrides.

Sections map 1:1 onto the module configs (arch/train/smooth/synth/pairing)
plus optional default paths. Unknown keys anywhere are rejected with the
offending dotted path named. The top-level seed flows into sections that
take a seed unless they set their own.
"""

import dataclasses
from dataclasses import dataclass, field, fields

import yaml

from .model import ArchConfig
from .pairing import PairingConfig
from .synthstage import GenConfig
from .training import LossWeights, TrainConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SmoothConfig:
    alpha: float = 0.7
    beta: float = 0.6
    window: int = 3
    feature_ema: bool = True
    light_avg: bool = True


@dataclass(frozen=True)
class PathsConfig:
    data: str = ""
    pairs: str = ""
    out: str = ""


@dataclass(frozen=True)
class GlobalConfig:
    seed: int = 0
    arch: ArchConfig = field(default_factory=ArchConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    smooth: SmoothConfig = field(default_factory=SmoothConfig)
    synth: GenConfig = field(default_factory=GenConfig)
    pairing: PairingConfig = field(default_factory=PairingConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)


def _coerce(value, ftype, path):
    if dataclasses.is_dataclass(ftype):
        if not isinstance(value, dict):
            raise ConfigError(f"{path}: expected a mapping")
        return _from_dict(ftype, value, path)
    origin = getattr(ftype, "__origin__", None)
    if ftype is tuple or origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{path}: expected a list")
        return tuple(value)
    if ftype is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected a boolean")
        return value
    if ftype is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer")
        return value
    if ftype is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number")
        return float(value)
    if ftype is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string")
        return value
    return value


def _from_dict(cls, data, path=""):
    known = {f.name: f for f in fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        key = sorted(unknown)[0]
        where = f"{path}.{key}" if path else key
        raise ConfigError(f"unknown config key '{where}'")
    kwargs = {}
    for name, value in data.items():
        f = known[name]
        sub = f"{path}.{name}" if path else name
        ftype = f.type if not isinstance(f.type, str) else _resolve(f.type)
        kwargs[name] = _coerce(value, ftype, sub)
    return cls(**kwargs)


def _resolve(type_name):
    table = {"ArchConfig": ArchConfig, "TrainConfig": TrainConfig,
             "SmoothConfig": SmoothConfig, "GenConfig": GenConfig,
             "PairingConfig": PairingConfig, "PathsConfig": PathsConfig,
             "LossWeights": LossWeights,
             "int": int, "float": float, "bool": bool, "str": str,
             "tuple": tuple, "list": list, "dict": dict}
    return table.get(type_name, object)


def _propagate_seed(cfg, raw):
    updates = {}
    for section in ("train", "synth"):
        raw_section = raw.get(section) or {}
        if "seed" not in raw_section:
            updates[section] = dataclasses.replace(getattr(cfg, section),
                                                   seed=cfg.seed)
    return dataclasses.replace(cfg, **updates) if updates else cfg


def load_config(path=None, overrides=()):
    """Build the run config from an optional YAML file plus key=value
    overrides (values parsed as YAML, e.g. -o arch.widths=[16,32])."""
    raw = {}
    if path is not None:
        with open(path) as f:
            loaded = yaml.safe_load(f) or {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        raw = loaded
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override '{item}' is not of the form key=value")
        key, _, text = item.partition("=")
        try:
            value = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"override '{key}': bad value ({exc})") from exc
        node = raw
        parts = key.strip().split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override '{key}': '{part}' is not a section")
        node[parts[-1]] = value
    cfg = _from_dict(GlobalConfig, raw)
    cfg = _propagate_seed(cfg, raw)
    cfg.arch.validate()
    cfg.train.validate()
    return cfg
