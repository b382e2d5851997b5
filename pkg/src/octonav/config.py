"""Run configuration: plain-text `section.key = value` files parsed into nested dataclasses."""
from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError


@dataclass
class WorldConfig:
    kinds: tuple = ("line", "s_curve", "circle")
    runs_per_kind: int = 10
    ticks: int = 1000
    dt: float = 0.1
    speed: float = 1.0
    n_beams: int = 360
    max_range: float = 20.0
    footprint_radius: float = 0.4
    blocking_min: int = 2
    blocking_max: int = 4
    clutter_min: int = 4
    clutter_max: int = 8
    n_dynamic: int = 1


@dataclass
class KinematicsConfig:
    r: float = 0.165
    y_icr0: float = 0.35
    omega_wheel_max: float = 9.0


@dataclass
class GridConfig:
    width: int = 40
    height: int = 40
    resolution: float = 0.2


@dataclass
class DatasetConfig:
    tau_i: int = 4
    tau_o: int = 10
    step: int = 5
    stride: int = 2
    ratios: tuple = (0.8, 0.1, 0.1)
    z_min: float = -0.1
    z_max: float = 0.1


@dataclass
class ModelConfig:
    hidden_dim: int = 64
    embed_dim: int = 32
    n_layers: int = 1


@dataclass
class TrainSection:
    learning_rate: float = 3e-4
    epochs: int = 80
    batch_size: int = 32
    teacher_forcing: bool = True
    heads: tuple = ("classification", "regression")


@dataclass
class BenchSection:
    methods: tuple = ("octopath", "regression", "hybrid_astar")
    latency_trials: int = 100


@dataclass
class SweepSection:
    resolutions: tuple = (0.2, 0.4)
    hidden_sizes: tuple = (64, 128)
    extent: float = 8.0
    epochs: int = 20


@dataclass
class MapSection:
    origin: tuple = (-25.6, -25.6, -25.6)
    side_length: float = 51.2
    sensor: tuple = (0.0, 0.0, 0.0)


@dataclass
class RunConfig:
    seed: int = 0
    out: str = "out"
    world: WorldConfig = field(default_factory=WorldConfig)
    kinematics: KinematicsConfig = field(default_factory=KinematicsConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainSection = field(default_factory=TrainSection)
    bench: BenchSection = field(default_factory=BenchSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    map: MapSection = field(default_factory=MapSection)


_BOOL = {"true": True, "yes": True, "1": True, "false": False, "no": False, "0": False}


def _convert(key: str, raw: str, current):
    raw = raw.strip()
    try:
        if isinstance(current, bool):
            if raw.lower() not in _BOOL:
                raise ValueError(f"expected a boolean, got {raw!r}")
            return _BOOL[raw.lower()]
        if isinstance(current, int):
            return int(raw)
        if isinstance(current, float):
            return float(raw)
        if isinstance(current, tuple):
            items = [s.strip() for s in raw.split(",") if s.strip()]
            kind = type(current[0]) if current else str
            return tuple(kind(s) for s in items)
        return raw
    except ValueError as exc:
        raise ConfigError(key, str(exc)) from exc


def apply_override(cfg: RunConfig, key: str, raw: str) -> None:
    """Set a dotted key (e.g. `train.epochs`) from its string value."""
    parts = key.strip().split(".")
    target = cfg
    for p in parts[:-1]:
        if not dataclasses.is_dataclass(target) or p not in {f.name for f in dataclasses.fields(target)}:
            raise ConfigError(key, "unknown section")
        target = getattr(target, p)
        if not dataclasses.is_dataclass(target):
            raise ConfigError(key, "not a section")
    name = parts[-1]
    if not dataclasses.is_dataclass(target) or name not in {f.name for f in dataclasses.fields(target)}:
        raise ConfigError(key, "unknown key")
    current = getattr(target, name)
    if dataclasses.is_dataclass(current):
        raise ConfigError(key, "is a section, not a value")
    setattr(target, name, _convert(key, raw, current))


def validate(cfg: RunConfig) -> RunConfig:
    checks = [
        ("dataset.tau_o", cfg.dataset.tau_o >= 1, "must be >= 1"),
        ("dataset.tau_i", cfg.dataset.tau_i >= 0, "must be >= 0"),
        ("dataset.step", cfg.dataset.step >= 1, "must be >= 1"),
        ("dataset.stride", cfg.dataset.stride >= 1, "must be >= 1"),
        ("dataset.ratios", len(cfg.dataset.ratios) == 3 and abs(sum(cfg.dataset.ratios) - 1) < 1e-9
         and min(cfg.dataset.ratios) >= 0, "must be three non-negative numbers summing to 1"),
        ("grid.width", cfg.grid.width >= 1, "must be >= 1"),
        ("grid.height", cfg.grid.height >= 1, "must be >= 1"),
        ("grid.resolution", cfg.grid.resolution > 0, "must be positive"),
        ("world.dt", cfg.world.dt > 0, "must be positive"),
        ("world.speed", cfg.world.speed > 0, "must be positive"),
        ("world.runs_per_kind", cfg.world.runs_per_kind >= 1, "must be >= 1"),
        ("world.kinds", set(cfg.world.kinds) <= {"line", "s_curve", "circle"} and cfg.world.kinds,
         "must list line, s_curve and/or circle"),
        ("model.hidden_dim", cfg.model.hidden_dim >= 1, "must be >= 1"),
        ("model.embed_dim", cfg.model.embed_dim >= 1, "must be >= 1"),
        ("model.n_layers", cfg.model.n_layers >= 1, "must be >= 1"),
        ("train.learning_rate", cfg.train.learning_rate > 0, "must be positive"),
        ("train.epochs", cfg.train.epochs >= 1, "must be >= 1"),
        ("train.batch_size", cfg.train.batch_size >= 1, "must be >= 1"),
        ("train.heads", set(cfg.train.heads) <= {"classification", "regression"}, "unknown head"),
        ("bench.methods", set(cfg.bench.methods) <= {"octopath", "regression", "hybrid_astar", "oracle"},
         "unknown method"),
        ("bench.latency_trials", cfg.bench.latency_trials >= 10, "must be >= 10"),
        ("kinematics.r", cfg.kinematics.r > 0, "must be positive"),
        ("kinematics.y_icr0", cfg.kinematics.y_icr0 > 0, "must be positive"),
        ("kinematics.omega_wheel_max", cfg.kinematics.omega_wheel_max > 0, "must be positive"),
    ]
    for key, ok, msg in checks:
        if not ok:
            raise ConfigError(key, msg)
    return cfg


def parse_text(text: str, overrides=()) -> RunConfig:
    cfg = RunConfig()
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected key = value, got {line!r}")
        key, value = line.split("=", 1)
        apply_override(cfg, key.strip(), value)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(item, "override must be key=value")
        key, value = item.split("=", 1)
        apply_override(cfg, key.strip(), value)
    return validate(cfg)


def parse_config(path=None, overrides=()) -> RunConfig:
    """Read a config file (missing file raises OSError); None gives pure defaults."""
    text = "" if path is None else Path(path).read_text()
    return parse_text(text, overrides)


def dump_config(cfg: RunConfig) -> str:
    lines = []

    def walk(obj, prefix):
        for f in dataclasses.fields(obj):
            v = getattr(obj, f.name)
            if dataclasses.is_dataclass(v):
                walk(v, f"{prefix}{f.name}.")
            elif isinstance(v, tuple):
                lines.append(f"{prefix}{f.name} = {', '.join(str(x) for x in v)}")
            else:
                lines.append(f"{prefix}{f.name} = {str(v).lower() if isinstance(v, bool) else v}")

    walk(cfg, "")
    return "\n".join(lines) + "\n"


def derive_seed(seed: int, component: str) -> int:
    """Per-component seed: first 4 bytes (little endian) of sha256("<seed>:<component>")."""
    digest = hashlib.sha256(f"{int(seed)}:{component}".encode()).digest()
    return int.from_bytes(digest[:4], "little")


__all__ = ["RunConfig", "parse_config", "parse_text", "apply_override", "validate", "dump_config", "derive_seed"]
