"""Run configuration: TOML or JSON files with per-module parameter blocks."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .gating import GateParams
from .geometry import CoverageParams, Intrinsics
from .proxy import EpisodeConfig
from .sampling import SamplerParams
from .selection import POLICIES

DEFAULT_BUDGETS = (0, 25, 50, 100, 200, 500, 1000, 2000)
OUT_ENV = "VIEWPLAN_OUT"


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass
class SelectOptions:
    policies: tuple[str, ...] = ("random", "robot", "coverage", "cn_coverage")
    budgets: tuple[int, ...] = DEFAULT_BUDGETS
    sigma: float = 0.35
    lambda_yaw: float = 0.20
    unique_cap: int = 500
    stoch_subsample_eps: float = 0.1


@dataclass
class EstimatorOptions:
    kind: str = "oracle"
    sigma: float = 0.0
    offset: float = 0.0
    factor: float = 1.0
    script: str | None = None  # CSV path for the scripted kind


@dataclass
class ReportOptions:
    records: str | None = None
    novelty: str | None = None
    floor: int = 200
    target: str | None = None
    comparators: tuple[str, ...] = ()
    best_of: tuple[str, ...] = ()


@dataclass
class RunConfig:
    scene: dict = field(default_factory=lambda: {"procedural": "demo"})
    trajectory: str | None = None
    train_stride: int = 1
    camera: Intrinsics = field(default_factory=Intrinsics.default)
    coverage: CoverageParams = field(default_factory=CoverageParams)
    sampler: SamplerParams = field(default_factory=SamplerParams)
    selection: SelectOptions = field(default_factory=SelectOptions)
    gate: GateParams = field(default_factory=GateParams)
    quality: str | None = None
    episodes: EpisodeConfig = field(default_factory=EpisodeConfig)
    estimator: EstimatorOptions = field(default_factory=EstimatorOptions)
    report: ReportOptions = field(default_factory=ReportOptions)
    seed: int = 0
    out: str = field(default_factory=lambda: os.environ.get(OUT_ENV, "runs"))
    threads: int = 1
    base_dir: str = "."

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("base_dir")
        return _jsonable(d)

    def resolve(self, p: str | None) -> Path | None:
        if p is None:
            return None
        path = Path(p)
        return path if path.is_absolute() else Path(self.base_dir) / path


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return x


_BLOCKS = {
    "camera": Intrinsics,
    "coverage": CoverageParams,
    "sampler": SamplerParams,
    "selection": SelectOptions,
    "gate": GateParams,
    "episodes": EpisodeConfig,
    "estimator": EstimatorOptions,
    "report": ReportOptions,
}


def _build_block(name: str, cls, values: dict, base=None):
    allowed = {f.name for f in fields(cls)}
    unknown = set(values) - allowed
    if unknown:
        raise ConfigError(f"{name}.{sorted(unknown)[0]}", "unknown field")
    merged = asdict(base) if base is not None else {}
    merged.update(values)
    for k, v in merged.items():
        if isinstance(v, list):
            merged[k] = tuple(v)
    try:
        return cls(**merged)
    except (TypeError, ValueError) as e:
        raise ConfigError(name, str(e)) from None


def config_from_dict(data: dict, base_dir: str = ".") -> RunConfig:
    cfg = RunConfig(base_dir=str(base_dir))
    for key, value in data.items():
        if key in _BLOCKS:
            if not isinstance(value, dict):
                raise ConfigError(key, "expected a table")
            setattr(cfg, key, _build_block(key, _BLOCKS[key], value, getattr(cfg, key)))
        elif key in ("scene",):
            if not isinstance(value, dict):
                raise ConfigError("scene", "expected a table")
            cfg.scene = dict(value)
        elif key in {f.name for f in fields(RunConfig)} and key != "base_dir":
            setattr(cfg, key, value)
        else:
            raise ConfigError(key, "unknown field")
    validate(cfg)
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError("--config", f"file not found: {path}")
    text = path.read_bytes()
    try:
        data = json.loads(text) if path.suffix == ".json" else tomllib.loads(text.decode())
    except (ValueError, tomllib.TOMLDecodeError) as e:
        raise ConfigError("--config", f"cannot parse {path}: {e}") from None
    return config_from_dict(data, base_dir=str(path.parent))


def validate(cfg: RunConfig) -> None:
    scene = cfg.scene
    kinds = [k for k in ("procedural", "mesh", "spec") if k in scene]
    if len(kinds) != 1:
        raise ConfigError("scene", "set exactly one of procedural, mesh, spec")
    if "procedural" in scene and scene["procedural"] != "demo":
        raise ConfigError("scene.procedural", f"unknown built-in scene {scene['procedural']!r}")
    if "mesh" in scene and not cfg.resolve(scene["mesh"]).exists():
        raise ConfigError("scene.mesh", f"file not found: {scene['mesh']}")
    if cfg.trajectory is not None and not cfg.resolve(cfg.trajectory).exists():
        raise ConfigError("trajectory", f"file not found: {cfg.trajectory}")
    if cfg.quality is not None and not cfg.resolve(cfg.quality).exists():
        raise ConfigError("quality", f"file not found: {cfg.quality}")
    if int(cfg.train_stride) < 1:
        raise ConfigError("train_stride", "must be >= 1")
    if int(cfg.threads) < 1:
        raise ConfigError("threads", "must be >= 1")
    for p in cfg.selection.policies:
        if p not in POLICIES:
            raise ConfigError("selection.policies", f"unknown policy {p!r}")
    for n in cfg.selection.budgets:
        if int(n) != n or n < 0:
            raise ConfigError("selection.budgets", f"budget must be a nonnegative integer, got {n!r}")
    if cfg.estimator.kind == "scripted":
        if cfg.estimator.script is None:
            raise ConfigError("estimator.script", "scripted estimator needs a script CSV")
        if not cfg.resolve(cfg.estimator.script).exists():
            raise ConfigError("estimator.script", f"file not found: {cfg.estimator.script}")
    rep = cfg.report
    for name in ("records", "novelty"):
        p = getattr(rep, name)
        if p is not None and not cfg.resolve(p).exists():
            raise ConfigError(f"report.{name}", f"file not found: {p}")
