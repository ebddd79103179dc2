"""Run configuration for the command-line pipeline."""
from __future__ import annotations

import os
from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from .cvae import ModelConfig, TrainConfig
from .extract import ExtractionParams
from .ingest import RoundaboutGeometry
from .kpi import COLLISION_DISTANCE, CONFLICT_THRESHOLD

DATA_ROOT_ENV = "ROUNDGEN_DATA_ROOT"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class KpiParams:
    collision_distance: float = COLLISION_DISTANCE
    conflict_threshold: float = CONFLICT_THRESHOLD
    pet_bin_width: float = 0.5

    def __post_init__(self):
        for f in fields(self):
            if not getattr(self, f.name) > 0:
                raise ValueError(f"kpi.{f.name} must be positive")


@dataclass
class RunConfig:
    data_root: Path = Path("data")
    dataset: Path = Path("work/dataset.npz")
    artifact_dir: Path = Path("work/model")
    report_dir: Path = Path("work/report")
    geometry: RoundaboutGeometry = field(default_factory=RoundaboutGeometry.default)
    extraction: ExtractionParams = field(default_factory=ExtractionParams)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    kpi: KpiParams = field(default_factory=KpiParams)
    seed: int = 0

    @classmethod
    def from_mapping(cls, raw: dict | None, base: Path = Path(".")) -> "RunConfig":
        raw = dict(raw or {})
        known = {"paths", "geometry", "extraction", "model", "train", "kpi", "seed"}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config section(s): {sorted(unknown)}")
        paths = dict(raw.get("paths") or {})
        cfg = {}
        for key in ("data_root", "dataset", "artifact_dir", "report_dir"):
            if key in paths:
                cfg[key] = (base / Path(paths.pop(key))).resolve()
        if paths:
            raise ConfigError(f"unknown path key(s): {sorted(paths)}")
        try:
            geom = raw.get("geometry")
            if isinstance(geom, str):
                cfg["geometry"] = RoundaboutGeometry.from_file(base / geom)
            elif geom is not None:
                cfg["geometry"] = RoundaboutGeometry.from_mapping(geom)
            if "extraction" in raw:
                cfg["extraction"] = ExtractionParams(**raw["extraction"])
            if "model" in raw:
                cfg["model"] = ModelConfig(**raw["model"])
            if "train" in raw:
                cfg["train"] = TrainConfig(**raw["train"])
            if "kpi" in raw:
                cfg["kpi"] = KpiParams(**raw["kpi"])
        except (TypeError, ValueError, OSError) as exc:
            raise ConfigError(str(exc)) from exc
        if "seed" in raw:
            cfg["seed"] = int(raw["seed"])
        return cls(**cfg)

    @classmethod
    def load(cls, path: str | os.PathLike | None = None) -> "RunConfig":
        """Read a YAML (or JSON) config; relative paths resolve against its directory.

        ``$ROUNDGEN_DATA_ROOT`` overrides ``paths.data_root``.
        """
        if path is None:
            cfg = cls.from_mapping({})
        else:
            p = Path(path)
            if not p.is_file():
                raise ConfigError(f"config file not found: {p}")
            with open(p) as fh:
                try:
                    raw = yaml.safe_load(fh)
                except yaml.YAMLError as exc:
                    raise ConfigError(f"cannot parse {p}: {exc}") from exc
            cfg = cls.from_mapping(raw, p.parent)
        if os.environ.get(DATA_ROOT_ENV):
            cfg.data_root = Path(os.environ[DATA_ROOT_ENV]).resolve()
        return cfg
