"""Per-scenario CSV files and scenario-set directories."""
from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from .extract import Scenario, ScenarioDataset, decode_condition

SCENARIO_COLUMNS = ("frame", "x1", "y1", "x2", "y2")


def write_scenario_csv(path, scenario: Scenario) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# dt={scenario.dt!r} condition={scenario.condition.category_id}\n")
        fh.write(",".join(SCENARIO_COLUMNS) + "\n")
        for f, row in enumerate(scenario.positions):
            fh.write(f"{f}," + ",".join(repr(float(v)) for v in row) + "\n")


def read_scenario_csv(path) -> Scenario:
    with open(path) as fh:
        first = fh.readline()
        if not first.startswith("#"):
            raise ValueError(f"{path}: missing '# dt=... condition=...' header")
        meta = dict(item.split("=", 1) for item in first[1:].split())
        header = fh.readline().strip().split(",")
        if tuple(header) != SCENARIO_COLUMNS:
            raise ValueError(f"{path}: expected columns {SCENARIO_COLUMNS}, got {header}")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    return Scenario(data[:, 1:5], decode_condition(int(meta["condition"])), 0, float(meta["dt"]))


def write_scenario_set(directory, scenarios, manifest: dict | None = None) -> list[Path]:
    """One CSV per scenario plus ``manifest.json`` listing them in order."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    names = [f"scenario_{i:04d}.csv" for i in range(len(scenarios))]
    for name, s in zip(names, scenarios):
        write_scenario_csv(d / name, s)
    with open(d / "manifest.json", "w") as fh:
        json.dump({**(manifest or {}), "count": len(names), "files": names}, fh, indent=2)
    return [d / n for n in names]


def read_scenario_set(path: str | os.PathLike, split: str = "test") -> tuple[np.ndarray, np.ndarray, float]:
    """``(positions, category_ids, dt)`` from a scenario directory or a dataset container.

    For a dataset container ``split`` selects train/validation/test or ``all``.
    """
    p = Path(path)
    if p.is_file():
        ds = ScenarioDataset.load(p)
        if split == "all":
            return ds.positions, ds.conditions, ds.dt
        if split not in ("train", "validation", "test"):
            raise ValueError(f"unknown split {split!r}")
        pos, cond = ds.subset(split)
        return pos, cond, ds.dt
    if not (p / "manifest.json").is_file():
        raise FileNotFoundError(f"{p} is neither a dataset file nor a scenario directory")
    with open(p / "manifest.json") as fh:
        files = json.load(fh)["files"]
    scenarios = [read_scenario_csv(p / f) for f in files]
    if not scenarios:
        raise ValueError(f"{p} contains no scenarios")
    dts = {s.dt for s in scenarios}
    if len(dts) != 1:
        raise ValueError(f"{p}: mixed time steps {sorted(dts)}")
    return (np.stack([s.positions for s in scenarios]),
            np.array([s.condition.category_id for s in scenarios]), dts.pop())
