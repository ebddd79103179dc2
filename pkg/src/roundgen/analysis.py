"""Evaluation: reconstruction RMSE, KPI distribution comparison, latent traversals."""
from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .cvae.training import ModelArtifact, UnknownConditionError
from .ingest import RoundaboutGeometry
from .kpi import KpiResult, inside_roundabout_mask, velocity_profile

TRAVERSAL_VALUES = (-3.0, -1.5, 0.0, 1.5, 3.0)
PET_BIN_WIDTH = 0.5


@dataclass(frozen=True)
class RmseReport:
    """Reconstruction RMSE in meters; x is longitudinal, y lateral."""

    longitudinal_v1: float
    longitudinal_v2: float
    longitudinal_total: float
    lateral_v1: float
    lateral_v2: float
    lateral_total: float

    def rows(self) -> list[tuple[str, float, float, float]]:
        return [("longitudinal", self.longitudinal_v1, self.longitudinal_v2, self.longitudinal_total),
                ("lateral", self.lateral_v1, self.lateral_v2, self.lateral_total)]


def rmse_report(originals: np.ndarray, reconstructions: np.ndarray) -> RmseReport:
    originals = np.asarray(originals, dtype=float)
    reconstructions = np.asarray(reconstructions, dtype=float)
    if originals.shape != reconstructions.shape or originals.shape[-1] != 4:
        raise ValueError(f"shape mismatch {originals.shape} vs {reconstructions.shape}")
    sq = ((originals - reconstructions) ** 2).reshape(-1, 4)
    per_col = np.sqrt(sq.mean(axis=0))
    lon = np.sqrt(sq[:, [0, 2]].mean())
    lat = np.sqrt(sq[:, [1, 3]].mean())
    return RmseReport(float(per_col[0]), float(per_col[2]), float(lon),
                      float(per_col[1]), float(per_col[3]), float(lat))


@dataclass
class TraversalGrid:
    dimension_index: int
    values: tuple[float, ...]
    condition: int
    latents: np.ndarray
    scenarios: np.ndarray
    speeds: np.ndarray

    def __len__(self) -> int:
        return len(self.scenarios)


def _masked_speed(traj: np.ndarray, dt: float, geom: RoundaboutGeometry | None) -> np.ndarray:
    speed = np.linalg.norm(velocity_profile(traj, dt), axis=1)
    if geom is not None:
        speed[~inside_roundabout_mask(traj, geom)] = np.nan
    return speed


def latent_traversal(artifact: ModelArtifact, condition: int, dimension: int,
                     geom: RoundaboutGeometry | None = None,
                     values: Sequence[float] = TRAVERSAL_VALUES) -> TraversalGrid:
    """Decode latents that are zero except along ``dimension``, which takes each of ``values``.

    Speeds are NaN outside the roundabout when ``geom`` is given.
    """
    latent_dim = artifact.model_config.latent_dim
    if not 0 <= dimension < latent_dim:
        raise ValueError(f"dimension {dimension} outside 0..{latent_dim - 1}")
    if condition not in artifact.vocabulary:
        raise UnknownConditionError(f"category {condition} not in trained vocabulary")
    z = np.zeros((len(values), latent_dim))
    z[:, dimension] = values
    # one latent per call so each output is independent of batch composition
    scenarios = np.concatenate([artifact.stats.invert(artifact.decode(row[None], [condition]))
                                for row in z])
    speeds = np.stack([np.column_stack([_masked_speed(s[:, :2], artifact.dt, geom),
                                        _masked_speed(s[:, 2:], artifact.dt, geom)])
                       for s in scenarios])
    return TraversalGrid(dimension, tuple(float(v) for v in values), int(condition), z, scenarios, speeds)


def traversal_sweep(artifact: ModelArtifact, condition: int, dimensions: Sequence[int] | None = None,
                    geom: RoundaboutGeometry | None = None) -> list[TraversalGrid]:
    if dimensions is None:
        dimensions = range(artifact.model_config.latent_dim)
    return [latent_traversal(artifact, condition, d, geom) for d in dimensions]


@dataclass
class KpiComparison:
    edges: np.ndarray
    counts_a: np.ndarray
    counts_b: np.ndarray
    undefined_pet: tuple[int, int]
    undefined_ttc: tuple[int, int]
    scatter: list[tuple[str, int, float | None, float | None]]


def _pets(results: Sequence[KpiResult]) -> np.ndarray:
    return np.array([r.pet for r in results if r.pet is not None], dtype=float)


def pet_bin_edges(max_pet: float, bin_width: float = PET_BIN_WIDTH) -> np.ndarray:
    n_bins = max(1, int(np.ceil(max_pet / bin_width)))
    if n_bins * bin_width < max_pet:
        n_bins += 1
    return np.arange(n_bins + 1) * bin_width


def kpi_distribution_compare(set_a: Sequence[KpiResult], set_b: Sequence[KpiResult],
                             bin_width: float = PET_BIN_WIDTH) -> KpiComparison:
    """PET histograms on shared edges plus a per-scenario (PET, min TTC) table."""
    if not set_a or not set_b:
        raise ValueError("both KPI sets must be nonempty")
    if bin_width <= 0:
        raise ValueError("bin_width must be positive")
    pa, pb = _pets(set_a), _pets(set_b)
    max_pet = max([0.0, *pa, *pb])
    edges = pet_bin_edges(max_pet, bin_width)
    counts_a, _ = np.histogram(pa, bins=edges)
    counts_b, _ = np.histogram(pb, bins=edges)
    scatter = [(label, i, r.pet, r.min_ttc)
               for label, results in (("a", set_a), ("b", set_b))
               for i, r in enumerate(results)]
    return KpiComparison(
        edges, counts_a, counts_b,
        (len(set_a) - len(pa), len(set_b) - len(pb)),
        (sum(r.min_ttc is None for r in set_a), sum(r.min_ttc is None for r in set_b)),
        scatter,
    )


def _cell(v) -> str:
    return "" if v is None or (isinstance(v, float) and np.isnan(v)) else repr(float(v))


def write_rmse_csv(path, report: RmseReport) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["axis", "vehicle_1", "vehicle_2", "total"])
        for axis, v1, v2, tot in report.rows():
            w.writerow([axis, repr(v1), repr(v2), repr(tot)])


def write_comparison(directory, comparison: KpiComparison) -> list[Path]:
    d = Path(directory)
    for label, counts in (("a", comparison.counts_a), ("b", comparison.counts_b)):
        with open(d / f"pet_hist_{label}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["bin_start", "bin_end", "count"])
            for lo, hi, n in zip(comparison.edges[:-1], comparison.edges[1:], counts):
                w.writerow([repr(float(lo)), repr(float(hi)), int(n)])
    with open(d / "pet_vs_ttc.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["set", "scenario_index", "pet", "min_ttc"])
        for label, i, p, t in comparison.scatter:
            w.writerow([label, i, _cell(p), _cell(t)])
    with open(d / "kpi_summary.json", "w") as fh:
        json.dump({"undefined_pet": list(comparison.undefined_pet),
                   "undefined_ttc": list(comparison.undefined_ttc),
                   "defined_pet": [int(comparison.counts_a.sum()), int(comparison.counts_b.sum())]},
                  fh, indent=2)
    return [d / "pet_hist_a.csv", d / "pet_hist_b.csv", d / "pet_vs_ttc.csv", d / "kpi_summary.json"]


def write_traversal_csv(path, grid: TraversalGrid) -> None:
    """Long format: one row per (latent value, frame)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["value", "frame", "x1", "y1", "x2", "y2", "speed1", "speed2"])
        for value, scen, speed in zip(grid.values, grid.scenarios, grid.speeds):
            for f, (row, sp) in enumerate(zip(scen, speed)):
                w.writerow([repr(value), f, *(repr(float(v)) for v in row), _cell(sp[0]), _cell(sp[1])])


def write_report_bundle(directory: str | os.PathLike, rmse: RmseReport | None = None,
                        comparison: KpiComparison | None = None,
                        grids: Sequence[TraversalGrid] = (), plots: bool = False,
                        geom: RoundaboutGeometry | None = None) -> list[Path]:
    """Write whichever report parts are given; returns the written file paths."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    written = []
    if rmse is not None:
        write_rmse_csv(d / "rmse.csv", rmse)
        written.append(d / "rmse.csv")
    if comparison is not None:
        written += write_comparison(d, comparison)
    for grid in grids:
        path = d / f"traversal_dim{grid.dimension_index}.csv"
        write_traversal_csv(path, grid)
        written.append(path)
    if plots:
        from . import plotting

        written += plotting.save_report_figures(d, comparison=comparison, grids=grids, geom=geom)
    return sorted(written)
