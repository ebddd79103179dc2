"""Surrogate safety measures: TTC, conflict zones and PET for two-vehicle scenarios."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .ingest import RoundaboutGeometry

COLLISION_DISTANCE = 2.0
CONFLICT_THRESHOLD = 5.0
KPI_COLUMNS = ("scenario_id", "condition", "min_ttc", "min_ttc_frame", "pet",
               "conflict_x", "conflict_y", "critical_flag")


@dataclass(frozen=True)
class ConflictZone:
    point_a: tuple[float, float]
    point_b: tuple[float, float]
    separation: float
    index_a: int
    index_b: int

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (np.asarray(self.point_a) + np.asarray(self.point_b))


@dataclass(frozen=True)
class KpiResult:
    min_ttc: float | None
    min_ttc_frame: int | None
    pet: float | None
    conflict_zone: ConflictZone | None
    critical: bool = False


def velocity_profile(trajectory: np.ndarray, dt: float) -> np.ndarray:
    """Forward-difference velocities; the final row repeats the penultimate one."""
    trajectory = np.asarray(trajectory, dtype=float)
    if len(trajectory) < 2:
        raise ValueError("need at least 2 samples for a velocity")
    if dt <= 0:
        raise ValueError("dt must be positive")
    v = np.empty_like(trajectory)
    v[:-1] = np.diff(trajectory, axis=0) / dt
    v[-1] = v[-2]
    return v


def inside_roundabout_mask(trajectory: np.ndarray, geom: RoundaboutGeometry) -> np.ndarray:
    trajectory = np.asarray(trajectory, dtype=float)
    d = np.hypot(trajectory[..., 0] - geom.center[0], trajectory[..., 1] - geom.center[1])
    return d <= geom.outer_radius


def ttc_at_frame(p1, v1, p2, v2, collision_distance: float = COLLISION_DISTANCE) -> float | None:
    """Time until the centers come within ``collision_distance`` at constant velocity.

    Returns None when they never do, or when they are already that close.
    """
    dpx, dpy = p2[0] - p1[0], p2[1] - p1[1]
    dvx, dvy = v2[0] - v1[0], v2[1] - v1[1]
    a = dvx * dvx + dvy * dvy
    b = 2.0 * (dpx * dvx + dpy * dvy)
    c = dpx * dpx + dpy * dpy - collision_distance ** 2
    if c <= 0.0 or a == 0.0 or b >= 0.0:
        return None
    disc = b * b - 4.0 * a * c
    if disc < 0.0:
        return None
    # numerically stable smaller root for b < 0
    return (2.0 * c) / (-b + math.sqrt(disc))


def _ttc_series(p1, v1, p2, v2, collision_distance):
    dp, dv = p2 - p1, v2 - v1
    a = np.einsum("ij,ij->i", dv, dv)
    b = 2.0 * np.einsum("ij,ij->i", dp, dv)
    c = np.einsum("ij,ij->i", dp, dp) - collision_distance ** 2
    disc = b * b - 4.0 * a * c
    ok = (c > 0) & (a > 0) & (b < 0) & (disc >= 0)
    ttc = np.full(len(a), np.nan)
    ttc[ok] = 2.0 * c[ok] / (-b[ok] + np.sqrt(disc[ok]))
    return ttc


def min_ttc(positions: np.ndarray, dt: float, geom: RoundaboutGeometry,
            collision_distance: float = COLLISION_DISTANCE) -> tuple[float, int] | None:
    """Smallest defined TTC over frames where both vehicles are in the roundabout."""
    positions = np.asarray(positions, dtype=float)
    p1, p2 = positions[:, :2], positions[:, 2:]
    ttc = _ttc_series(p1, velocity_profile(p1, dt), p2, velocity_profile(p2, dt), collision_distance)
    ttc[~(inside_roundabout_mask(p1, geom) & inside_roundabout_mask(p2, geom))] = np.nan
    if np.all(np.isnan(ttc)):
        return None
    k = int(np.nanargmin(ttc))
    return float(ttc[k]), k


def find_conflict_zone(path1: np.ndarray, path2: np.ndarray,
                       threshold: float = CONFLICT_THRESHOLD) -> ConflictZone | None:
    """Closest pair of samples between two paths, if no farther apart than ``threshold``.

    Ties go to the earliest index on ``path1``, then on ``path2``.
    """
    path1 = np.asarray(path1, dtype=float)
    path2 = np.asarray(path2, dtype=float)
    if len(path1) == 0 or len(path2) == 0:
        return None
    dx = path1[:, None, 0] - path2[None, :, 0]
    dy = path1[:, None, 1] - path2[None, :, 1]
    d2 = dx * dx + dy * dy
    i, j = np.unravel_index(int(np.argmin(d2)), d2.shape)
    sep = math.sqrt(d2[i, j])
    if sep > threshold:
        return None
    return ConflictZone(tuple(path1[i]), tuple(path2[j]), sep, int(i), int(j))


def occupancy_run(trajectory: np.ndarray, point, threshold: float, anchor: int) -> tuple[int, int]:
    """Contiguous frame run within ``threshold`` of ``point`` that contains, or is nearest to, ``anchor``."""
    near = np.hypot(trajectory[:, 0] - point[0], trajectory[:, 1] - point[1]) <= threshold
    idx = np.flatnonzero(near)
    if idx.size == 0:
        raise ValueError("trajectory never reaches the conflict zone")
    breaks = np.flatnonzero(np.diff(idx) > 1)
    starts = np.concatenate([[idx[0]], idx[breaks + 1]])
    ends = np.concatenate([idx[breaks], [idx[-1]]])
    gap = np.maximum(starts - anchor, 0) + np.maximum(anchor - ends, 0)
    k = int(np.argmin(gap))
    return int(starts[k]), int(ends[k])


def pet(positions: np.ndarray, dt: float, geom: RoundaboutGeometry,
        threshold: float = CONFLICT_THRESHOLD) -> tuple[float, bool, ConflictZone] | None:
    """Post-encroachment time at the conflict zone of the in-roundabout paths.

    Returns ``(pet_seconds, critical, zone)``; overlapping occupancy yields
    ``(0.0, True, zone)``.  None when the paths have no conflict zone.
    """
    positions = np.asarray(positions, dtype=float)
    p1, p2 = positions[:, :2], positions[:, 2:]
    in1 = np.flatnonzero(inside_roundabout_mask(p1, geom))
    in2 = np.flatnonzero(inside_roundabout_mask(p2, geom))
    zone = find_conflict_zone(p1[in1], p2[in2], threshold)
    if zone is None:
        return None
    zone = ConflictZone(zone.point_a, zone.point_b, zone.separation,
                        int(in1[zone.index_a]), int(in2[zone.index_b]))
    point = zone.center
    s1, e1 = occupancy_run(p1, point, threshold, zone.index_a)
    s2, e2 = occupancy_run(p2, point, threshold, zone.index_b)
    if s1 <= e2 and s2 <= e1:
        return 0.0, True, zone
    gap = s2 - e1 if e1 < s2 else s1 - e2
    return gap * dt, False, zone


def evaluate_kpis(positions: np.ndarray, dt: float, geom: RoundaboutGeometry,
                  collision_distance: float = COLLISION_DISTANCE,
                  threshold: float = CONFLICT_THRESHOLD) -> KpiResult:
    ttc = min_ttc(positions, dt, geom, collision_distance)
    p = pet(positions, dt, geom, threshold)
    return KpiResult(
        min_ttc=None if ttc is None else ttc[0],
        min_ttc_frame=None if ttc is None else ttc[1],
        pet=None if p is None else p[0],
        conflict_zone=None if p is None else p[2],
        critical=False if p is None else p[1],
    )


def evaluate_batch(positions: np.ndarray, dt: float, geom: RoundaboutGeometry, **kwargs) -> list[KpiResult]:
    return [evaluate_kpis(s, dt, geom, **kwargs) for s in positions]


def _fmt(value) -> str:
    return "" if value is None else repr(value)


def write_kpi_csv(path, results: Sequence[KpiResult], conditions: Iterable[int],
                  scenario_ids: Iterable | None = None) -> None:
    """One row per scenario; undefined values are empty fields."""
    conditions = list(conditions)
    ids = list(scenario_ids) if scenario_ids is not None else list(range(len(results)))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(KPI_COLUMNS)
        for sid, cond, r in zip(ids, conditions, results):
            center = r.conflict_zone.center if r.conflict_zone is not None else (None, None)
            w.writerow([sid, int(cond), _fmt(r.min_ttc), _fmt(r.min_ttc_frame), _fmt(r.pet),
                        _fmt(None if center[0] is None else float(center[0])),
                        _fmt(None if center[1] is None else float(center[1])),
                        int(r.critical)])


def read_kpi_csv(path) -> list[dict]:
    def parse(v, kind):
        return None if v == "" else kind(v)

    rows = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            rows.append({"scenario_id": row["scenario_id"], "condition": int(row["condition"]),
                         "min_ttc": parse(row["min_ttc"], float),
                         "min_ttc_frame": parse(row["min_ttc_frame"], int),
                         "pet": parse(row["pet"], float),
                         "conflict_x": parse(row["conflict_x"], float),
                         "conflict_y": parse(row["conflict_y"], float),
                         "critical_flag": bool(int(row["critical_flag"]))})
    return rows
