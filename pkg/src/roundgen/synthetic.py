"""Synthetic roundabout traffic with known routes, for dataset-free testing."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .ingest import N_ROUTES, SOURCE_FPS, RoundaboutGeometry, Route, Track

# angular offset of entry/exit lanes from the port axis (rad)
LANE_OFFSET = 0.1


@dataclass
class SyntheticRecording:
    tracks: dict[int, Track]
    routes: dict[int, Route]


@dataclass(frozen=True)
class RoundaboutPath:
    """Radial approach -> counterclockwise arc on the circulating lane -> radial exit."""

    center: tuple[float, float]
    lane_radius: float
    entry_angle: float
    sweep: float
    approach_length: float
    exit_length: float

    @property
    def arc_length(self) -> float:
        return self.lane_radius * self.sweep

    @property
    def length(self) -> float:
        return self.approach_length + self.arc_length + self.exit_length

    @property
    def arc_span(self) -> tuple[float, float]:
        """Arc-length interval occupied by the circular segment."""
        return self.approach_length, self.approach_length + self.arc_length

    def positions(self, s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        s0, s1 = self.arc_span
        R = self.lane_radius
        theta = np.where(s < s0, self.entry_angle,
                         np.where(s <= s1, self.entry_angle + (np.clip(s, s0, s1) - s0) / R,
                                  self.entry_angle + self.sweep))
        r = np.where(s < s0, R + (s0 - s), np.where(s <= s1, R, R + (s - s1)))
        return np.column_stack([self.center[0] + r * np.cos(theta),
                                self.center[1] + r * np.sin(theta)])


def _smoothstep(u):
    u = np.clip(u, 0.0, 1.0)
    return u * u * (3.0 - 2.0 * u)


def route_path(geom: RoundaboutGeometry, route: Route, approach_length: float,
               exit_length: float, lane_radius: float | None = None) -> RoundaboutPath:
    if lane_radius is None:
        lane_radius = 0.5 * (geom.inner_radius + geom.outer_radius)
    a_in = geom.port_center_angle(route.entry_port) - LANE_OFFSET
    a_out = geom.port_center_angle(route.exit_port) + LANE_OFFSET
    sweep = (a_out - a_in) % (2 * math.pi)
    reach = geom.gate_radius - lane_radius
    return RoundaboutPath(geom.center, lane_radius, a_in, sweep,
                          reach + approach_length, reach + exit_length)


def drive(path: RoundaboutPath, v_approach: float, v_ring: float, v_exit: float,
          fps: float = SOURCE_FPS, blend: float = 10.0) -> np.ndarray:
    """Sample ``path`` at ``fps`` under a speed profile blended between the three legs.

    Speed eases from ``v_approach`` to ``v_ring`` over the ``blend`` meters
    before the arc and from ``v_ring`` to ``v_exit`` after it, so every speed
    lies between the three given values.
    """
    s0, s1 = path.arc_span

    def speed(s):
        return (v_approach + (v_ring - v_approach) * _smoothstep((s - (s0 - blend)) / blend)
                + (v_exit - v_ring) * _smoothstep((s - s1) / blend))

    dt = 1.0 / fps
    s_values = [0.0]
    while s_values[-1] < path.length:
        s_values.append(s_values[-1] + speed(s_values[-1]) * dt)
    s_values[-1] = min(s_values[-1], path.length)
    return np.asarray(s_values)


def generate_synthetic_recording(geom: RoundaboutGeometry, n_vehicles: int, seed: int, *,
                                 recording_id: int = 0,
                                 speed_range: tuple[float, float] = (5.0, 12.0),
                                 routes: list[Route] | None = None,
                                 duration: float | None = None,
                                 lane_radius: float | None = None) -> SyntheticRecording:
    """Simulate ``n_vehicles`` independent vehicles crossing ``geom``.

    Entry times are uniform over ``duration`` seconds (default 3 s per vehicle,
    at least 30 s).  ``routes`` restricts the route pool; default is all 12.
    Output is a deterministic function of the arguments.
    """
    if n_vehicles < 1:
        raise ValueError("n_vehicles must be >= 1")
    lo, hi = speed_range
    if not 0 < lo < hi:
        raise ValueError("speed_range must satisfy 0 < low < high")
    rng = np.random.default_rng(seed)
    pool = routes if routes else [Route.from_id(i) for i in range(N_ROUTES)]
    if duration is None:
        duration = max(30.0, 3.0 * n_vehicles)
    split = lo + 0.4 * (hi - lo)

    vehicles = []
    for _ in range(n_vehicles):
        route = pool[int(rng.integers(len(pool)))]
        start = int(rng.integers(0, int(duration * SOURCE_FPS)))
        path = route_path(geom, route, rng.uniform(15.0, 35.0), rng.uniform(15.0, 35.0),
                          lane_radius)
        v_ring = rng.uniform(lo, split)
        v_app, v_exit = rng.uniform(split, hi, size=2)
        s = drive(path, v_app, v_ring, v_exit)
        vehicles.append((start, route, path.positions(s)))

    vehicles.sort(key=lambda v: v[0])
    tracks, truth = {}, {}
    for tid, (start, route, xy) in enumerate(vehicles, start=1):
        frames = np.arange(start, start + len(xy), dtype=np.int64)
        tracks[tid] = Track(recording_id, tid, frames, xy[:, 0].copy(), xy[:, 1].copy())
        truth[tid] = route
    return SyntheticRecording(tracks, truth)
