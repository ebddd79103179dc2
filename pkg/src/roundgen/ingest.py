"""Recording ingestion: rounD-style track CSVs, roundabout geometry and routes."""
from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np
import pandas as pd
import yaml

log = logging.getLogger(__name__)

PORTS = ("A", "B", "C", "D")
N_ROUTES = len(PORTS) * (len(PORTS) - 1)
SOURCE_FPS = 25
REQUIRED_COLUMNS = ("recordingId", "trackId", "frame", "xCenter", "yCenter")
FULL_CIRCLE_MARGIN = 0.35

TWO_PI = 2.0 * math.pi


class TrackFormatError(ValueError):
    """Raised when a recording file cannot be parsed into tracks."""


class RouteRejected(ValueError):
    """A track whose entry/exit route is excluded from scenario extraction."""

    def __init__(self, reason: str, track_id=None):
        self.reason = reason
        self.track_id = track_id
        super().__init__(reason if track_id is None else f"track {track_id}: {reason}")


@dataclass(frozen=True)
class Track:
    """Per-frame planar state of one vehicle (meters, 25 Hz source frames)."""

    recording_id: int
    track_id: int
    frames: np.ndarray
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        n = len(self.frames)
        if len(self.x) != n or len(self.y) != n:
            raise ValueError("frames, x and y must have equal length")

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def first_frame(self) -> int:
        return int(self.frames[0])

    @property
    def last_frame(self) -> int:
        return int(self.frames[-1])

    @property
    def xy(self) -> np.ndarray:
        return np.column_stack([self.x, self.y])

    def translated(self, dx: float, dy: float) -> "Track":
        return Track(self.recording_id, self.track_id, self.frames, self.x + dx, self.y + dy)


@dataclass
class Recording:
    recording_id: int | None
    tracks: dict[int, Track]
    rejected: dict[int, str] = field(default_factory=dict)


def _normalize_angle(a: float) -> float:
    return a % TWO_PI


@dataclass(frozen=True)
class RoundaboutGeometry:
    """Four-armed roundabout described by circles around a center and angular port sectors.

    Each port sector is ``(start, end)`` in radians, read counterclockwise from
    ``start``; sectors may wrap through zero.  Membership is half-open
    ``[start, end)``.
    """

    center: tuple[float, float]
    outer_radius: float
    inner_radius: float
    gate_radius: float
    port_sectors: Mapping[str, tuple[float, float]]

    def __post_init__(self):
        if not (self.inner_radius > 0 and self.outer_radius > 0 and self.gate_radius > 0):
            raise ValueError("radii must be positive")
        if self.inner_radius >= self.gate_radius:
            raise ValueError("inner_radius must be smaller than gate_radius")
        if set(self.port_sectors) != set(PORTS):
            raise ValueError(f"port_sectors must define exactly {PORTS}")
        widths = {p: self._width(p) for p in PORTS}
        if sum(widths.values()) > TWO_PI + 1e-9:
            raise ValueError("port sectors cover more than the full circle")
        for i, p in enumerate(PORTS):
            for q in PORTS[i + 1:]:
                sp, sq = (_normalize_angle(self.port_sectors[k][0]) for k in (p, q))
                if (sq - sp) % TWO_PI < widths[p] - 1e-9 or (sp - sq) % TWO_PI < widths[q] - 1e-9:
                    raise ValueError(f"port sectors {p} and {q} overlap")

    def _width(self, port: str) -> float:
        start, end = self.port_sectors[port]
        w = (end - start) % TWO_PI
        if w == 0.0 and end != start:
            w = TWO_PI
        return w

    def port_center_angle(self, port: str) -> float:
        start, _ = self.port_sectors[port]
        return _normalize_angle(start + 0.5 * self._width(port))

    def port_half_width(self, port: str) -> float:
        return 0.5 * self._width(port)

    def sector_of(self, angle: float) -> str | None:
        """Port whose sector contains ``angle`` (radians), or None."""
        for port in PORTS:
            start, _ = self.port_sectors[port]
            if (angle - start) % TWO_PI < self._width(port):
                return port
        return None

    def translated(self, dx: float, dy: float) -> "RoundaboutGeometry":
        cx, cy = self.center
        return RoundaboutGeometry((cx + dx, cy + dy), self.outer_radius, self.inner_radius,
                                  self.gate_radius, dict(self.port_sectors))

    @classmethod
    def default(cls) -> "RoundaboutGeometry":
        """Symmetric synthetic roundabout: ports A..D centered at 0, 90, 180, 270 degrees."""
        q = math.pi / 4
        sectors = {p: (i * 2 * q - q, i * 2 * q + q) for i, p in enumerate(PORTS)}
        return cls(center=(0.0, 0.0), outer_radius=25.0, inner_radius=12.0,
                   gate_radius=32.0, port_sectors=sectors)

    @classmethod
    def from_mapping(cls, cfg: Mapping) -> "RoundaboutGeometry":
        try:
            sectors = {p: tuple(float(v) for v in cfg[f"port_{p}"]) for p in PORTS}
            return cls(center=(float(cfg["center_x"]), float(cfg["center_y"])),
                       outer_radius=float(cfg["outer_radius"]),
                       inner_radius=float(cfg["inner_radius"]),
                       gate_radius=float(cfg["gate_radius"]),
                       port_sectors=sectors)
        except KeyError as exc:
            raise ValueError(f"geometry config missing key {exc.args[0]!r}") from None

    @classmethod
    def from_file(cls, path: str | os.PathLike) -> "RoundaboutGeometry":
        with open(path) as fh:
            return cls.from_mapping(yaml.safe_load(fh))

    def to_mapping(self) -> dict:
        out = {"center_x": float(self.center[0]), "center_y": float(self.center[1]),
               "outer_radius": float(self.outer_radius), "inner_radius": float(self.inner_radius),
               "gate_radius": float(self.gate_radius)}
        for p in PORTS:
            out[f"port_{p}"] = [float(v) for v in self.port_sectors[p]]
        return out

    def to_file(self, path: str | os.PathLike) -> None:
        with open(path, "w") as fh:
            yaml.safe_dump(self.to_mapping(), fh, sort_keys=False)


@dataclass(frozen=True, order=True)
class Route:
    """Ordered (entry, exit) port pair; ``route_id`` enumerates the 12 pairs with entry != exit."""

    entry_port: str
    exit_port: str

    def __post_init__(self):
        if self.entry_port not in PORTS or self.exit_port not in PORTS:
            raise ValueError(f"unknown port in {self.entry_port}->{self.exit_port}")
        if self.entry_port == self.exit_port:
            raise ValueError("entry and exit port must differ")

    @property
    def route_id(self) -> int:
        i, j = PORTS.index(self.entry_port), PORTS.index(self.exit_port)
        return i * (len(PORTS) - 1) + (j - (j > i))

    @classmethod
    def from_id(cls, route_id: int) -> "Route":
        if not 0 <= route_id < N_ROUTES:
            raise ValueError(f"route id {route_id} outside 0..{N_ROUTES - 1}")
        i, k = divmod(int(route_id), len(PORTS) - 1)
        j = k + (k >= i)
        return cls(PORTS[i], PORTS[j])

    def __str__(self) -> str:
        return f"{self.entry_port}->{self.exit_port}"


def load_tracks(path: str | os.PathLike, recording_id: int | None = None) -> Recording:
    """Read a rounD-style ``*_tracks.csv`` into gap-free per-vehicle tracks.

    Extra columns are ignored.  Tracks with missing frames are rejected and
    listed in ``Recording.rejected``; rows of one track that are not in strictly
    increasing frame order raise :class:`TrackFormatError`.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such recording file: {path}")
    header = pd.read_csv(path, nrows=0).columns
    missing = [c for c in REQUIRED_COLUMNS if c not in header]
    if missing:
        raise TrackFormatError(f"{path.name}: missing required column(s) {missing}")
    df = pd.read_csv(path, usecols=list(REQUIRED_COLUMNS), float_precision="round_trip")
    if recording_id is not None:
        df = df[df["recordingId"] == recording_id]

    tracks: dict[int, Track] = {}
    rejected: dict[int, str] = {}
    for (rec, tid), g in df.groupby(["recordingId", "trackId"], sort=True):
        frames = g["frame"].to_numpy(dtype=np.int64)
        steps = np.diff(frames)
        if np.any(steps <= 0):
            raise TrackFormatError(f"{path.name}: track {tid} has non-monotone frames")
        if np.any(steps != 1):
            k = int(np.flatnonzero(steps != 1)[0])
            reason = f"frame gap {frames[k]}->{frames[k + 1]}"
            log.warning("rejecting track %s of %s: %s", tid, path.name, reason)
            rejected[int(tid)] = reason
            continue
        x = g["xCenter"].to_numpy(dtype=float)
        y = g["yCenter"].to_numpy(dtype=float)
        if not (np.isfinite(x).all() and np.isfinite(y).all()):
            rejected[int(tid)] = "non-finite position"
            continue
        tracks[int(tid)] = Track(int(rec), int(tid), frames, x, y)
    return Recording(recording_id, tracks, rejected)


def write_tracks(tracks, path: str | os.PathLike) -> None:
    """Write tracks in the rounD column layout (inverse of :func:`load_tracks`)."""
    frames = []
    for t in tracks:
        frames.append(pd.DataFrame({
            "recordingId": t.recording_id, "trackId": t.track_id, "frame": t.frames,
            "xCenter": t.x, "yCenter": t.y,
        }))
    df = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=REQUIRED_COLUMNS)
    df.to_csv(path, index=False)


def _crossing_angle(p0, p1, r0, r1, gate, center) -> float:
    f = (r0 - gate) / (r0 - r1)
    px = p0[0] + f * (p1[0] - p0[0]) - center[0]
    py = p0[1] + f * (p1[1] - p0[1]) - center[1]
    return math.atan2(py, px)


def swept_angle(track: Track, center) -> float:
    """Net unwrapped polar angle (radians) traversed around ``center``."""
    theta = np.unwrap(np.arctan2(track.y - center[1], track.x - center[0]))
    return float(abs(theta[-1] - theta[0]))


def classify_route(track: Track, geom: RoundaboutGeometry) -> Route:
    """Entry/exit route of a track from its gate-circle crossings.

    Entry is the sector of the first inward crossing of the gate circle, exit
    the sector of the last outward crossing.  Raises :class:`RouteRejected`
    for same-port trips, more than one full circle, or missing crossings.
    """
    if len(track) < 2:
        raise ValueError("track needs at least 2 frames")
    pts = track.xy
    cx, cy = geom.center
    r = np.hypot(pts[:, 0] - cx, pts[:, 1] - cy)
    inside = r <= geom.gate_radius
    tid = track.track_id
    if not inside.any():
        raise RouteRejected("never entered", tid)
    inward = np.flatnonzero(~inside[:-1] & inside[1:])
    outward = np.flatnonzero(inside[:-1] & ~inside[1:])
    if inward.size == 0:
        raise RouteRejected("no entry crossing", tid)
    if outward.size == 0:
        raise RouteRejected("no exit crossing", tid)
    i, k = inward[0], outward[-1]
    a_in = _crossing_angle(pts[i], pts[i + 1], r[i], r[i + 1], geom.gate_radius, geom.center)
    a_out = _crossing_angle(pts[k], pts[k + 1], r[k], r[k + 1], geom.gate_radius, geom.center)
    entry, exit_ = geom.sector_of(a_in), geom.sector_of(a_out)
    if entry is None or exit_ is None:
        raise RouteRejected("crossing outside port sectors", tid)
    if swept_angle(track, geom.center) > TWO_PI + FULL_CIRCLE_MARGIN:
        raise RouteRejected("multiple circles", tid)
    if entry == exit_:
        raise RouteRejected("same port", tid)
    return Route(entry, exit_)
