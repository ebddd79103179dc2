"""Two-vehicle scenario extraction, condition labels, normalization and splits."""
from __future__ import annotations

import io
import json
import logging
import os
import zipfile
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .ingest import N_ROUTES, SOURCE_FPS, RoundaboutGeometry, Route, RouteRejected, Track, classify_route

log = logging.getLogger(__name__)

MIN_TRACK_FRAMES = 250
MIN_OVERLAP_FRAMES = 100
WINDOW_LENGTH = 700
MIN_CATEGORY_COUNT = 300
DOWNSAMPLE_FACTOR = 3
N_CATEGORIES = N_ROUTES * (N_ROUTES + 1) // 2
SCHEMA_VERSION = 1


class WindowRejected(ValueError):
    """The two lifespans do not fit inside one scenario window."""


@dataclass(frozen=True)
class ConditionCategory:
    category_id: int
    route_low: int
    route_high: int


def encode_condition(route_a: int, route_b: int, n: int = N_ROUTES) -> ConditionCategory:
    """Order-insensitive triangular index of a route pair, in ``1..n(n+1)/2``."""
    for r in (route_a, route_b):
        if not 0 <= r < n:
            raise ValueError(f"route id {r} outside 0..{n - 1}")
    r1, r2 = sorted((int(route_a), int(route_b)))
    cid = r1 * (2 * n - r1 + 1) // 2 + (r2 - r1) + 1
    return ConditionCategory(cid, r1, r2)


def decode_condition(category_id: int, n: int = N_ROUTES) -> ConditionCategory:
    if not 1 <= category_id <= n * (n + 1) // 2:
        raise ValueError(f"category id {category_id} outside 1..{n * (n + 1) // 2}")
    k = category_id - 1
    r1 = 0
    while k >= n - r1:
        k -= n - r1
        r1 += 1
    return ConditionCategory(category_id, r1, r1 + k)


def describe_condition(category_id: int) -> str:
    c = decode_condition(category_id)
    return f"{Route.from_id(c.route_low)} | {Route.from_id(c.route_high)}"


@dataclass(frozen=True)
class Scenario:
    """Joint positions of two vehicles, columns ``(x1, y1, x2, y2)`` in meters."""

    positions: np.ndarray
    condition: ConditionCategory
    frame_origin: int = 0
    dt: float = 1.0 / SOURCE_FPS
    recording_id: int | None = None
    track_ids: tuple[int, int] | None = None

    def __post_init__(self):
        p = self.positions
        if p.ndim != 2 or p.shape[1] != 4:
            raise ValueError(f"positions must be T x 4, got {p.shape}")
        if not np.isfinite(p).all():
            raise ValueError("scenario positions must be finite")

    def __len__(self) -> int:
        return len(self.positions)

    def vehicle(self, k: int) -> np.ndarray:
        """T x 2 positions of vehicle ``k`` (1 or 2)."""
        return self.positions[:, 2 * (k - 1):2 * k]


def filter_short_tracks(tracks: Iterable[Track], min_frames: int = MIN_TRACK_FRAMES) -> list[Track]:
    return [t for t in tracks if len(t) >= min_frames]


def overlap_frames(a: Track, b: Track) -> int:
    return max(0, min(a.last_frame, b.last_frame) - max(a.first_frame, b.first_frame) + 1)


def pair_tracks(tracks: Iterable[Track], min_overlap: int = MIN_OVERLAP_FRAMES) -> list[tuple[Track, Track]]:
    """All unordered pairs sharing at least ``min_overlap`` frames, lower track id first."""
    ordered = sorted(tracks, key=lambda t: t.track_id)
    by_start = sorted(range(len(ordered)), key=lambda i: ordered[i].first_frame)
    pairs = []
    for pos, i in enumerate(by_start):
        a = ordered[i]
        for j in by_start[pos + 1:]:
            b = ordered[j]
            if b.first_frame > a.last_frame - min_overlap + 1:
                break
            if overlap_frames(a, b) >= min_overlap:
                pairs.append((a, b) if i < j else (b, a))
    pairs.sort(key=lambda p: (p[0].track_id, p[1].track_id))
    return pairs


def _edge_held(track: Track, window_frames: np.ndarray) -> np.ndarray:
    idx = np.clip(window_frames - track.first_frame, 0, len(track) - 1)
    return track.xy[idx]


def build_scenario(pair: tuple[Track, Track], routes: tuple[Route, Route],
                   window_length: int = WINDOW_LENGTH) -> Scenario:
    """Place both tracks in a window anchored at the earlier first frame.

    Frames before a vehicle appears or after it leaves repeat its first or last
    observed position.  Raises :class:`WindowRejected` when the combined span
    exceeds ``window_length``.
    """
    (a, ra), (b, rb) = sorted(zip(pair, routes), key=lambda p: p[0].track_id)
    start = min(a.first_frame, b.first_frame)
    span = max(a.last_frame, b.last_frame) - start + 1
    if span > window_length:
        raise WindowRejected(f"tracks {a.track_id},{b.track_id} span {span} > {window_length} frames")
    frames = np.arange(start, start + window_length)
    positions = np.hstack([_edge_held(a, frames), _edge_held(b, frames)])
    return Scenario(positions, encode_condition(ra.route_id, rb.route_id), start,
                    1.0 / SOURCE_FPS, a.recording_id, (a.track_id, b.track_id))


def filter_rare_categories(scenarios: Sequence[Scenario],
                           min_count: int = MIN_CATEGORY_COUNT) -> list[Scenario]:
    counts = Counter(s.condition.category_id for s in scenarios)
    return [s for s in scenarios if counts[s.condition.category_id] >= min_count]


def downsample(scenario: Scenario, factor: int = DOWNSAMPLE_FACTOR,
               expected_length: int | None = WINDOW_LENGTH) -> Scenario:
    """Keep every ``factor``-th row starting at row 0 (700 -> 234 rows for factor 3)."""
    if factor < 1:
        raise ValueError("factor must be >= 1")
    if expected_length is not None and len(scenario) != expected_length:
        raise ValueError(f"expected {expected_length} rows, got {len(scenario)}")
    if factor == 1:
        return scenario
    return replace(scenario, positions=scenario.positions[::factor].copy(), dt=scenario.dt * factor)


@dataclass(frozen=True)
class NormalizationStats:
    """Isotropic affine map: ``(p - center_offset) / scale`` on every (x, y) pair."""

    center_offset: tuple[float, float]
    scale: float

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("scale must be positive")

    def _offset(self, width: int) -> np.ndarray:
        return np.tile(np.asarray(self.center_offset, dtype=float), width // 2)

    def apply(self, positions: np.ndarray) -> np.ndarray:
        positions = np.asarray(positions, dtype=float)
        return (positions - self._offset(positions.shape[-1])) / self.scale

    def invert(self, normalized: np.ndarray) -> np.ndarray:
        normalized = np.asarray(normalized, dtype=float)
        return normalized * self.scale + self._offset(normalized.shape[-1])

    def to_dict(self) -> dict:
        return {"center_offset": [float(v) for v in self.center_offset], "scale": float(self.scale)}

    @classmethod
    def from_dict(cls, d: dict) -> "NormalizationStats":
        return cls(tuple(float(v) for v in d["center_offset"]), float(d["scale"]))


def _as_array(scenarios) -> np.ndarray:
    if isinstance(scenarios, np.ndarray):
        return scenarios
    return np.stack([s.positions for s in scenarios])


def fit_normalization(train, center: tuple[float, float] | None = None) -> NormalizationStats:
    """Center on ``center`` (default: pooled coordinate mean) and scale by the pooled std."""
    arr = _as_array(train) if len(train) else np.empty((0, 0, 4))
    if arr.size == 0:
        raise ValueError("cannot fit normalization on an empty training set")
    pts = arr.reshape(-1, 2)
    if center is None:
        center = tuple(float(v) for v in pts.mean(axis=0))
    scale = float(np.std(pts - np.asarray(center)))
    if not scale > 0:
        raise ValueError("training positions have zero variance")
    return NormalizationStats((float(center[0]), float(center[1])), scale)


@dataclass(frozen=True)
class DatasetSplit:
    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray
    seed: int


def split_dataset(n_or_scenarios, seed: int) -> DatasetSplit:
    """Random 70/15/15 split; train and validation sizes are floored, test takes the rest."""
    n = n_or_scenarios if isinstance(n_or_scenarios, (int, np.integer)) else len(n_or_scenarios)
    if n < 10:
        raise ValueError(f"need at least 10 scenarios to split, got {n}")
    perm = np.random.default_rng(seed).permutation(n)
    n_train, n_val = n * 70 // 100, n * 15 // 100
    return DatasetSplit(np.sort(perm[:n_train]), np.sort(perm[n_train:n_train + n_val]),
                        np.sort(perm[n_train + n_val:]), int(seed))


@dataclass(frozen=True)
class ExtractionParams:
    min_track_frames: int = MIN_TRACK_FRAMES
    min_overlap: int = MIN_OVERLAP_FRAMES
    window_length: int = WINDOW_LENGTH
    min_category_count: int = MIN_CATEGORY_COUNT
    downsample_factor: int = DOWNSAMPLE_FACTOR

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if int(value) != value or value <= 0:
                raise ValueError(f"extraction parameter {name} must be a positive integer")


@dataclass
class ExtractionReport:
    track_stages: dict[str, int] = field(default_factory=dict)
    scenario_stages: dict[str, int] = field(default_factory=dict)
    route_rejections: dict[str, int] = field(default_factory=dict)
    window_rejections: int = 0
    n_scenarios: int = 0
    n_categories: int = 0

    def to_dict(self) -> dict:
        return {"track_stages": self.track_stages, "scenario_stages": self.scenario_stages,
                "route_rejections": self.route_rejections,
                "window_rejections": self.window_rejections,
                "n_scenarios": self.n_scenarios, "n_categories": self.n_categories}


def extract_scenarios(recordings, geom: RoundaboutGeometry,
                      params: ExtractionParams = ExtractionParams()) -> tuple[list[Scenario], ExtractionReport]:
    """Run the full filter chain over loaded recordings and downsample the survivors.

    ``recordings`` is an iterable of :class:`~roundgen.ingest.Recording`.
    """
    stages = Counter()
    rejections = Counter()
    windows_rejected = 0
    scenarios: list[Scenario] = []
    for rec in recordings:
        stages["tracks_read"] += len(rec.tracks) + len(rec.rejected)
        stages["tracks_gap_free"] += len(rec.tracks)
        tracks = filter_short_tracks(rec.tracks.values(), params.min_track_frames)
        stages["tracks_long_enough"] += len(tracks)

        routes: dict[int, Route | None] = {}
        for t in tracks:
            try:
                routes[t.track_id] = classify_route(t, geom)
            except RouteRejected as exc:
                routes[t.track_id] = None
                rejections[exc.reason] += 1
        stages["tracks_routed"] += sum(r is not None for r in routes.values())

        pairs = pair_tracks(tracks, params.min_overlap)
        stages["pairs_overlapping"] += len(pairs)
        for a, b in pairs:
            ra, rb = routes[a.track_id], routes[b.track_id]
            if ra is None or rb is None:
                continue
            stages["pairs_routed"] += 1
            try:
                s = build_scenario((a, b), (ra, rb), params.window_length)
            except WindowRejected:
                windows_rejected += 1
                continue
            scenarios.append(downsample(s, params.downsample_factor, params.window_length))

    stages["scenarios_in_window"] = len(scenarios)
    kept = filter_rare_categories(scenarios, params.min_category_count)
    stages["scenarios_common_category"] = len(kept)

    report = ExtractionReport(
        track_stages={k: stages[k] for k in ("tracks_read", "tracks_gap_free",
                                             "tracks_long_enough", "tracks_routed")},
        scenario_stages={k: stages[k] for k in ("pairs_overlapping", "pairs_routed",
                                                "scenarios_in_window", "scenarios_common_category")},
        route_rejections=dict(sorted(rejections.items())),
        window_rejections=windows_rejected,
        n_scenarios=len(kept),
        n_categories=len({s.condition.category_id for s in kept}),
    )
    log.info("extracted %d scenarios in %d categories", report.n_scenarios, report.n_categories)
    return kept, report


@dataclass
class ScenarioDataset:
    """Meter-space scenario tensor with labels, split and normalization."""

    positions: np.ndarray
    conditions: np.ndarray
    split: DatasetSplit
    stats: NormalizationStats
    dt: float
    frame_origins: np.ndarray | None = None
    recording_ids: np.ndarray | None = None
    track_ids: np.ndarray | None = None
    manifest: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.positions)

    @classmethod
    def from_scenarios(cls, scenarios: Sequence[Scenario], seed: int, center=None,
                       manifest: dict | None = None) -> "ScenarioDataset":
        if not scenarios:
            raise ValueError("no scenarios to build a dataset from")
        positions = np.stack([s.positions for s in scenarios]).astype(np.float64)
        split = split_dataset(len(scenarios), seed)
        stats = fit_normalization(positions[split.train], center)
        return cls(
            positions=positions,
            conditions=np.array([s.condition.category_id for s in scenarios], dtype=np.int64),
            split=split, stats=stats, dt=float(scenarios[0].dt),
            frame_origins=np.array([s.frame_origin for s in scenarios], dtype=np.int64),
            recording_ids=np.array([-1 if s.recording_id is None else s.recording_id
                                    for s in scenarios], dtype=np.int64),
            track_ids=np.array([s.track_ids or (-1, -1) for s in scenarios], dtype=np.int64),
            manifest=dict(manifest or {}),
        )

    def normalized(self, part: str | None = None) -> np.ndarray:
        idx = slice(None) if part is None else getattr(self.split, part)
        return self.stats.apply(self.positions[idx])

    def subset(self, part: str) -> tuple[np.ndarray, np.ndarray]:
        idx = getattr(self.split, part)
        return self.positions[idx], self.conditions[idx]

    def scenario(self, i: int) -> Scenario:
        tids = None if self.track_ids is None else tuple(int(v) for v in self.track_ids[i])
        return Scenario(self.positions[i], decode_condition(int(self.conditions[i])),
                        0 if self.frame_origins is None else int(self.frame_origins[i]),
                        self.dt,
                        None if self.recording_ids is None else int(self.recording_ids[i]), tids)

    def save(self, path: str | os.PathLike) -> None:
        """Write an ``.npz`` container; byte-identical for identical content."""
        manifest = {"schema_version": SCHEMA_VERSION, **self.manifest,
                    "dt": self.dt, "split_seed": self.split.seed,
                    "normalization": self.stats.to_dict()}
        arrays = {
            "positions": self.positions.astype(np.float64),
            "conditions": self.conditions.astype(np.int64),
            "split_train": self.split.train, "split_validation": self.split.validation,
            "split_test": self.split.test,
            "manifest": np.frombuffer(json.dumps(manifest, sort_keys=True).encode(), dtype=np.uint8),
        }
        for name in ("frame_origins", "recording_ids", "track_ids"):
            value = getattr(self, name)
            if value is not None:
                arrays[name] = value
        with zipfile.ZipFile(path, "w", zipfile.ZIP_DEFLATED) as zf:
            for name, arr in arrays.items():
                buf = io.BytesIO()
                np.lib.format.write_array(buf, np.ascontiguousarray(arr), allow_pickle=False)
                info = zipfile.ZipInfo(f"{name}.npy", date_time=(1980, 1, 1, 0, 0, 0))
                info.compress_type = zipfile.ZIP_DEFLATED
                zf.writestr(info, buf.getvalue())

    @classmethod
    def load(cls, path: str | os.PathLike) -> "ScenarioDataset":
        with np.load(path, allow_pickle=False) as z:
            manifest = json.loads(z["manifest"].tobytes().decode())
            if manifest.get("schema_version") != SCHEMA_VERSION:
                raise ValueError(f"unsupported dataset schema {manifest.get('schema_version')}")
            split = DatasetSplit(z["split_train"], z["split_validation"], z["split_test"],
                                 int(manifest.pop("split_seed")))
            stats = NormalizationStats.from_dict(manifest.pop("normalization"))
            dt = float(manifest.pop("dt"))
            manifest.pop("schema_version")
            optional = {k: z[k] if k in z.files else None
                        for k in ("frame_origins", "recording_ids", "track_ids")}
            return cls(z["positions"], z["conditions"], split, stats, dt, manifest=manifest, **optional)
