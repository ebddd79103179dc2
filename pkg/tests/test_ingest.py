import math

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from roundgen.ingest import (
    N_ROUTES,
    PORTS,
    RoundaboutGeometry,
    Route,
    RouteRejected,
    Track,
    TrackFormatError,
    classify_route,
    load_tracks,
    write_tracks,
)
from roundgen.synthetic import drive, generate_synthetic_recording, route_path

from .conftest import polar_track


def _csv(tmp_path, rows, columns=("recordingId", "trackId", "frame", "xCenter", "yCenter")):
    path = tmp_path / "00_tracks.csv"
    pd.DataFrame(rows, columns=list(columns)).to_csv(path, index=False)
    return path


def test_load_two_tracks(tmp_path):
    rows = [(0, 1, f, 0.1 * f, 1.0) for f in range(300)]
    rows += [(0, 2, f, 2.0, -0.2 * f) for f in range(100, 600)]
    rec = load_tracks(_csv(tmp_path, rows), recording_id=0)
    assert sorted(rec.tracks) == [1, 2]
    assert [len(rec.tracks[k]) for k in (1, 2)] == [300, 500]
    assert not rec.rejected


def test_frame_gap_rejects_only_that_track(tmp_path):
    rows = [(0, 1, f, 0.0, 0.0) for f in list(range(0, 11)) + list(range(12, 40))]
    rows += [(0, 2, f, 1.0, 1.0) for f in range(50)]
    rec = load_tracks(_csv(tmp_path, rows))
    assert list(rec.tracks) == [2]
    assert "10->12" in rec.rejected[1]


def test_extra_columns_ignored(tmp_path):
    cols = ("recordingId", "trackId", "frame", "xCenter", "yCenter", "heading", "lonVelocity")
    rows = [(3, 7, f, float(f), 2.0, 0.0, 1.0) for f in range(5)]
    rec = load_tracks(_csv(tmp_path, rows, cols))
    np.testing.assert_array_equal(rec.tracks[7].x, np.arange(5.0))
    assert rec.tracks[7].recording_id == 3


def test_load_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_tracks(tmp_path / "nope.csv")
    bad = _csv(tmp_path, [(0, 1, 0, 0.0)], ("recordingId", "trackId", "frame", "xCenter"))
    with pytest.raises(TrackFormatError, match="yCenter"):
        load_tracks(bad)
    unordered = _csv(tmp_path, [(0, 1, 5, 0.0, 0.0), (0, 1, 4, 0.0, 0.0)])
    with pytest.raises(TrackFormatError, match="non-monotone"):
        load_tracks(unordered)


def test_synthetic_csv_round_trip(tmp_path, geom):
    rec = generate_synthetic_recording(geom, 15, seed=3)
    path = tmp_path / "00_tracks.csv"
    write_tracks(rec.tracks.values(), path)
    back = load_tracks(path)
    assert back.tracks.keys() == rec.tracks.keys()
    for tid, t in rec.tracks.items():
        u = back.tracks[tid]
        np.testing.assert_array_equal(u.frames, t.frames)
        np.testing.assert_array_equal(u.x, t.x)
        np.testing.assert_array_equal(u.y, t.y)


def test_route_id_bijection():
    ids = [Route(a, b).route_id for a in PORTS for b in PORTS if a != b]
    assert sorted(ids) == list(range(N_ROUTES))
    for i in range(N_ROUTES):
        assert Route.from_id(i).route_id == i
    with pytest.raises(ValueError):
        Route("A", "A")
    with pytest.raises(ValueError):
        Route.from_id(12)


def test_classify_scripted_c_to_b(geom):
    # C is the west arm (pi), B the north arm (pi/2); counterclockwise C -> B sweeps 3pi/2
    track = polar_track(math.pi, 1.5 * math.pi)
    assert classify_route(track, geom) == Route("C", "B")


def test_classify_rejects_multiple_circles(geom):
    with pytest.raises(RouteRejected) as exc:
        classify_route(polar_track(math.pi, 3 * math.pi), geom)
    assert exc.value.reason == "multiple circles"


@pytest.mark.parametrize("sweep", [0.2, 2 * math.pi + 0.2])
def test_classify_rejects_same_port(geom, sweep):
    with pytest.raises(RouteRejected) as exc:
        classify_route(polar_track(-0.1, sweep), geom)
    assert exc.value.reason == "same port"


def test_classify_never_entered(geom):
    t = Track(0, 1, np.arange(10), np.linspace(100, 120, 10), np.full(10, 80.0))
    with pytest.raises(RouteRejected) as exc:
        classify_route(t, geom)
    assert exc.value.reason == "never entered"


def test_geometry_validation():
    good = {p: (i * math.pi / 2 - 0.5, i * math.pi / 2 + 0.5) for i, p in enumerate(PORTS)}
    RoundaboutGeometry((0, 0), 25, 12, 32, good)
    with pytest.raises(ValueError, match="overlap"):
        RoundaboutGeometry((0, 0), 25, 12, 32, {**good, "B": (0.2, 0.6)})
    with pytest.raises(ValueError, match="full circle"):
        RoundaboutGeometry((0, 0), 25, 12, 32, {**good, "B": (0.6, 6.0)})
    with pytest.raises(ValueError):
        RoundaboutGeometry((0, 0), 25, 40, 32, good)


def test_geometry_file_round_trip(tmp_path, geom):
    geom.to_file(tmp_path / "g.yaml")
    assert RoundaboutGeometry.from_file(tmp_path / "g.yaml") == geom


@settings(max_examples=40, deadline=None)
@given(dx=st.floats(-1e4, 1e4), dy=st.floats(-1e4, 1e4), route_id=st.integers(0, N_ROUTES - 1))
def test_classify_translation_invariant(dx, dy, route_id):
    geom = RoundaboutGeometry.default()
    route = Route.from_id(route_id)
    path = route_path(geom, route, 20.0, 20.0)
    xy = path.positions(drive(path, 10.0, 6.0, 10.0))
    t = Track(0, 1, np.arange(len(xy)), xy[:, 0], xy[:, 1])
    assert classify_route(t, geom) == route
    assert classify_route(t.translated(dx, dy), geom.translated(dx, dy)) == route


def test_synthetic_deterministic(geom):
    a = generate_synthetic_recording(geom, 2, seed=7)
    b = generate_synthetic_recording(geom, 2, seed=7)
    assert a.routes == b.routes
    for tid in a.tracks:
        for field in ("frames", "x", "y"):
            assert getattr(a.tracks[tid], field).tobytes() == getattr(b.tracks[tid], field).tobytes()


def test_synthetic_routes_recovered(geom):
    rec = generate_synthetic_recording(geom, 300, seed=11)
    assert all(classify_route(t, geom) == rec.routes[tid] for tid, t in rec.tracks.items())


def test_synthetic_speeds_within_bounds(geom):
    lo, hi = 5.0, 12.0
    rec = generate_synthetic_recording(geom, 40, seed=5, speed_range=(lo, hi))
    lane = 0.5 * (geom.inner_radius + geom.outer_radius)
    for t in rec.tracks.values():
        speed = np.hypot(np.diff(t.x), np.diff(t.y)) * 25.0
        r = np.hypot(t.x, t.y)
        on_arc = np.isclose(r[:-1], lane) & np.isclose(r[1:], lane)
        assert on_arc.sum() > 10
        assert np.all(speed[on_arc] >= lo * (1 - 1e-3))
        assert np.all(speed[on_arc] <= hi * (1 + 1e-9))
        assert np.all(speed <= hi * (1 + 1e-9))
