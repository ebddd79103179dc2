import hashlib
import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from roundgen.extract import (
    ExtractionParams,
    NormalizationStats,
    Scenario,
    ScenarioDataset,
    WindowRejected,
    build_scenario,
    decode_condition,
    downsample,
    encode_condition,
    extract_scenarios,
    filter_rare_categories,
    filter_short_tracks,
    fit_normalization,
    pair_tracks,
    split_dataset,
)
from roundgen.ingest import Recording, Route, Track
from roundgen.synthetic import generate_synthetic_recording


def _track(tid, first, last, x0=0.0):
    n = last - first + 1
    f = np.arange(first, last + 1)
    return Track(0, tid, f, x0 + 0.1 * np.arange(n), 0.05 * np.arange(n))


def _scenario(cat, n=700, seed=0):
    pos = np.random.default_rng(seed).normal(size=(n, 4))
    return Scenario(pos, decode_condition(cat))


# --- condition encoding -------------------------------------------------------

def test_condition_encoding_matches_enumeration():
    # oracle: number unordered pairs (r1 <= r2) lexicographically from 1
    expected = {pair: k for k, pair in enumerate(itertools.combinations_with_replacement(range(12), 2), 1)}
    assert len(expected) == 78
    for (a, b), k in expected.items():
        assert encode_condition(a, b).category_id == k
        assert encode_condition(b, a).category_id == k
        assert decode_condition(k) == encode_condition(a, b)


def test_condition_encoding_endpoints():
    assert encode_condition(0, 0).category_id == 1
    assert encode_condition(11, 11).category_id == 78
    assert encode_condition(3, 7) == encode_condition(7, 3)
    with pytest.raises(ValueError):
        encode_condition(12, 0)
    with pytest.raises(ValueError):
        decode_condition(79)


# --- track filters and pairing --------------------------------------------------

def test_filter_short_tracks_boundary():
    assert filter_short_tracks([_track(1, 0, 248)]) == []
    kept = filter_short_tracks([_track(1, 0, 249)])
    assert len(kept) == 1 and len(kept[0]) == 250
    assert filter_short_tracks([]) == []


def _overlap_oracle(a, b):
    return len(set(range(a[0], a[1] + 1)) & set(range(b[0], b[1] + 1)))


def test_pair_overlap_examples():
    assert _overlap_oracle((0, 500), (450, 900)) == 51
    assert pair_tracks([_track(1, 0, 500), _track(2, 450, 900)]) == []
    assert _overlap_oracle((0, 500), (300, 900)) == 201
    (a, b), = pair_tracks([_track(2, 300, 900), _track(1, 0, 500)])
    assert (a.track_id, b.track_id) == (1, 2)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 1500), st.integers(1, 800)), min_size=0, max_size=12))
def test_pairing_matches_interval_oracle(spans):
    tracks = [_track(i + 1, s, s + d) for i, (s, d) in enumerate(spans)]
    got = {(a.track_id, b.track_id) for a, b in pair_tracks(tracks)}
    want = {(i + 1, j + 1) for i, j in itertools.combinations(range(len(spans)), 2)
            if _overlap_oracle((spans[i][0], sum(spans[i])), (spans[j][0], sum(spans[j]))) >= 100}
    assert got == want
    assert all(a != b for a, b in got)


# --- scenario windows -----------------------------------------------------------

ROUTES = (Route("C", "B"), Route("B", "D"))


def test_build_scenario_edge_hold():
    a, b = _track(1, 0, 600), _track(2, 100, 650, x0=5.0)
    s = build_scenario((a, b), ROUTES)
    assert s.positions.shape == (700, 4)
    assert np.all(s.positions[601:, 0] == a.x[-1]) and np.all(s.positions[601:, 1] == a.y[-1])
    assert np.all(s.positions[:100, 2] == b.x[0])
    assert s.frame_origin == 0


def test_build_scenario_full_window_has_no_padding():
    a, b = _track(1, 0, 699), _track(2, 0, 699, x0=3.0)
    s = build_scenario((a, b), ROUTES)
    np.testing.assert_array_equal(s.positions, np.column_stack([a.x, a.y, b.x, b.y]))


def test_build_scenario_direct_lookup(geom):
    rec = generate_synthetic_recording(geom, 30, seed=2)
    pairs = pair_tracks(rec.tracks.values())
    checked = 0
    for a, b in pairs:
        try:
            s = build_scenario((a, b), (rec.routes[a.track_id], rec.routes[b.track_id]))
        except WindowRejected:
            continue
        for k, t in enumerate((a, b)):
            rows = t.frames - s.frame_origin
            np.testing.assert_array_equal(s.positions[rows, 2 * k], t.x)
            np.testing.assert_array_equal(s.positions[rows, 2 * k + 1], t.y)
        checked += 1
    assert checked > 0


def test_build_scenario_slot_order_and_condition():
    a, b = _track(7, 0, 300), _track(3, 50, 400)
    s = build_scenario((a, b), (Route("A", "B"), Route("C", "D")))
    assert s.track_ids == (3, 7)
    np.testing.assert_array_equal(s.positions[50:401, 0], b.x)
    assert s.condition == encode_condition(Route("A", "B").route_id, Route("C", "D").route_id)


def test_build_scenario_rejects_long_span():
    with pytest.raises(WindowRejected):
        build_scenario((_track(1, 0, 400), _track(2, 300, 700)), ROUTES)


# --- category filter, downsampling ------------------------------------------------

def test_filter_rare_categories():
    scen = [_scenario(5, n=3)] * 299 + [_scenario(9, n=3)] * 300
    kept = filter_rare_categories(scen)
    assert len(kept) == 300 and all(s.condition.category_id == 9 for s in kept)
    assert filter_rare_categories([]) == []


def test_downsample():
    s = _scenario(1)
    d = downsample(s, 3)
    assert len(d) == 234
    assert d.dt == pytest.approx(0.12, abs=1e-15)
    np.testing.assert_array_equal(d.positions, s.positions[[0, 3, 696, 699][:2] + list(range(6, 700, 3))])
    assert downsample(s, 1) is s
    with pytest.raises(ValueError):
        downsample(_scenario(1, n=600))


def test_downsample_interpolation_bound(geom):
    rec = generate_synthetic_recording(geom, 12, seed=4)
    for t in rec.tracks.values():
        xy = t.xy
        n = len(xy)
        keep = np.arange(0, n, 3)
        back = np.column_stack([np.interp(np.arange(n), keep, xy[keep, k]) for k in range(2)])
        step = np.linalg.norm(xy[3:] - xy[:-3], axis=1).max()
        assert np.linalg.norm(back - xy, axis=1).max() <= step + 1e-12


# --- normalization and splits -------------------------------------------------------

def test_normalization_round_trip_and_std():
    rng = np.random.default_rng(0)
    pos = rng.normal(20.0, 30.0, size=(16, 234, 4))
    stats = fit_normalization(pos, center=(1.5, -2.0))
    assert stats.center_offset == (1.5, -2.0)
    assert np.abs(stats.invert(stats.apply(pos)) - pos).max() < 1e-9
    assert np.std(stats.apply(pos)) == pytest.approx(1.0, abs=1e-6)


def test_normalization_zero_variance():
    with pytest.raises(ValueError, match="zero variance"):
        fit_normalization(np.zeros((2, 10, 4)), center=(0.0, 0.0))
    with pytest.raises(ValueError):
        fit_normalization(np.empty((0, 10, 4)))
    with pytest.raises(ValueError):
        NormalizationStats((0.0, 0.0), 0.0)


@pytest.mark.parametrize("n, sizes", [(1000, (700, 150, 150)), (30329, (21230, 4549, 4550)), (10, (7, 1, 2))])
def test_split_sizes(n, sizes):
    s = split_dataset(n, seed=1)
    assert (len(s.train), len(s.validation), len(s.test)) == sizes
    union = np.concatenate([s.train, s.validation, s.test])
    assert len(np.unique(union)) == n


def test_split_deterministic():
    a, b = split_dataset(500, 3), split_dataset(500, 3)
    for part in ("train", "validation", "test"):
        np.testing.assert_array_equal(getattr(a, part), getattr(b, part))
    assert not np.array_equal(a.train, split_dataset(500, 4).train)
    with pytest.raises(ValueError):
        split_dataset(9, 0)


# --- pipeline and container -----------------------------------------------------------

@pytest.fixture(scope="module")
def extracted():
    from roundgen.ingest import RoundaboutGeometry

    geom = RoundaboutGeometry.default()
    recs = [Recording(r, generate_synthetic_recording(geom, 40, seed=r, recording_id=r).tracks)
            for r in range(3)]
    return extract_scenarios(recs, geom, ExtractionParams(min_category_count=3))


def test_extraction_report_monotone(extracted):
    scenarios, report = extracted
    for stages in (report.track_stages, report.scenario_stages):
        counts = list(stages.values())
        assert counts == sorted(counts, reverse=True)
    assert report.n_scenarios == len(scenarios) > 0
    assert report.n_categories == len({s.condition.category_id for s in scenarios})
    for s in scenarios:
        assert s.positions.shape == (234, 4)
        assert np.isfinite(s.positions).all()
        assert s.dt == pytest.approx(0.12)


def test_dataset_container_round_trip(tmp_path, extracted):
    scenarios, _ = extracted
    ds = ScenarioDataset.from_scenarios(scenarios, seed=0, center=(0.0, 0.0),
                                        manifest={"source_recordings": ["a", "b"]})
    ds.save(tmp_path / "a.npz")
    ds.save(tmp_path / "b.npz")
    digest = [hashlib.sha256((tmp_path / f).read_bytes()).hexdigest() for f in ("a.npz", "b.npz")]
    assert digest[0] == digest[1]
    back = ScenarioDataset.load(tmp_path / "a.npz")
    np.testing.assert_array_equal(back.positions, ds.positions)
    assert back.positions.dtype == np.float64
    np.testing.assert_array_equal(back.conditions, ds.conditions)
    np.testing.assert_array_equal(back.split.test, ds.split.test)
    assert back.stats == ds.stats
    assert back.manifest == {"source_recordings": ["a", "b"]}
    assert back.scenario(0).track_ids == ds.scenario(0).track_ids
