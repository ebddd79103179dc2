"""From raw tracks to a training set.

Simulates a few recordings at the default roundabout, labels each vehicle's
route, pairs overlapping vehicles into fixed-length scenarios and saves the
normalized, split dataset.  Run: ``python demos/01_synthetic_to_dataset.py [outdir]``.
"""
import sys
from pathlib import Path

from roundgen import RoundaboutGeometry, ScenarioDataset, extract_scenarios, generate_synthetic_recording
from roundgen.extract import ExtractionParams, describe_condition
from roundgen.ingest import Recording

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out")
out.mkdir(exist_ok=True)
geom = RoundaboutGeometry.default()

recordings = []
for r in range(4):
    sim = generate_synthetic_recording(geom, 80, seed=r, recording_id=r)
    recordings.append(Recording(r, sim.tracks))
print(f"{sum(len(r.tracks) for r in recordings)} simulated vehicles in {len(recordings)} recordings")

# the real filter keeps categories with >= 300 scenarios; a toy corpus needs a lower bar
scenarios, report = extract_scenarios(recordings, geom, ExtractionParams(min_category_count=5))
for stage, count in {**report.track_stages, **report.scenario_stages}.items():
    print(f"  {stage:<28}{count:>6}")

counts = {}
for s in scenarios:
    counts[s.condition.category_id] = counts.get(s.condition.category_id, 0) + 1
for cid, n in sorted(counts.items(), key=lambda kv: -kv[1])[:5]:
    print(f"  category {cid:>2}: {n:>4} scenarios  ({describe_condition(cid)})")

ds = ScenarioDataset.from_scenarios(scenarios, seed=0, center=geom.center)
ds.save(out / "dataset.npz")
print(f"saved {len(ds.positions)} scenarios of shape {ds.positions.shape[1:]} "
      f"(train/val/test {len(ds.split.train)}/{len(ds.split.validation)}/{len(ds.split.test)}) "
      f"to {out / 'dataset.npz'}")
