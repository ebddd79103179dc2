"""Surrogate safety measures on original and generated scenarios.

Computes minimum TTC and PET for test scenarios and for samples drawn under
the same conditions, then prints the two PET histograms side by side.
Needs the outputs of the first two demos.
"""
import sys
from pathlib import Path

import numpy as np

from roundgen import RoundaboutGeometry, ScenarioDataset
from roundgen.analysis import kpi_distribution_compare
from roundgen.cvae import ModelArtifact, generate
from roundgen.kpi import evaluate_batch

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out")
geom = RoundaboutGeometry.default()
ds = ScenarioDataset.load(out / "dataset.npz")
artifact = ModelArtifact.load(out / "model")

pos, cat = ds.subset("test")
original = evaluate_batch(pos, ds.dt, geom)
generated_pos = np.concatenate([generate(artifact, int(c), 1, seed=i) for i, c in enumerate(cat)])
generated = evaluate_batch(generated_pos, artifact.dt, geom)

cmp = kpi_distribution_compare(original, generated)
print(f"undefined PET: original {cmp.undefined_pet[0]}, generated {cmp.undefined_pet[1]} of {len(cat)}")
print("PET bin [s]     original  generated")
for lo, hi, a, b in zip(cmp.edges[:-1], cmp.edges[1:], cmp.counts_a, cmp.counts_b):
    if a or b:
        print(f"{lo:5.1f}-{hi:<5.1f}     {a:>8}  {b:>9}")

critical = [r for r in original if r.critical]
print(f"{len(critical)} original scenarios have overlapping conflict-zone occupancy")
ttcs = [r.min_ttc for r in original if r.min_ttc is not None]
if ttcs:
    print(f"original min TTC: median {np.median(ttcs):.2f} s over {len(ttcs)} scenarios")
