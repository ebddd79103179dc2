"""Walk each latent dimension from -3 to 3 with the others at zero.

Prints how far each dimension moves the decoded trajectories, which is a
quick way to see which dimensions the model actually uses.  With matplotlib
installed it also writes one traversal figure per dimension.
"""
import sys
from pathlib import Path

import numpy as np

from roundgen import RoundaboutGeometry, ScenarioDataset
from roundgen.analysis import traversal_sweep, write_report_bundle
from roundgen.cvae import ModelArtifact

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out")
geom = RoundaboutGeometry.default()
artifact = ModelArtifact.load(out / "model")
condition = int(np.bincount(ScenarioDataset.load(out / "dataset.npz").subset("train")[1]).argmax())

grids = traversal_sweep(artifact, condition, geom=geom)
spread = {g.dimension_index: float(np.abs(g.scenarios[-1] - g.scenarios[0]).mean()) for g in grids}
for dim, d in sorted(spread.items(), key=lambda kv: -kv[1])[:5]:
    speeds = grids[dim].speeds[:, :, 0]
    mean_speed = np.nanmean(speeds, axis=1) if np.isfinite(speeds).any() else [float("nan")] * 5
    print(f"dim {dim:>2}: mean shift {d:5.2f} m between z=-3 and z=+3; "
          f"vehicle-1 ring speed {np.round(mean_speed, 1)} m/s")

try:
    import matplotlib  # noqa: F401
    plots = True
except ImportError:
    plots = False
written = write_report_bundle(out / "traversal", grids=grids, plots=plots, geom=geom)
print(f"wrote {len(written)} files to {out / 'traversal'}")
