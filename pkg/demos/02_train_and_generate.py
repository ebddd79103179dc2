"""Train a small CVAE-T on the demo dataset and sample new scenarios for one condition.

Needs the output of ``01_synthetic_to_dataset.py``.  The model is shrunk so
ten epochs take several minutes on one CPU core; the result is rough, not converged.
"""
import sys
from pathlib import Path

import numpy as np

from roundgen import ScenarioDataset
from roundgen.cvae import ModelConfig, TrainConfig, generate, reconstruct, train
from roundgen.analysis import rmse_report

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out")
ds = ScenarioDataset.load(out / "dataset.npz")
tr_pos, tr_cat = ds.subset("train")
va_pos, va_cat = ds.subset("validation")

model_cfg = ModelConfig(attention_head_size=32, feedforward_dim=128, recurrent_hidden=64,
                        conv_channels=32, positional_encoding=True)
train_cfg = TrainConfig(epochs=10, batch_size=16, learning_rate=1e-3, beta_warmup_epochs=5)

artifact = train(tr_pos, tr_cat, ds.stats, model_cfg, train_cfg, va_pos, va_cat, dt=ds.dt,
                 category_ids=ds.conditions,
                 progress=lambda row: print("epoch {epoch:>3}  beta {beta:.2f}  recon {train_recon:8.2f}  "
                                            "kl {train_kl:6.2f}".format(**row)) if row["epoch"] % 2 == 0 else None)
artifact.save(out / "model")
print(f"best epoch {artifact.best_epoch}, saved to {out / 'model'}")

te_pos, te_cat = ds.subset("test")
for axis, v1, v2, total in rmse_report(te_pos, reconstruct(artifact, te_pos, te_cat)).rows():
    print(f"test RMSE {axis:<12} vehicle 1 {v1:5.2f} m  vehicle 2 {v2:5.2f} m  total {total:5.2f} m")

common = int(np.bincount(tr_cat).argmax())
samples = generate(artifact, common, count=8, seed=0)
print(f"generated {samples.shape[0]} scenarios for category {common}; "
      f"start of vehicle 1 in the first: {samples[0, 0, :2].round(1)} m")
