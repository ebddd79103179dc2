import csv
import json

import numpy as np
import pytest
import yaml

from roundgen.cli import main
from roundgen.config import DATA_ROOT_ENV, ConfigError, RunConfig
from roundgen.extract import ScenarioDataset
from roundgen.scenario_io import read_scenario_csv

SMALL_MODEL = dict(attention_head_size=8, feedforward_dim=16, attention_heads=2, condition_embedding_dim=4,
                   conv_channels=8, recurrent_hidden=8, transformer_blocks=1, dropout=0.0, latent_dim=4)


def _config(tmp_path, **over):
    raw = {
        "paths": {"data_root": "data", "dataset": "work/ds.npz", "artifact_dir": "work/model",
                  "report_dir": "work/report"},
        "extraction": {"min_category_count": 2},
        "model": SMALL_MODEL,
        "train": {"epochs": 2, "batch_size": 16, "learning_rate": 1e-3},
        "seed": 3,
        **over,
    }
    path = tmp_path / "run.yaml"
    path.write_text(yaml.safe_dump(raw))
    return str(path)


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("cli")
    cfg = _config(tmp)
    assert main(["synth", "--config", cfg, "--recordings", "2", "--vehicles", "60"]) == 0
    assert main(["extract", "--config", cfg]) == 0
    assert main(["train", "--config", cfg]) == 0
    return tmp, cfg


def test_synth_deterministic(tmp_path):
    cfg = _config(tmp_path)
    for out in ("a", "b"):
        assert main(["--config", cfg, "synth", "--vehicles", "20", "--out", str(tmp_path / out)]) == 0
    for name in ("00_tracks.csv", "00_routes.csv", "geometry.yaml"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert main(["synth", "--config", cfg, "--seed", "4", "--vehicles", "20", "--out", str(tmp_path / "c")]) == 0
    assert (tmp_path / "a" / "00_tracks.csv").read_bytes() != (tmp_path / "c" / "00_tracks.csv").read_bytes()


def test_extract_outputs(pipeline):
    tmp, cfg = pipeline
    ds = ScenarioDataset.load(tmp / "work" / "ds.npz")
    assert ds.positions.shape[1:] == (234, 4)
    assert ds.manifest["source_recordings"] == ["00_tracks.csv", "01_tracks.csv"]
    report = json.loads((tmp / "work" / "ds.report.json").read_text())
    assert report["n_scenarios"] == len(ds.positions)
    before = (tmp / "work" / "ds.npz").read_bytes()
    assert main(["extract", "--config", cfg]) == 0
    assert (tmp / "work" / "ds.npz").read_bytes() == before


def test_train_artifact(pipeline):
    tmp, _ = pipeline
    with open(tmp / "work" / "model" / "history.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["epoch"] for r in rows] == ["0", "1"]
    assert not (tmp / "work" / "model" / ".lock").exists()


def test_generate(pipeline):
    tmp, cfg = pipeline
    ds = ScenarioDataset.load(tmp / "work" / "ds.npz")
    cond = ds.subset("train")[1][0]
    unseen = min(set(range(1, 79)) - set(ds.conditions.tolist()))
    out = tmp / "gen"
    assert main(["generate", "--config", cfg, "--condition", str(cond), "--count", "3", "--out", str(out)]) == 0
    s = read_scenario_csv(out / "scenario_0002.csv")
    assert s.positions.shape == (234, 4)
    assert s.condition.category_id == cond
    assert s.dt == pytest.approx(0.12)
    assert main(["generate", "--config", cfg, "--condition", str(unseen), "--count", "3"]) == 1


def test_evaluate_and_traverse(pipeline):
    tmp, cfg = pipeline
    ds_path = str(tmp / "work" / "ds.npz")
    out = tmp / "eval"
    assert main(["evaluate", "--config", cfg, "--set-a", ds_path, "--reconstruct", "--out", str(out)]) == 0
    for name in ("kpi_a.csv", "kpi_b.csv", "rmse.csv", "pet_hist_a.csv", "kpi_summary.json"):
        assert (out / name).is_file()
    cond = ScenarioDataset.load(ds_path).subset("train")[1][0]
    trav = tmp / "trav"
    assert main(["traverse", "--config", cfg, "--condition", str(cond), "--out", str(trav)]) == 0
    assert sorted(p.name for p in trav.glob("traversal_dim*.csv")) == [f"traversal_dim{k}.csv" for k in range(4)]
    assert main(["traverse", "--config", cfg, "--condition", str(cond), "--dims", "25"]) == 1


def test_exit_codes(tmp_path):
    cfg = _config(tmp_path)
    assert main(["extract", "--config", cfg]) == 1  # no recordings
    assert main(["train", "--config", cfg]) == 1  # no dataset
    assert main(["generate", "--config", str(tmp_path / "missing.yaml"), "--condition", "1"]) == 1
    with pytest.raises(SystemExit) as exc:
        main(["bogus"])
    assert exc.value.code == 1


def test_config_errors_and_env_override(tmp_path, monkeypatch):
    with pytest.raises(ConfigError):
        RunConfig.from_mapping({"trian": {}})
    with pytest.raises(ConfigError):
        RunConfig.from_mapping({"model": {"latent_dim": 0}})
    monkeypatch.setenv(DATA_ROOT_ENV, str(tmp_path / "elsewhere"))
    assert RunConfig.load(_config(tmp_path)).data_root == (tmp_path / "elsewhere").resolve()


def test_data_root_env_used_by_commands(tmp_path, monkeypatch):
    monkeypatch.setenv(DATA_ROOT_ENV, str(tmp_path / "env_data"))
    assert main(["synth", "--config", _config(tmp_path), "--vehicles", "5"]) == 0
    assert (tmp_path / "env_data" / "00_tracks.csv").is_file()
    assert np.loadtxt(tmp_path / "env_data" / "00_routes.csv", delimiter=",", skiprows=1,
                      usecols=0).size == 5
