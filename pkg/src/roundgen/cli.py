"""Command-line pipeline: synth -> extract -> train -> generate / evaluate / traverse.

Exit status is 0 on success, 1 for invalid arguments or configuration, 2 for
failures while running.
"""
from __future__ import annotations

import argparse
import contextlib
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import kpi_distribution_compare, rmse_report, traversal_sweep, write_report_bundle
from .config import ConfigError, RunConfig
from .cvae import ModelArtifact, UnknownConditionError, generate, reconstruct, train
from .extract import Scenario, ScenarioDataset, decode_condition, extract_scenarios
from .ingest import load_tracks, write_tracks
from .kpi import evaluate_batch, write_kpi_csv
from .scenario_io import read_scenario_set, write_scenario_set
from .synthetic import generate_synthetic_recording

log = logging.getLogger("roundgen")

EXIT_OK, EXIT_INVALID, EXIT_FAILED = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


@contextlib.contextmanager
def directory_lock(directory: Path):
    directory.mkdir(parents=True, exist_ok=True)
    lock = directory / ".lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise UsageError(f"{directory} is locked by another run ({lock})") from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        lock.unlink(missing_ok=True)


def _recording_files(root: Path) -> list[Path]:
    files = sorted(root.glob("*_tracks.csv"))
    if not files:
        raise UsageError(f"no *_tracks.csv recordings under {root}")
    return files


def cmd_synth(cfg: RunConfig, args) -> None:
    out = Path(args.out) if args.out else cfg.data_root
    if args.recordings < 1 or args.vehicles < 1:
        raise UsageError("--recordings and --vehicles must be >= 1")
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {out}: {exc}") from None
    if not os.access(out, os.W_OK):
        raise UsageError(f"output directory {out} is not writable")
    for r in range(args.recordings):
        rec = generate_synthetic_recording(cfg.geometry, args.vehicles, cfg.seed * 1000 + r,
                                           recording_id=r)
        write_tracks(rec.tracks.values(), out / f"{r:02d}_tracks.csv")
        with open(out / f"{r:02d}_routes.csv", "w") as fh:
            fh.write("trackId,entry,exit,route_id\n")
            for tid, route in rec.routes.items():
                fh.write(f"{tid},{route.entry_port},{route.exit_port},{route.route_id}\n")
    cfg.geometry.to_file(out / "geometry.yaml")
    log.info("wrote %d synthetic recordings to %s", args.recordings, out)


def cmd_extract(cfg: RunConfig, args) -> None:
    files = _recording_files(cfg.data_root)
    recordings = [load_tracks(f) for f in files]
    scenarios, report = extract_scenarios(recordings, cfg.geometry, cfg.extraction)
    if not scenarios:
        raise RuntimeError(f"no scenarios survived extraction: {json.dumps(report.to_dict())}")
    manifest = {"source_recordings": [f.name for f in files],
                "filters": cfg.extraction.__dict__}
    ds = ScenarioDataset.from_scenarios(scenarios, cfg.seed, center=cfg.geometry.center,
                                        manifest=manifest)
    cfg.dataset.parent.mkdir(parents=True, exist_ok=True)
    ds.save(cfg.dataset)
    with open(cfg.dataset.with_suffix(".report.json"), "w") as fh:
        json.dump(report.to_dict(), fh, indent=2)
    log.info("dataset: %d scenarios, %d categories -> %s", report.n_scenarios,
             report.n_categories, cfg.dataset)


def cmd_train(cfg: RunConfig, args) -> None:
    if not cfg.dataset.is_file():
        raise UsageError(f"dataset not found: {cfg.dataset} (run extract first)")
    train_cfg = cfg.train
    if args.epochs is not None:
        from dataclasses import replace

        train_cfg = replace(train_cfg, epochs=args.epochs)
    ds = ScenarioDataset.load(cfg.dataset)
    resume = ModelArtifact.load(cfg.artifact_dir) if args.resume else None
    with directory_lock(cfg.artifact_dir):
        tr_pos, tr_cond = ds.subset("train")
        va_pos, va_cond = ds.subset("validation")
        artifact = train(tr_pos, tr_cond, ds.stats, cfg.model, train_cfg, va_pos, va_cond,
                         resume=resume, dt=ds.dt, category_ids=ds.conditions,
                         progress=lambda row: log.info("epoch %(epoch)d beta %(beta).3f "
                                                       "train %(train_recon).4f/%(train_kl).4f", row))
        artifact.save(cfg.artifact_dir)
    log.info("best epoch %s (val loss %.5f) -> %s", artifact.best_epoch, artifact.best_val_loss,
             cfg.artifact_dir)


def _load_artifact(cfg: RunConfig) -> ModelArtifact:
    try:
        return ModelArtifact.load(cfg.artifact_dir)
    except FileNotFoundError as exc:
        raise UsageError(str(exc)) from None


def _check_condition(artifact: ModelArtifact, condition: int) -> None:
    if condition not in artifact.vocabulary:
        raise UsageError(f"condition {condition} not in trained vocabulary "
                         f"{artifact.vocabulary.category_ids}")


def cmd_generate(cfg: RunConfig, args) -> None:
    artifact = _load_artifact(cfg)
    _check_condition(artifact, args.condition)
    if args.count < 1:
        raise UsageError("--count must be >= 1")
    out = Path(args.out) if args.out else cfg.report_dir / f"generated_c{args.condition}"
    positions = generate(artifact, args.condition, args.count, cfg.seed)
    cond = decode_condition(args.condition)
    scenarios = [Scenario(p, cond, 0, artifact.dt) for p in positions]
    write_scenario_set(out, scenarios, {"condition": args.condition, "seed": cfg.seed,
                                        "dt": artifact.dt})
    log.info("wrote %d scenarios to %s", len(scenarios), out)


def _sample(positions, conditions, n, seed):
    if n is None or n >= len(positions):
        return positions, conditions
    idx = np.sort(np.random.default_rng(seed).choice(len(positions), n, replace=False))
    return positions[idx], conditions[idx]


def cmd_evaluate(cfg: RunConfig, args) -> None:
    if args.set_b is None and not args.reconstruct:
        raise UsageError("give --set-b or --reconstruct")
    for p in (args.set_a, args.set_b):
        if p is not None and not Path(p).exists():
            raise UsageError(f"input not found: {p}")
    pos_a, cond_a, dt_a = read_scenario_set(args.set_a, args.split)
    pos_a, cond_a = _sample(pos_a, cond_a, args.sample, cfg.seed)
    rmse = None
    if args.reconstruct:
        artifact = _load_artifact(cfg)
        pos_b, cond_b, dt_b = reconstruct(artifact, pos_a, cond_a), cond_a, dt_a
        rmse = rmse_report(pos_a, pos_b)
    else:
        pos_b, cond_b, dt_b = read_scenario_set(args.set_b, args.split)
        if args.paired:
            if pos_a.shape != pos_b.shape:
                raise UsageError(f"paired sets differ in shape: {pos_a.shape} vs {pos_b.shape}")
            rmse = rmse_report(pos_a, pos_b)
        else:
            pos_b, cond_b = _sample(pos_b, cond_b, args.sample, cfg.seed + 1)
    out = Path(args.out) if args.out else cfg.report_dir
    kpis = {}
    for label, pos, cond, dt in (("a", pos_a, cond_a, dt_a), ("b", pos_b, cond_b, dt_b)):
        kpis[label] = evaluate_batch(pos, dt, cfg.geometry,
                                     collision_distance=cfg.kpi.collision_distance,
                                     threshold=cfg.kpi.conflict_threshold)
        out.mkdir(parents=True, exist_ok=True)
        write_kpi_csv(out / f"kpi_{label}.csv", kpis[label], cond)
    comparison = kpi_distribution_compare(kpis["a"], kpis["b"], cfg.kpi.pet_bin_width)
    write_report_bundle(out, rmse=rmse, comparison=comparison, plots=args.plots, geom=cfg.geometry)
    log.info("report written to %s", out)


def cmd_traverse(cfg: RunConfig, args) -> None:
    artifact = _load_artifact(cfg)
    _check_condition(artifact, args.condition)
    latent_dim = artifact.model_config.latent_dim
    dims = args.dims if args.dims else list(range(latent_dim))
    bad = [d for d in dims if not 0 <= d < latent_dim]
    if bad:
        raise UsageError(f"latent dimension(s) {bad} outside 0..{latent_dim - 1}")
    out = Path(args.out) if args.out else cfg.report_dir
    grids = traversal_sweep(artifact, args.condition, dims, cfg.geometry)
    write_report_bundle(out, grids=grids, plots=args.plots, geom=cfg.geometry)
    log.info("wrote %d traversal grids to %s", len(grids), out)


COMMANDS = {"synth": cmd_synth, "extract": cmd_extract, "train": cmd_train,
            "generate": cmd_generate, "evaluate": cmd_evaluate, "traverse": cmd_traverse}


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    # SUPPRESS keeps subcommand defaults from clobbering flags given before the subcommand
    common.add_argument("--config", default=argparse.SUPPRESS, help="YAML run configuration")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                        help="override the configured seed")
    common.add_argument("--verbose", "-v", action="store_true", default=argparse.SUPPRESS)

    parser = _Parser(prog="roundgen", parents=[common],
                     description="Two-vehicle roundabout scenario generation with a CVAE-T.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", parents=[common], help="write synthetic rounD-style recordings")
    p.add_argument("--recordings", type=int, default=1)
    p.add_argument("--vehicles", type=int, default=100)
    p.add_argument("--out", help="output directory (default: data root)")

    sub.add_parser("extract", parents=[common], help="build the scenario dataset")

    p = sub.add_parser("train", parents=[common], help="train the CVAE-T")
    p.add_argument("--epochs", type=int, help="override train.epochs")
    p.add_argument("--resume", action="store_true", help="continue from the existing artifact")

    p = sub.add_parser("generate", parents=[common], help="sample scenarios for one condition")
    p.add_argument("--condition", type=int, required=True)
    p.add_argument("--count", type=int, default=500)
    p.add_argument("--out")

    p = sub.add_parser("evaluate", parents=[common], help="RMSE and KPI comparison report")
    p.add_argument("--set-a", required=True, help="dataset file or scenario directory")
    p.add_argument("--set-b", help="dataset file or scenario directory")
    p.add_argument("--split", default="test", help="dataset split used for dataset inputs")
    p.add_argument("--paired", action="store_true", help="set-b reconstructs set-a row by row")
    p.add_argument("--reconstruct", action="store_true", help="compare set-a with its reconstruction")
    p.add_argument("--sample", type=int, help="random subset size per set")
    p.add_argument("--plots", action="store_true")
    p.add_argument("--out")

    p = sub.add_parser("traverse", parents=[common], help="latent traversal grids")
    p.add_argument("--condition", type=int, required=True)
    p.add_argument("--dims", type=int, nargs="*", help="latent dimensions (default: all)")
    p.add_argument("--plots", action="store_true")
    p.add_argument("--out")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args.verbose = getattr(args, "verbose", False)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = RunConfig.load(getattr(args, "config", None))
        if getattr(args, "seed", None) is not None:
            cfg.seed = args.seed
        COMMANDS[args.command](cfg, args)
    except (ConfigError, UsageError, UnknownConditionError) as exc:
        log.error("%s", exc)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001
        log.error("%s failed: %s", args.command, exc, exc_info=args.verbose)
        return EXIT_FAILED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
