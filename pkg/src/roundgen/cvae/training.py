"""Training loop, model artifacts, conditional generation and reconstruction."""
from __future__ import annotations

import copy
import csv
import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
import yaml

from ..extract import NormalizationStats
from .losses import GaussianPosterior, beta_at, kl_loss, recon_loss
from .model import CVAET, ModelConfig

log = logging.getLogger(__name__)

HISTORY_COLUMNS = ("epoch", "beta", "train_recon", "train_kl", "val_recon", "val_kl")


class UnknownConditionError(KeyError):
    pass


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 400
    batch_size: int = 32
    learning_rate: float = 1e-4
    beta_start: float = 0.4
    beta_end: float = 0.8
    beta_warmup_epochs: int = 200
    seed: int = 0
    recon_reduction: str = "sum"
    lr_schedule: str = "constant"

    def __post_init__(self):
        if self.recon_reduction not in ("mean", "sum"):
            raise ValueError("recon_reduction must be 'mean' or 'sum'")
        if self.lr_schedule not in ("constant", "cosine"):
            raise ValueError("lr_schedule must be 'constant' or 'cosine'")
        if self.epochs <= 0 or self.batch_size <= 0 or self.learning_rate <= 0:
            raise ValueError("epochs, batch_size and learning_rate must be positive")
        if not 0 < self.beta_start <= self.beta_end:
            raise ValueError("need 0 < beta_start <= beta_end")
        if self.beta_warmup_epochs < 0:
            raise ValueError("beta_warmup_epochs must be >= 0")

    def beta(self, epoch: int) -> float:
        return beta_at(epoch, self.beta_start, self.beta_end, self.beta_warmup_epochs)

    def lr(self, epoch: int) -> float:
        """Learning rate for ``epoch``; ``"cosine"`` decays from ``learning_rate`` toward 0 over ``epochs``."""
        if self.lr_schedule == "constant":
            return self.learning_rate
        return 0.5 * self.learning_rate * (1.0 + math.cos(math.pi * min(epoch, self.epochs) / self.epochs))

    def to_dict(self) -> dict:
        return asdict(self)


class CategoryVocabulary:
    """Maps condition category ids to embedding rows."""

    def __init__(self, category_ids: Sequence[int]):
        self.category_ids = sorted({int(c) for c in category_ids})
        self._index = {c: i for i, c in enumerate(self.category_ids)}

    def __len__(self) -> int:
        return len(self.category_ids)

    def __contains__(self, category_id) -> bool:
        return int(category_id) in self._index

    def index(self, category_ids) -> torch.Tensor:
        ids = np.atleast_1d(np.asarray(category_ids, dtype=np.int64))
        try:
            return torch.tensor([self._index[int(c)] for c in ids], dtype=torch.long)
        except KeyError as exc:
            raise UnknownConditionError(f"category {exc.args[0]} not in trained vocabulary") from None


@dataclass
class ModelArtifact:
    model: CVAET
    model_config: ModelConfig
    train_config: TrainConfig
    stats: NormalizationStats
    vocabulary: CategoryVocabulary
    history: list[dict] = field(default_factory=list)
    dt: float = 0.12
    best_epoch: int | None = None
    best_val_loss: float | None = None
    last_state: dict | None = None
    optimizer_state: dict | None = None

    def _prepare(self, normalized, category_ids):
        dtype = next(self.model.parameters()).dtype
        s = torch.as_tensor(np.asarray(normalized), dtype=dtype)
        if not torch.isfinite(s).all():
            raise ValueError("non-finite scenario input")
        return s, self.vocabulary.index(category_ids)

    @torch.no_grad()
    def encode(self, normalized, category_ids) -> GaussianPosterior:
        """Posterior parameters for normalized ``B x T x 4`` scenarios."""
        s, c = self._prepare(normalized, category_ids)
        self.model.eval()
        return GaussianPosterior(*self.model.encode(s, c))

    @torch.no_grad()
    def decode(self, z, category_ids, batch_size: int = 64) -> np.ndarray:
        """Normalized ``B x T x 4`` output for latent codes ``z``."""
        dtype = next(self.model.parameters()).dtype
        z = torch.as_tensor(np.asarray(z), dtype=dtype)
        c = self.vocabulary.index(category_ids)
        if len(c) == 1 and len(z) > 1:
            c = c.expand(len(z))
        self.model.eval()
        out = [self.model.decode(z[i:i + batch_size], c[i:i + batch_size])
               for i in range(0, len(z), batch_size)]
        return torch.cat(out).cpu().numpy().astype(np.float64)

    def save(self, directory: str | os.PathLike) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        torch.save(self.model.state_dict(), d / "weights.pt")
        if self.last_state is not None:
            torch.save({"model": self.last_state, "optimizer": self.optimizer_state}, d / "checkpoint.pt")
        with open(d / "config.yaml", "w") as fh:
            yaml.safe_dump({"model": self.model_config.to_dict(), "train": self.train_config.to_dict()},
                           fh, sort_keys=False)
        with open(d / "normalization.json", "w") as fh:
            json.dump(self.stats.to_dict(), fh, indent=2)
        with open(d / "vocabulary.json", "w") as fh:
            json.dump({"category_ids": self.vocabulary.category_ids}, fh)
        with open(d / "meta.json", "w") as fh:
            json.dump({"dt": self.dt, "best_epoch": self.best_epoch,
                       "best_val_loss": self.best_val_loss}, fh, indent=2)
        write_history(self.history, d / "history.csv")

    @classmethod
    def load(cls, directory: str | os.PathLike) -> "ModelArtifact":
        d = Path(directory)
        if not (d / "weights.pt").is_file():
            raise FileNotFoundError(f"no model artifact in {d}")
        with open(d / "config.yaml") as fh:
            cfg = yaml.safe_load(fh)
        model_config = ModelConfig(**cfg["model"])
        train_config = TrainConfig(**cfg["train"])
        with open(d / "normalization.json") as fh:
            stats = NormalizationStats.from_dict(json.load(fh))
        with open(d / "vocabulary.json") as fh:
            vocab = CategoryVocabulary(json.load(fh)["category_ids"])
        with open(d / "meta.json") as fh:
            meta = json.load(fh)
        model = CVAET(model_config, len(vocab))
        model.load_state_dict(torch.load(d / "weights.pt", weights_only=True))
        model.eval()
        last_state = optimizer_state = None
        if (d / "checkpoint.pt").is_file():
            ckpt = torch.load(d / "checkpoint.pt", weights_only=True)
            last_state, optimizer_state = ckpt["model"], ckpt["optimizer"]
        return cls(model, model_config, train_config, stats, vocab, read_history(d / "history.csv"),
                   meta["dt"], meta["best_epoch"], meta["best_val_loss"], last_state, optimizer_state)


def write_history(history: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=HISTORY_COLUMNS)
        w.writeheader()
        for row in history:
            w.writerow({k: ("" if row[k] is None else row[k]) for k in HISTORY_COLUMNS})


def read_history(path) -> list[dict]:
    if not Path(path).is_file():
        return []
    rows = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            rows.append({"epoch": int(row["epoch"]),
                         **{k: (float(row[k]) if row[k] != "" else None) for k in HISTORY_COLUMNS[1:]}})
    return rows


def _run_epoch(model, s, c, batch_size, beta, reduction, optimizer=None, order=None, eps_gen=None):
    """One pass over (s, c); trains when ``optimizer`` is given. Returns mean (recon, kl)."""
    n = len(s)
    order = torch.arange(n) if order is None else order
    sum_recon = sum_kl = 0.0
    for start in range(0, n, batch_size):
        idx = order[start:start + batch_size]
        sb, cb = s[idx], c[idx]
        mu, log_var = model.encode(sb, cb)
        eps = torch.randn(mu.shape, generator=eps_gen, dtype=mu.dtype)
        z = mu + torch.exp(0.5 * log_var) * eps
        out = model.decode(z, cb)
        rec = recon_loss(sb, out, reduction)
        kl = kl_loss(GaussianPosterior(mu, log_var))
        loss = rec + beta * kl
        if not torch.isfinite(loss):
            raise TrainingDiverged(f"non-finite loss (recon={rec.item()}, kl={kl.item()})")
        if optimizer is not None:
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
        sum_recon += rec.item() * len(idx)
        sum_kl += kl.item() * len(idx)
    return sum_recon / n, sum_kl / n


def train(train_positions: np.ndarray, train_categories: np.ndarray, stats: NormalizationStats,
          model_config: ModelConfig = ModelConfig(), train_config: TrainConfig = TrainConfig(),
          val_positions: np.ndarray | None = None, val_categories: np.ndarray | None = None,
          resume: ModelArtifact | None = None, dt: float = 0.12,
          progress=None, category_ids=None) -> ModelArtifact:
    """Fit the CVAE-T with Adam and the beta warm-up; keep the best-validation weights.

    Positions are in meters and normalized with ``stats`` internally.  Without
    validation data the best epoch is chosen on the training loss.  With
    ``resume`` the run continues from the artifact's last state and epoch
    count up to ``train_config.epochs``.  ``progress``, if given, is called
    with each history row.  ``category_ids`` fixes the vocabulary; it defaults
    to every category seen in the training and validation data.
    """
    if len(train_positions) == 0:
        raise ValueError("empty training split")
    torch.manual_seed(train_config.seed)
    shuffle_gen = torch.Generator().manual_seed(train_config.seed)
    eps_gen = torch.Generator().manual_seed(train_config.seed + 1)

    if resume is not None:
        vocab = resume.vocabulary
        model = CVAET(resume.model_config, len(vocab))
        model_config = resume.model_config
        model.load_state_dict(resume.last_state or resume.model.state_dict())
        history = list(resume.history)
        best_epoch, best_loss = resume.best_epoch, resume.best_val_loss
        best_state = copy.deepcopy(resume.model.state_dict())
        stats = resume.stats
    else:
        if category_ids is None:
            category_ids = np.concatenate([np.asarray(train_categories).ravel(),
                                           np.asarray([] if val_categories is None else val_categories).ravel()])
        vocab = CategoryVocabulary(category_ids)
        model = CVAET(model_config, len(vocab))
        history, best_epoch, best_loss, best_state = [], None, None, None

    optimizer = torch.optim.Adam(model.parameters(), lr=train_config.learning_rate)
    if resume is not None and resume.optimizer_state is not None:
        optimizer.load_state_dict(resume.optimizer_state)

    s_train = torch.as_tensor(stats.apply(train_positions), dtype=torch.float32)
    c_train = vocab.index(train_categories)
    has_val = val_positions is not None and len(val_positions) > 0
    if has_val:
        s_val = torch.as_tensor(stats.apply(val_positions), dtype=torch.float32)
        c_val = vocab.index(val_categories)

    for epoch in range(len(history), train_config.epochs):
        beta = train_config.beta(epoch)
        for group in optimizer.param_groups:
            group["lr"] = train_config.lr(epoch)
        model.train()
        order = torch.randperm(len(s_train), generator=shuffle_gen)
        tr_recon, tr_kl = _run_epoch(model, s_train, c_train, train_config.batch_size, beta,
                                     train_config.recon_reduction, optimizer, order, eps_gen)
        row = {"epoch": epoch, "beta": beta, "train_recon": tr_recon, "train_kl": tr_kl,
               "val_recon": None, "val_kl": None}
        if has_val:
            model.eval()
            val_gen = torch.Generator().manual_seed(train_config.seed + 2 + epoch)
            with torch.no_grad():
                row["val_recon"], row["val_kl"] = _run_epoch(model, s_val, c_val,
                                                             train_config.batch_size, beta,
                                                             train_config.recon_reduction,
                                                             eps_gen=val_gen)
            score = row["val_recon"] + beta * row["val_kl"]
        else:
            score = tr_recon + beta * tr_kl
        history.append(row)
        if best_loss is None or score < best_loss:
            best_loss, best_epoch = score, epoch
            best_state = copy.deepcopy(model.state_dict())
        if progress is not None:
            progress(row)
        log.debug("epoch %d beta %.3f train %.5f/%.3f", epoch, beta, tr_recon, tr_kl)

    last_state = copy.deepcopy(model.state_dict())
    if best_state is not None:
        model.load_state_dict(best_state)
    model.eval()
    return ModelArtifact(model, model_config, train_config, stats, vocab, history, dt,
                         best_epoch, best_loss, last_state, copy.deepcopy(optimizer.state_dict()))


@torch.no_grad()
def generate(artifact: ModelArtifact, category_id: int, count: int, seed: int) -> np.ndarray:
    """Sample ``count`` scenarios (meters, ``count x T x 4``) from the prior for one condition."""
    if category_id not in artifact.vocabulary:
        raise UnknownConditionError(f"category {category_id} not in trained vocabulary")
    g = torch.Generator().manual_seed(seed)
    z = torch.randn(count, artifact.model_config.latent_dim, generator=g, dtype=torch.float64)
    return artifact.stats.invert(artifact.decode(z.numpy(), [category_id]))


@torch.no_grad()
def reconstruct(artifact: ModelArtifact, positions: np.ndarray, category_ids,
                sample: bool = False, seed: int = 0, batch_size: int = 64) -> np.ndarray:
    """Encode and decode meter-space scenarios; uses the posterior mean unless ``sample``."""
    positions = np.asarray(positions, dtype=float)
    category_ids = np.broadcast_to(np.atleast_1d(category_ids), (len(positions),))
    g = torch.Generator().manual_seed(seed)
    out = []
    for i in range(0, len(positions), batch_size):
        mu, log_var = artifact.encode(artifact.stats.apply(positions[i:i + batch_size]),
                                      category_ids[i:i + batch_size])
        z = mu
        if sample:
            z = mu + torch.exp(0.5 * log_var) * torch.randn(mu.shape, generator=g, dtype=mu.dtype)
        out.append(artifact.decode(z.numpy(), category_ids[i:i + batch_size], batch_size))
    return artifact.stats.invert(np.concatenate(out))
