"""ELBO pieces: reparameterization, reconstruction and KL terms, beta warm-up."""
from __future__ import annotations

from typing import NamedTuple

import torch


class GaussianPosterior(NamedTuple):
    mu: torch.Tensor
    log_var: torch.Tensor


def reparameterize(posterior: GaussianPosterior, eps: torch.Tensor) -> torch.Tensor:
    mu, log_var = posterior
    if eps.shape != mu.shape:
        raise ValueError(f"noise shape {tuple(eps.shape)} != posterior shape {tuple(mu.shape)}")
    return mu + torch.exp(0.5 * log_var) * eps


def recon_loss(target: torch.Tensor, recon: torch.Tensor, reduction: str = "mean") -> torch.Tensor:
    """Squared reconstruction error.

    ``"mean"`` averages over every element; ``"sum"`` sums over each sample's
    elements (squared norm) and averages over the batch.
    """
    if target.shape != recon.shape:
        raise ValueError(f"shape mismatch {tuple(target.shape)} vs {tuple(recon.shape)}")
    sq = (target - recon) ** 2
    if reduction == "mean":
        return sq.mean()
    if reduction == "sum":
        return sq.reshape(sq.shape[0], -1).sum(dim=1).mean()
    raise ValueError(f"unknown reduction {reduction!r}")


def kl_loss(posterior: GaussianPosterior) -> torch.Tensor:
    """KL(q || N(0, I)) summed over latent dimensions, averaged over the batch."""
    mu, log_var = posterior
    per_sample = 0.5 * torch.sum(mu ** 2 + torch.exp(log_var) - log_var - 1.0, dim=-1)
    return per_sample.mean()


def beta_at(epoch: int, beta_start: float = 0.4, beta_end: float = 0.8,
            warmup_epochs: int = 200) -> float:
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    if warmup_epochs <= 0:
        return beta_end
    k = min(epoch, warmup_epochs)
    # weighted-average form hits the decimal knots (e.g. 0.6 at the midpoint) exactly
    return (beta_start * (warmup_epochs - k) + beta_end * k) / warmup_epochs


def total_loss(target, recon, posterior: GaussianPosterior, beta: float,
               reduction: str = "mean") -> torch.Tensor:
    return recon_loss(target, recon, reduction) + beta * kl_loss(posterior)
