"""Transformer-enhanced conditional VAE (CVAE-T)."""
from .losses import GaussianPosterior, beta_at, kl_loss, recon_loss, reparameterize, total_loss
from .model import CVAET, ModelConfig
from .training import (
    CategoryVocabulary,
    ModelArtifact,
    TrainConfig,
    TrainingDiverged,
    UnknownConditionError,
    generate,
    reconstruct,
    train,
)

__all__ = [
    "CVAET", "CategoryVocabulary", "GaussianPosterior", "ModelArtifact", "ModelConfig",
    "TrainConfig", "TrainingDiverged", "UnknownConditionError", "beta_at", "generate",
    "kl_loss", "recon_loss", "reconstruct", "reparameterize", "total_loss", "train",
]
