"""Transformer-enhanced conditional VAE over fixed-length two-vehicle scenarios."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import torch
from torch import nn

LOG_VAR_MIN, LOG_VAR_MAX = -10.0, 10.0


@dataclass(frozen=True)
class ModelConfig:
    latent_dim: int = 20
    attention_head_size: int = 256
    feedforward_dim: int = 512
    attention_heads: int = 4
    condition_embedding_dim: int = 16
    conv_channels: int = 64
    conv_kernel: int = 3
    recurrent_hidden: int = 128
    transformer_blocks: int = 2
    dropout: float = 0.1
    seq_len: int = 234
    n_features: int = 4
    positional_encoding: bool = False

    def __post_init__(self):
        for name, value in asdict(self).items():
            if name in ("dropout", "positional_encoding"):
                continue
            if value <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)


class MultiHeadSelfAttention(nn.Module):
    """Self-attention whose per-head width is independent of the model width."""

    def __init__(self, d_model: int, heads: int, head_size: int, dropout: float = 0.0):
        super().__init__()
        self.heads, self.head_size = heads, head_size
        self.qkv = nn.Linear(d_model, 3 * heads * head_size)
        self.out = nn.Linear(heads * head_size, d_model)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x):
        B, T, _ = x.shape
        q, k, v = self.qkv(x).view(B, T, 3, self.heads, self.head_size).permute(2, 0, 3, 1, 4)
        att = (q @ k.transpose(-2, -1)) / math.sqrt(self.head_size)
        att = self.dropout(att.softmax(dim=-1))
        y = (att @ v).transpose(1, 2).reshape(B, T, self.heads * self.head_size)
        return self.out(y)


class TransformerBlock(nn.Module):
    """Post-norm block: attention and feed-forward sublayers, each residual + LayerNorm."""

    def __init__(self, d_model: int, cfg: ModelConfig):
        super().__init__()
        self.attn = MultiHeadSelfAttention(d_model, cfg.attention_heads, cfg.attention_head_size,
                                           cfg.dropout)
        self.norm1 = nn.LayerNorm(d_model)
        self.ff = nn.Sequential(nn.Linear(d_model, cfg.feedforward_dim), nn.ReLU(),
                                nn.Dropout(cfg.dropout), nn.Linear(cfg.feedforward_dim, d_model))
        self.norm2 = nn.LayerNorm(d_model)
        self.dropout = nn.Dropout(cfg.dropout)

    def forward(self, x):
        x = self.norm1(x + self.dropout(self.attn(x)))
        return self.norm2(x + self.dropout(self.ff(x)))


def sinusoidal_encoding(length: int, dim: int) -> torch.Tensor:
    pos = torch.arange(length, dtype=torch.float64).unsqueeze(1)
    freq = torch.exp(torch.arange(0, dim, 2, dtype=torch.float64) * (-math.log(10000.0) / dim))
    pe = torch.zeros(length, dim, dtype=torch.float64)
    pe[:, 0::2] = torch.sin(pos * freq)
    pe[:, 1::2] = torch.cos(pos * freq[: dim // 2])
    return pe


class _AttentionStack(nn.Module):
    def __init__(self, d_model: int, cfg: ModelConfig):
        super().__init__()
        self.blocks = nn.ModuleList(TransformerBlock(d_model, cfg) for _ in range(cfg.transformer_blocks))
        if cfg.positional_encoding:
            self.register_buffer("pe", sinusoidal_encoding(cfg.seq_len, d_model).float(), persistent=False)
        else:
            self.pe = None

    def forward(self, x):
        if self.pe is not None:
            x = x + self.pe[: x.shape[1]].to(x.dtype)
        for block in self.blocks:
            x = block(x)
        return x


class Encoder(nn.Module):
    """(scenario, condition) -> (mu, log_var)."""

    def __init__(self, cfg: ModelConfig, embedding: nn.Embedding):
        super().__init__()
        self.embedding = embedding
        in_ch = cfg.n_features + cfg.condition_embedding_dim
        self.conv = nn.Conv1d(in_ch, cfg.conv_channels, cfg.conv_kernel, padding=cfg.conv_kernel // 2)
        self.conv_act = nn.ReLU()
        self.gru = nn.GRU(cfg.conv_channels, cfg.recurrent_hidden, batch_first=True, bidirectional=True)
        d_model = 2 * cfg.recurrent_hidden
        self.attention = _AttentionStack(d_model, cfg)
        self.mu = nn.Linear(d_model, cfg.latent_dim)
        self.log_var = nn.Linear(d_model, cfg.latent_dim)

    def forward(self, s, c):
        T = s.shape[1]
        e = self.embedding(c).unsqueeze(1).expand(-1, T, -1)
        h = torch.cat([s, e], dim=-1)
        h = self.conv_act(self.conv(h.transpose(1, 2))).transpose(1, 2)
        h, _ = self.gru(h)
        h = self.attention(h).mean(dim=1)
        log_var = self.log_var(h).clamp(LOG_VAR_MIN, LOG_VAR_MAX)
        return self.mu(h), log_var


class Decoder(nn.Module):
    """(z, condition) -> scenario of ``seq_len`` steps."""

    def __init__(self, cfg: ModelConfig, embedding: nn.Embedding):
        super().__init__()
        self.embedding = embedding
        self.seq_len = cfg.seq_len
        self.gru = nn.GRU(cfg.latent_dim + cfg.condition_embedding_dim, cfg.recurrent_hidden,
                          batch_first=True)
        self.attention = _AttentionStack(cfg.recurrent_hidden, cfg)
        self.head = nn.Linear(cfg.recurrent_hidden, cfg.n_features)

    def forward(self, z, c):
        h = torch.cat([z, self.embedding(c)], dim=-1).unsqueeze(1).expand(-1, self.seq_len, -1)
        h, _ = self.gru(h)
        return self.head(self.attention(h))


class CVAET(nn.Module):
    """Conditional VAE with convolution, bidirectional GRU and self-attention in the encoder.

    Condition ids passed to :meth:`forward`, :meth:`encode` and :meth:`decode`
    are embedding row indices, not category ids; see
    :class:`roundgen.cvae.CategoryVocabulary` for the mapping.
    """

    def __init__(self, cfg: ModelConfig, n_conditions: int):
        super().__init__()
        self.cfg = cfg
        self.n_conditions = n_conditions
        self.embedding = nn.Embedding(n_conditions, cfg.condition_embedding_dim)
        self.encoder = Encoder(cfg, self.embedding)
        self.decoder = Decoder(cfg, self.embedding)

    def encode(self, s, c):
        return self.encoder(s, c)

    def decode(self, z, c):
        return self.decoder(z, c)

    def forward(self, s, c, eps=None):
        mu, log_var = self.encode(s, c)
        if eps is None:
            eps = torch.randn_like(mu)
        z = mu + torch.exp(0.5 * log_var) * eps
        return self.decode(z, c), mu, log_var
