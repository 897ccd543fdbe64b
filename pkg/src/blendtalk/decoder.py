"""Coefficient decoder: fusion, periodic positional encoding, biased causal
self-attention, and the 32-channel output head.

The decoder attends over the fused input features under a causal mask fused
into per-head linear distance biases; predicted coefficients are never fed
back in. Outputs are raw (unclamped) — clamping to [0, 1] happens at export.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn

from .encoders import FeedForward, MultiHeadSelfAttention
from .errors import ConfigError, DimensionMismatch, LengthMismatch, UnknownStyle

STYLE_DIM = 64


@dataclass
class DecoderConfig:
    d_fuse: int = 64
    d_model: int = 128
    n_layers: int = 2
    n_heads: int = 4
    d_ff: int = 256
    ppe_period: int = 25
    seed: int = 0

    def __post_init__(self):
        if min(self.d_fuse, self.d_model, self.n_layers, self.n_heads, self.d_ff) < 1:
            raise ConfigError("decoder sizes must be positive")
        if self.d_model % self.n_heads != 0:
            raise ConfigError(
                f"d_model {self.d_model} not divisible by n_heads {self.n_heads}"
            )
        if self.ppe_period < 2:
            raise ConfigError("ppe_period must be >= 2")


class StyleTable(nn.Module):
    """Learned 64-dim style vector per training subject."""

    def __init__(self, subject_ids):
        super().__init__()
        self.subject_ids = tuple(subject_ids)
        if len(set(self.subject_ids)) != len(self.subject_ids):
            raise ValueError("duplicate subject ids in style table")
        if not self.subject_ids:
            raise ValueError("style table needs at least one subject")
        self.index = {s: i for i, s in enumerate(self.subject_ids)}
        self.vectors = nn.Parameter(torch.zeros(len(self.subject_ids), STYLE_DIM))

    def lookup(self, subject_id: str) -> torch.Tensor:
        if subject_id not in self.index:
            raise UnknownStyle(
                f"subject {subject_id!r} not registered; known: {list(self.subject_ids)}"
            )
        return self.vectors[self.index[subject_id]]


def periodic_positional_encoding(
    t: int, d_model: int, period: int,
    dtype: torch.dtype = torch.float32, device=None,
) -> torch.Tensor:
    """Sinusoidal encoding computed on t mod period, capturing the cyclic
    open/close rhythm of speech mouth motion.

    PPE(t, 2i) = sin((t mod period) / 10000^(2i/d)), PPE(t, 2i+1) = cos(same).
    """
    if period < 2:
        raise ValueError("period must be >= 2")
    positions = torch.arange(t, dtype=dtype, device=device) % period
    freqs = torch.pow(
        torch.tensor(10000.0, dtype=dtype, device=device),
        -torch.arange(0, d_model, 2, dtype=dtype, device=device) / d_model,
    )
    args = positions[:, None] * freqs[None, :]
    ppe = torch.zeros(t, d_model, dtype=dtype, device=device)
    ppe[:, 0::2] = torch.sin(args)
    ppe[:, 1::2] = torch.cos(args[:, : d_model // 2])
    return ppe


def alibi_slopes(n_heads: int) -> torch.Tensor:
    """Geometric slope schedule m_h = 2^(-8(h+1)/H)."""
    if n_heads < 1:
        raise ValueError("n_heads must be >= 1")
    exponents = -8.0 * torch.arange(1, n_heads + 1, dtype=torch.float64) / n_heads
    return torch.pow(2.0, exponents)


def alibi_bias(
    t: int, n_heads: int, dtype: torch.dtype = torch.float32, device=None
) -> torch.Tensor:
    """(n_heads, T, T) additive attention bias: -slope * (i - j) for j <= i,
    -inf above the diagonal (causal mask fused in)."""
    slopes = alibi_slopes(n_heads).to(dtype=dtype, device=device)
    idx = torch.arange(t, dtype=dtype, device=device)
    distance = idx[:, None] - idx[None, :]  # (T, T), i - j
    bias = -slopes[:, None, None] * distance[None, :, :]
    future = distance < 0
    bias = bias.masked_fill(future[None, :, :], float("-inf"))
    return bias


class FeatureFusion(nn.Module):
    """Per-modality linear maps to d_fuse, concat with the broadcast style
    vector, mix down to d_model, and add the periodic positional encoding."""

    def __init__(self, audio_dim: int, image_dim: int, text_dim: int, cfg: DecoderConfig):
        super().__init__()
        self.cfg = cfg
        self.audio_proj = nn.Linear(audio_dim, cfg.d_fuse)
        self.image_proj = nn.Linear(image_dim, cfg.d_fuse)
        self.text_proj = nn.Linear(text_dim, cfg.d_fuse)
        self.mix = nn.Linear(3 * cfg.d_fuse + STYLE_DIM, cfg.d_model)

    def forward(
        self, audio: torch.Tensor, image: torch.Tensor, text: torch.Tensor,
        style: torch.Tensor,
    ) -> torch.Tensor:
        t = audio.shape[0]
        if image.shape[0] != t or text.shape[0] != t:
            raise LengthMismatch(
                f"modality frame counts differ: {audio.shape[0]}/{image.shape[0]}/{text.shape[0]}"
            )
        if style.shape != (STYLE_DIM,):
            raise DimensionMismatch(f"style must be ({STYLE_DIM},), got {tuple(style.shape)}")
        parts = torch.cat(
            [
                self.audio_proj(audio),
                self.image_proj(image),
                self.text_proj(text),
                style.unsqueeze(0).expand(t, -1),
            ],
            dim=1,
        )
        fused = self.mix(parts)
        ppe = periodic_positional_encoding(
            t, self.cfg.d_model, self.cfg.ppe_period, dtype=fused.dtype, device=fused.device
        )
        return fused + ppe


class DecoderLayer(nn.Module):
    """Post-LN block: LN(x + biased_attn(x)), then LN(x + ffn(x))."""

    def __init__(self, cfg: DecoderConfig):
        super().__init__()
        self.attn = MultiHeadSelfAttention(cfg.d_model, cfg.n_heads)
        self.attn_norm = nn.LayerNorm(cfg.d_model)
        self.ffn = FeedForward(cfg.d_model, cfg.d_ff)
        self.ffn_norm = nn.LayerNorm(cfg.d_model)

    def forward(self, x: torch.Tensor, bias: torch.Tensor) -> torch.Tensor:
        x = self.attn_norm(x + self.attn(x, bias=bias))
        x = self.ffn_norm(x + self.ffn(x))
        return x


class CoefficientDecoder(nn.Module):
    """Fused features + style -> blendshape coefficients, one row per frame."""

    def __init__(
        self, audio_dim: int, image_dim: int, text_dim: int,
        subject_ids, cfg: DecoderConfig, out_dim: int = 32,
    ):
        super().__init__()
        self.cfg = cfg
        self.out_dim = out_dim
        self.fusion = FeatureFusion(audio_dim, image_dim, text_dim, cfg)
        self.layers = nn.ModuleList(DecoderLayer(cfg) for _ in range(cfg.n_layers))
        self.head = nn.Linear(cfg.d_model, out_dim)
        self.styles = StyleTable(subject_ids)

    def decode(self, fused: torch.Tensor) -> torch.Tensor:
        """Run the biased causal stack and output head over prefused input."""
        if fused.ndim != 2 or fused.shape[1] != self.cfg.d_model:
            raise DimensionMismatch(
                f"expected (T, {self.cfg.d_model}) fused input, got {tuple(fused.shape)}"
            )
        bias = alibi_bias(
            fused.shape[0], self.cfg.n_heads, dtype=fused.dtype, device=fused.device
        )
        x = fused
        for layer in self.layers:
            x = layer(x, bias)
        return self.head(x)

    def forward(
        self, audio: torch.Tensor, image: torch.Tensor, text: torch.Tensor,
        subject_id: str,
    ) -> torch.Tensor:
        style = self.styles.lookup(subject_id)
        return self.decode(self.fusion(audio, image, text, style))
