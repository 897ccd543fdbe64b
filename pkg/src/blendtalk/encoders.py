"""Trainable encoder halves: the latent-audio decoder and the lip image encoder.

Both share a pre-LN transformer encoder stack (bidirectional self-attention,
no causal mask); the image branch prepends a weight-sharing per-frame CNN.
Inputs and outputs are unbatched (T, d) tensors: training runs one clip per
step, so a batch axis would just be noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ConfigError, DimensionMismatch


@dataclass
class EncoderConfig:
    d_model: int = 128
    n_layers: int = 2
    n_heads: int = 4
    d_ff: int = 256
    seed: int = 0

    def __post_init__(self):
        if min(self.d_model, self.n_layers, self.n_heads, self.d_ff) < 1:
            raise ConfigError("encoder sizes must be positive")
        if self.d_model % self.n_heads != 0:
            raise ConfigError(
                f"d_model {self.d_model} not divisible by n_heads {self.n_heads}"
            )


class MultiHeadSelfAttention(nn.Module):
    def __init__(self, d_model: int, n_heads: int):
        super().__init__()
        self.n_heads = n_heads
        self.d_head = d_model // n_heads
        self.q_proj = nn.Linear(d_model, d_model)
        # a key bias shifts every logit of a query by the same amount, which
        # softmax cancels; it would be an untrainable dead parameter
        self.k_proj = nn.Linear(d_model, d_model, bias=False)
        self.v_proj = nn.Linear(d_model, d_model)
        self.out_proj = nn.Linear(d_model, d_model)

    def forward(self, x: torch.Tensor, bias: torch.Tensor | None = None) -> torch.Tensor:
        # x: (T, d_model); bias: (n_heads, T, T) additive, may contain -inf
        t = x.shape[0]
        q = self.q_proj(x).view(t, self.n_heads, self.d_head).transpose(0, 1)
        k = self.k_proj(x).view(t, self.n_heads, self.d_head).transpose(0, 1)
        v = self.v_proj(x).view(t, self.n_heads, self.d_head).transpose(0, 1)
        scores = q @ k.transpose(-2, -1) / math.sqrt(self.d_head)  # (H, T, T)
        if bias is not None:
            scores = scores + bias
        attn = F.softmax(scores, dim=-1)
        out = (attn @ v).transpose(0, 1).reshape(t, -1)
        return self.out_proj(out)


class FeedForward(nn.Module):
    def __init__(self, d_model: int, d_ff: int):
        super().__init__()
        self.up = nn.Linear(d_model, d_ff)
        self.down = nn.Linear(d_ff, d_model)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.down(F.gelu(self.up(x)))


class EncoderLayer(nn.Module):
    """Pre-LN block: x + attn(LN(x)), then x + ffn(LN(x))."""

    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.attn_norm = nn.LayerNorm(cfg.d_model)
        self.attn = MultiHeadSelfAttention(cfg.d_model, cfg.n_heads)
        self.ffn_norm = nn.LayerNorm(cfg.d_model)
        self.ffn = FeedForward(cfg.d_model, cfg.d_ff)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = x + self.attn(self.attn_norm(x))
        x = x + self.ffn(self.ffn_norm(x))
        return x


class EncoderStack(nn.Module):
    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.layers = nn.ModuleList(EncoderLayer(cfg) for _ in range(cfg.n_layers))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for layer in self.layers:
            x = layer(x)
        return x


class LatentAudioDecoder(nn.Module):
    """Contextualizes frozen latent audio features into audio features A.

    (T, latent_dim) -> input projection -> encoder stack -> (T, d_model).
    """

    def __init__(self, latent_dim: int, cfg: EncoderConfig):
        super().__init__()
        self.latent_dim = latent_dim
        self.input_proj = nn.Linear(latent_dim, cfg.d_model)
        self.stack = EncoderStack(cfg)

    def forward(self, latent: torch.Tensor) -> torch.Tensor:
        if latent.ndim != 2 or latent.shape[1] != self.latent_dim:
            raise DimensionMismatch(
                f"expected (T, {self.latent_dim}) latent features, got {tuple(latent.shape)}"
            )
        return self.stack(self.input_proj(latent))


class LipImageEncoder(nn.Module):
    """Per-frame shared-weight CNN followed by the same transformer stack.

    Frames are (T, H, W) with H = W = image_size; two stride-2 convolutions
    downsample to (H/4, W/4) before flattening into d_model.
    """

    def __init__(self, image_size: int, cfg: EncoderConfig, channels: tuple[int, int] = (8, 16)):
        super().__init__()
        if image_size % 4 != 0:
            raise ConfigError("image_size must be divisible by 4")
        self.image_size = image_size
        c1, c2 = channels
        self.conv1 = nn.Conv2d(1, c1, kernel_size=3, stride=2, padding=1)
        self.conv2 = nn.Conv2d(c1, c2, kernel_size=3, stride=2, padding=1)
        self.flat_dim = c2 * (image_size // 4) ** 2
        self.frame_proj = nn.Linear(self.flat_dim, cfg.d_model)
        self.stack = EncoderStack(cfg)

    def encode_frames(self, frames: torch.Tensor) -> torch.Tensor:
        # frames: (T, H, W); the frame axis doubles as the conv batch axis,
        # which is what makes the per-frame weights shared.
        t = frames.shape[0]
        h = F.gelu(self.conv1(frames.unsqueeze(1)))
        h = F.gelu(self.conv2(h))
        return self.frame_proj(h.reshape(t, -1))

    def forward(self, frames: torch.Tensor) -> torch.Tensor:
        if frames.ndim != 3 or frames.shape[1:] != (self.image_size, self.image_size):
            raise DimensionMismatch(
                f"expected (T, {self.image_size}, {self.image_size}) frames, "
                f"got {tuple(frames.shape)}"
            )
        return self.stack(self.encode_frames(frames))
