"""Cross-modal alignment of audio/image/text feature streams.

Each modality gets a linear projection into a shared width plus a per-modality
layer norm. Pairwise frame similarity is scaled by a learnable
log-temperature, initialized to log(1/0.07) following the contrastive
pretraining convention. The temporal loss is the symmetric KL divergence
between row-softmaxed similarity and the row-softmaxed identity target,
averaged over rows, symmetrization, and the three modality pairs; the
semantic loss is one minus cosine similarity of time-averaged projections.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import DimensionMismatch, LengthMismatch, ZeroVector
from .features import FeatureStream

LOG_TEMPERATURE_INIT = math.log(1.0 / 0.07)

# The three modality pairs aligned during training: image-text, image-audio,
# text-audio.
ALIGNMENT_PAIRS = (("image", "text"), ("image", "audio"), ("text", "audio"))
PAIR_TAGS = {("image", "text"): "IC", ("image", "audio"): "IA", ("text", "audio"): "CA"}


@dataclass
class SimilarityMatrix:
    values: torch.Tensor  # (T, T)
    pair: str = ""

    def __post_init__(self):
        if self.values.ndim != 2 or self.values.shape[0] != self.values.shape[1]:
            raise DimensionMismatch(
                f"similarity matrix must be square, got {tuple(self.values.shape)}"
            )


class AlignmentHead(nn.Module):
    def __init__(self, widths: Mapping[str, int], d_align: int = 64):
        super().__init__()
        if d_align < 1:
            raise ValueError("d_align must be positive")
        self.d_align = d_align
        self.proj = nn.ModuleDict({m: nn.Linear(d, d_align) for m, d in widths.items()})
        # eps far below the per-row variance so normalized rows really have
        # unit variance to ~1e-8
        self.norm = nn.ModuleDict(
            {m: nn.LayerNorm(d_align, eps=1e-8) for m in widths}
        )
        self.log_temperature = nn.Parameter(torch.tensor(LOG_TEMPERATURE_INIT))

    def project(self, x: torch.Tensor, modality: str) -> torch.Tensor:
        if modality not in self.proj:
            raise KeyError(f"no projection for modality {modality!r}")
        return self.norm[modality](self.proj[modality](x))

    @property
    def temperature(self) -> torch.Tensor:
        return self.log_temperature.exp()


def _as_tensor_and_modality(x, modality: str | None):
    if isinstance(x, FeatureStream):
        return torch.as_tensor(x.values), x.modality
    if modality is None:
        raise ValueError("plain tensors need an explicit modality")
    return x, modality


def project_pair(x, y, head: AlignmentHead, modalities: tuple[str, str] | None = None):
    """Project two time-aligned streams into the shared alignment space.

    `x`/`y` may be FeatureStreams (modality read off the stream) or (T, d)
    tensors with `modalities` given. Latent-audio streams project through the
    audio head.
    """
    mx, my = modalities if modalities is not None else (None, None)
    xt, mx = _as_tensor_and_modality(x, mx)
    yt, my = _as_tensor_and_modality(y, my)
    if xt.shape[0] != yt.shape[0]:
        raise LengthMismatch(f"frame counts differ: {xt.shape[0]} vs {yt.shape[0]}")
    mx = "audio" if mx == "latent_audio" else mx
    my = "audio" if my == "latent_audio" else my
    return head.project(xt, mx), head.project(yt, my)


def temporal_similarity(
    x_hat: torch.Tensor, y_hat: torch.Tensor, log_temperature: torch.Tensor, pair: str = ""
) -> SimilarityMatrix:
    """Scaled frame-by-frame similarity: exp(log_temperature) * (X Y^T)."""
    if x_hat.shape != y_hat.shape:
        raise DimensionMismatch(
            f"projected shapes differ: {tuple(x_hat.shape)} vs {tuple(y_hat.shape)}"
        )
    scale = torch.as_tensor(log_temperature).exp()
    return SimilarityMatrix(values=scale * (x_hat @ y_hat.transpose(0, 1)), pair=pair)


def temporal_loss(similarities: Sequence[SimilarityMatrix]) -> torch.Tensor:
    """Symmetric KL between row-softmaxed similarity and the identity target.

    Per pair: P = softmax(D, rows), Q = softmax(I, rows),
    loss = (1 / 2T) * sum over rows of KL(Q || P) + KL(P || Q); the result is
    averaged over the three pairs.
    """
    if len(similarities) != 3:
        raise ValueError(f"expected the three modality pairs, got {len(similarities)}")
    total = None
    for sim in similarities:
        d = sim.values
        t = d.shape[0]
        eye = torch.eye(t, dtype=d.dtype, device=d.device)
        log_p = F.log_softmax(d, dim=1)
        log_q = F.log_softmax(eye, dim=1)
        p, q = log_p.exp(), log_q.exp()
        kl_qp = (q * (log_q - log_p)).sum()
        kl_pq = (p * (log_p - log_q)).sum()
        pair_loss = (kl_qp + kl_pq) / (2 * t)
        total = pair_loss if total is None else total + pair_loss
    return total / len(similarities)


def semantic_loss(pairs: Sequence[tuple[torch.Tensor, torch.Tensor]]) -> torch.Tensor:
    """Mean over pairs of 1 - cos(mean-over-frames X, mean-over-frames Y).

    Computed as half the squared distance of the unit-normalized mean vectors,
    which equals 1 - cos and vanishes exactly when the projections coincide.
    """
    if len(pairs) != 3:
        raise ValueError(f"expected the three modality pairs, got {len(pairs)}")
    total = None
    for x_hat, y_hat in pairs:
        if x_hat.shape[0] != y_hat.shape[0]:
            raise LengthMismatch(
                f"frame counts differ: {x_hat.shape[0]} vs {y_hat.shape[0]}"
            )
        x_mean = x_hat.mean(dim=0)
        y_mean = y_hat.mean(dim=0)
        x_norm = torch.linalg.vector_norm(x_mean)
        y_norm = torch.linalg.vector_norm(y_mean)
        if float(x_norm.detach()) < 1e-12 or float(y_norm.detach()) < 1e-12:
            raise ZeroVector("time-averaged projection has near-zero norm")
        term = 0.5 * ((x_mean / x_norm - y_mean / y_norm) ** 2).sum()
        total = term if total is None else total + term
    return total / len(pairs)
