"""Full speech-to-blendshape model: trainable encoders, alignment head, and
coefficient decoder wired over the frozen feature providers.

Initialization is seed-controlled and independent of torch's global RNG:
parameters are filled in sorted name order from a dedicated generator, with
weights uniform in +-1/sqrt(fan_in), biases and norm offsets zero, norm gains
one, and the alignment log-temperature at its contrastive-convention init.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import torch
import torch.nn as nn

from .alignment import ALIGNMENT_PAIRS, LOG_TEMPERATURE_INIT, PAIR_TAGS, AlignmentHead, \
    SimilarityMatrix, semantic_loss, temporal_loss, temporal_similarity
from .decoder import CoefficientDecoder, DecoderConfig
from .encoders import EncoderConfig, LatentAudioDecoder, LipImageEncoder
from .errors import ConfigError


@dataclass
class ModelConfig:
    latent_dim: int = 64
    text_dim: int = 40
    image_size: int = 16
    d_align: int = 64
    out_dim: int = 32
    seed: int = 0
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    decoder: DecoderConfig = field(default_factory=DecoderConfig)

    def __post_init__(self):
        if isinstance(self.encoder, dict):
            self.encoder = EncoderConfig(**self.encoder)
        if isinstance(self.decoder, dict):
            self.decoder = DecoderConfig(**self.decoder)
        if min(self.latent_dim, self.text_dim, self.image_size, self.d_align, self.out_dim) < 1:
            raise ConfigError("model dimensions must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, obj: dict) -> "ModelConfig":
        return cls(**obj)


def seeded_init_(module: nn.Module, seed: int) -> None:
    """Deterministically (re)initialize every parameter of `module`.

    Weight matrices (ndim >= 2) draw uniform +-1/sqrt(fan_in) with
    fan_in = prod(shape[1:]); 1-D weights (norm gains) become 1; biases 0;
    any log_temperature parameter gets its dedicated constant.
    """
    gen = torch.Generator().manual_seed(seed)
    for name, param in sorted(module.named_parameters(), key=lambda kv: kv[0]):
        with torch.no_grad():
            if name.endswith("log_temperature"):
                param.fill_(LOG_TEMPERATURE_INIT)
            elif param.ndim >= 2:
                fan_in = 1
                for s in param.shape[1:]:
                    fan_in *= s
                bound = fan_in ** -0.5
                values = torch.rand(param.shape, generator=gen, dtype=torch.float32)
                param.copy_((values * 2 - 1) * bound)
            elif name.endswith(".bias") or param.ndim == 0:
                param.zero_()
            else:
                param.fill_(1.0)


class SpeechBlendshapeModel(nn.Module):
    """Latent audio + lip frames + text logits + style id -> coefficients."""

    def __init__(self, cfg: ModelConfig, subject_ids):
        super().__init__()
        self.cfg = cfg
        d_model = cfg.encoder.d_model
        self.audio_decoder = LatentAudioDecoder(cfg.latent_dim, cfg.encoder)
        self.image_encoder = LipImageEncoder(cfg.image_size, cfg.encoder)
        # Text has no trainable encoder; raw text features flow straight into
        # alignment and fusion projections.
        self.alignment = AlignmentHead(
            {"audio": d_model, "image": d_model, "text": cfg.text_dim}, cfg.d_align
        )
        self.decoder = CoefficientDecoder(
            audio_dim=d_model, image_dim=d_model, text_dim=cfg.text_dim,
            subject_ids=subject_ids, cfg=cfg.decoder, out_dim=cfg.out_dim,
        )
        seeded_init_(self, cfg.seed)
        # Output head starts 10x smaller than the generic rule: the untrained
        # model then predicts near-rest coefficients instead of unit-scale
        # noise, which the small-step training recipe cannot afford to unlearn.
        with torch.no_grad():
            self.decoder.head.weight.mul_(0.1)

    @property
    def subject_ids(self):
        return self.decoder.styles.subject_ids

    def encode(self, latent: torch.Tensor, frames: torch.Tensor, text: torch.Tensor):
        """Returns the three frame-aligned feature streams (A, I, C)."""
        return self.audio_decoder(latent), self.image_encoder(frames), text

    def alignment_losses(self, audio: torch.Tensor, image: torch.Tensor, text: torch.Tensor):
        """Temporal and semantic alignment losses over the three modality pairs."""
        streams = {"audio": audio, "image": image, "text": text}
        projected = {m: self.alignment.project(x, m) for m, x in streams.items()}
        sims = []
        pairs = []
        for mx, my in ALIGNMENT_PAIRS:
            x_hat, y_hat = projected[mx], projected[my]
            sims.append(
                temporal_similarity(
                    x_hat, y_hat, self.alignment.log_temperature, pair=PAIR_TAGS[(mx, my)]
                )
            )
            pairs.append((x_hat, y_hat))
        return temporal_loss(sims), semantic_loss(pairs)

    def forward(
        self, latent: torch.Tensor, frames: torch.Tensor, text: torch.Tensor,
        subject_id: str,
    ) -> dict:
        audio, image, text = self.encode(latent, frames, text)
        pred = self.decoder(audio, image, text, subject_id)
        return {"pred": pred, "audio": audio, "image": image, "text": text}

    def parameter_census(self) -> dict[str, tuple[int, ...]]:
        """Stable name -> shape table of every trainable parameter.

        Feature providers contribute nothing here: they are frozen by
        construction and live outside the module tree.
        """
        return {name: tuple(p.shape) for name, p in sorted(self.named_parameters())}

    def num_parameters(self) -> int:
        return sum(p.numel() for p in self.parameters())

    def census_json(self) -> str:
        return json.dumps({k: list(v) for k, v in self.parameter_census().items()})
