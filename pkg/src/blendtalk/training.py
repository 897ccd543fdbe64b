"""Four-term objective, Adam training loop, checkpointing, and prediction.

One optimizer step consumes `batch_size` whole clips (default 1, i.e. one
variable-length clip per step). Everything is deterministic given the seed:
initialization, shuffle order, and the CPU math kernels.
"""

from __future__ import annotations

import json
import logging
import os
import random
import tempfile
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np
import torch

from .audio import AudioClip, load_audio
from .corpus import ClipRecord, SplitSpec
from .errors import (
    ConfigError,
    DataError,
    DivergedLoss,
    IoFailure,
    ProviderFailure,
    ShapeMismatch,
    TooShort,
)
from .features import (
    FeatureConfig,
    ReferenceImage,
    frame_count,
    latent_stream_provider,
    lip_stream_provider,
    resample_matrix,
    text_stream_provider,
)
from .livelink import (
    DEFAULT_CHANNELS,
    BlendshapeSequence,
    ingest_livelink_csv,
    resample_coefficients,
    select_channels,
)
from .model import ModelConfig, SpeechBlendshapeModel

log = logging.getLogger("blendtalk")


@dataclass
class DataConfig:
    fps: float = 30.0
    channels: tuple[str, ...] = DEFAULT_CHANNELS

    def __post_init__(self):
        self.channels = tuple(self.channels)
        if self.fps <= 0:
            raise ConfigError("fps must be positive")


@dataclass
class LossWeights:
    pos: float = 1.0
    mot: float = 10.0
    tem: float = 1e-4
    sem: float = 1e-5

    def __post_init__(self):
        if min(self.pos, self.mot, self.tem, self.sem) < 0:
            raise ConfigError("loss weights must be non-negative")


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 1
    epochs: int = 50
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    grad_clip: float = 0.0  # 0 disables clipping
    lr_schedule: str = "none"  # "none" | "cosine"
    weights: LossWeights = field(default_factory=LossWeights)

    def __post_init__(self):
        if isinstance(self.weights, dict):
            self.weights = LossWeights(**self.weights)
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.lr_schedule not in ("none", "cosine"):
            raise ConfigError(f"unknown lr_schedule {self.lr_schedule!r}")


class LossParts(NamedTuple):
    pos: torch.Tensor
    mot: torch.Tensor
    tem: torch.Tensor
    sem: torch.Tensor


def position_loss(pred, target) -> torch.Tensor:
    """Mean over frames of the squared Euclidean distance across channels."""
    pred = torch.as_tensor(pred)
    target = torch.as_tensor(target)
    if pred.shape != target.shape or pred.ndim != 2:
        raise ShapeMismatch(f"shapes differ: {tuple(pred.shape)} vs {tuple(target.shape)}")
    return ((pred - target) ** 2).sum(dim=1).mean()


def motion_loss(pred, target) -> torch.Tensor:
    """Frame-difference mismatch: mean over T of ||delta_pred - delta_target||^2.

    Offsets common to every predicted frame cancel in the differences.
    """
    pred = torch.as_tensor(pred)
    target = torch.as_tensor(target)
    if pred.shape != target.shape or pred.ndim != 2:
        raise ShapeMismatch(f"shapes differ: {tuple(pred.shape)} vs {tuple(target.shape)}")
    t = pred.shape[0]
    if t < 2:
        raise TooShort("motion loss needs at least 2 frames")
    delta = (pred[1:] - pred[:-1]) - (target[1:] - target[:-1])
    return (delta ** 2).sum(dim=1).sum() / t


def total_loss(parts: LossParts, weights: LossWeights) -> torch.Tensor:
    return (
        weights.pos * parts.pos
        + weights.mot * parts.mot
        + weights.tem * parts.tem
        + weights.sem * parts.sem
    )


@dataclass
class ClipTensors:
    clip_id: str
    subject_id: str
    latent: torch.Tensor  # (T, latent_dim)
    frames: torch.Tensor  # (T, H, W)
    text: torch.Tensor    # (T, text_dim)
    target: torch.Tensor | None  # (T, out_dim); None at pure inference

    @property
    def num_frames(self) -> int:
        return self.latent.shape[0]


def load_target_sequence(record: ClipRecord, data_cfg: DataConfig) -> BlendshapeSequence:
    track = ingest_livelink_csv(record.coefficients_path)
    track = resample_coefficients(track, data_cfg.fps)
    return select_channels(track, data_cfg.channels)


def prepare_clip(
    record: ClipRecord,
    data_cfg: DataConfig,
    feature_cfg: FeatureConfig,
    ref: ReferenceImage | None = None,
    with_target: bool = True,
) -> ClipTensors:
    """Run providers and label ingestion for one clip, aligned to the frame grid."""
    ref = ref if ref is not None else ReferenceImage()
    try:
        clip_audio = load_audio(record.audio_path)
        t = frame_count(clip_audio, data_cfg.fps)
        latent = latent_stream_provider(record, clip_audio, t, feature_cfg, fps=data_cfg.fps)
        lips = lip_stream_provider(record, clip_audio, ref, t, feature_cfg, fps=data_cfg.fps)
        text = text_stream_provider(record, t, feature_cfg, fps=data_cfg.fps)
        target = None
        if with_target:
            seq = load_target_sequence(record, data_cfg)
            target = torch.from_numpy(
                resample_matrix(seq.values, t).astype(np.float32)
            )
    except DataError as exc:
        raise ProviderFailure(f"clip {record.clip_id!r}: {exc}") from exc
    return ClipTensors(
        clip_id=record.clip_id,
        subject_id=record.subject_id,
        latent=torch.from_numpy(latent.values.astype(np.float32)),
        frames=torch.from_numpy(lips.frames.astype(np.float32)),
        text=torch.from_numpy(text.values.astype(np.float32)),
        target=target,
    )


def clip_losses(model: SpeechBlendshapeModel, clip: ClipTensors) -> tuple[LossParts, torch.Tensor]:
    out = model(clip.latent, clip.frames, clip.text, clip.subject_id)
    l_tem, l_sem = model.alignment_losses(out["audio"], out["image"], out["text"])
    parts = LossParts(
        pos=position_loss(out["pred"], clip.target),
        mot=motion_loss(out["pred"], clip.target),
        tem=l_tem,
        sem=l_sem,
    )
    return parts, out["pred"]


@dataclass
class TrainedBundle:
    """Everything needed to predict and to continue bookkeeping."""

    model: SpeechBlendshapeModel
    model_cfg: ModelConfig
    train_cfg: TrainConfig
    data_cfg: DataConfig
    feature_cfg: FeatureConfig
    step: int = 0
    optimizer: torch.optim.Adam | None = None

    def config_echo(self) -> dict:
        return {
            "model": self.model_cfg.to_dict(),
            "train": asdict(self.train_cfg),
            "data": {"fps": self.data_cfg.fps, "channels": list(self.data_cfg.channels)},
            "features": asdict(self.feature_cfg),
            "subjects": list(self.model.subject_ids),
            "step": self.step,
        }


def _mean(values) -> float:
    return float(sum(values) / len(values))


def train_run(
    train_cfg: TrainConfig,
    manifest: list[ClipRecord],
    split: SplitSpec,
    model_cfg: ModelConfig | None = None,
    data_cfg: DataConfig | None = None,
    feature_cfg: FeatureConfig | None = None,
    log_path: str | os.PathLike | None = None,
    dump_dir: str | os.PathLike | None = None,
) -> TrainedBundle:
    """Optimize the model over the split's training clips.

    Clips are visited in seeded shuffled order each epoch, `batch_size` clips
    per optimizer step. A non-finite loss aborts with a state dump rather
    than being skipped. Returns the trained bundle (save with
    `save_checkpoint`).
    """
    model_cfg = model_cfg if model_cfg is not None else ModelConfig()
    data_cfg = data_cfg if data_cfg is not None else DataConfig()
    feature_cfg = feature_cfg if feature_cfg is not None else FeatureConfig()

    by_id = {r.clip_id: r for r in manifest}
    missing = [cid for cid in split.train + split.val if cid not in by_id]
    if missing:
        raise ValueError(f"split references clips absent from manifest: {missing}")
    if not split.train:
        raise ValueError("training split is empty")

    train_clips = [prepare_clip(by_id[cid], data_cfg, feature_cfg) for cid in split.train]
    val_clips = [prepare_clip(by_id[cid], data_cfg, feature_cfg) for cid in split.val]
    subjects = sorted({c.subject_id for c in train_clips})

    model = SpeechBlendshapeModel(model_cfg, subjects)
    optimizer = torch.optim.Adam(
        model.parameters(), lr=train_cfg.learning_rate,
        betas=(train_cfg.beta1, train_cfg.beta2), eps=train_cfg.eps,
    )
    scheduler = None
    if train_cfg.lr_schedule == "cosine":
        scheduler = torch.optim.lr_scheduler.CosineAnnealingLR(
            optimizer, T_max=train_cfg.epochs
        )
    bundle = TrainedBundle(
        model=model, model_cfg=model_cfg, train_cfg=train_cfg,
        data_cfg=data_cfg, feature_cfg=feature_cfg, optimizer=optimizer,
    )
    fallback_style = subjects[0]

    rng = random.Random(train_cfg.seed)
    log_fh = open(log_path, "w", encoding="utf-8") if log_path else None
    try:
        for epoch in range(1, train_cfg.epochs + 1):
            order = list(range(len(train_clips)))
            rng.shuffle(order)
            sums = {"pos": 0.0, "mot": 0.0, "tem": 0.0, "sem": 0.0, "total": 0.0}
            for start in range(0, len(order), train_cfg.batch_size):
                group = order[start:start + train_cfg.batch_size]
                optimizer.zero_grad()
                batch_loss = None
                for idx in group:
                    clip = train_clips[idx]
                    parts, _ = clip_losses(model, clip)
                    loss = total_loss(parts, train_cfg.weights)
                    if not torch.isfinite(loss):
                        _dump_state(bundle, dump_dir)
                        detached = [float(v.detach()) for v in parts]
                        raise DivergedLoss(
                            f"non-finite loss at epoch {epoch}, clip {clip.clip_id!r}: "
                            f"pos={detached[0]} mot={detached[1]} "
                            f"tem={detached[2]} sem={detached[3]}"
                        )
                    for key, value in zip(("pos", "mot", "tem", "sem"), parts):
                        sums[key] += float(value.detach())
                    sums["total"] += float(loss.detach())
                    batch_loss = loss if batch_loss is None else batch_loss + loss
                (batch_loss / len(group)).backward()
                if train_cfg.grad_clip > 0:
                    torch.nn.utils.clip_grad_norm_(model.parameters(), train_cfg.grad_clip)
                optimizer.step()
                bundle.step += 1
            if scheduler is not None:
                scheduler.step()

            n = len(train_clips)
            record = {
                "epoch": epoch,
                "mean_loss": sums["total"] / n,
                "L_pos": sums["pos"] / n,
                "L_mot": sums["mot"] / n,
                "L_tem": sums["tem"] / n,
                "L_sem": sums["sem"] / n,
            }
            if val_clips:
                record["val_L_pos"] = _validation_position_loss(
                    model, val_clips, fallback_style
                )
            if log_fh:
                log_fh.write(json.dumps(record) + "\n")
                log_fh.flush()
            log.info(
                "epoch %d mean_loss %.6g L_pos %.6g", epoch,
                record["mean_loss"], record["L_pos"],
            )
    finally:
        if log_fh:
            log_fh.close()
    return bundle


def _validation_position_loss(model, val_clips, fallback_style) -> float:
    known = set(model.subject_ids)
    with torch.no_grad():
        losses = []
        for clip in val_clips:
            style = clip.subject_id if clip.subject_id in known else fallback_style
            out = model(clip.latent, clip.frames, clip.text, style)
            losses.append(float(position_loss(out["pred"], clip.target)))
    return _mean(losses)


def _dump_state(bundle: TrainedBundle, dump_dir) -> None:
    if dump_dir is None:
        return
    try:
        os.makedirs(dump_dir, exist_ok=True)
        save_checkpoint(bundle, os.path.join(dump_dir, "diverged.ckpt.npz"))
    except Exception:  # the dump must never mask the original error
        log.exception("failed to write divergence dump")


def predict_clip(
    bundle: TrainedBundle,
    clip_audio: AudioClip,
    style_id: str,
    ref: ReferenceImage | None = None,
    transcript: str = "",
) -> BlendshapeSequence:
    """Full forward pass without gradients; raw (unclamped) coefficients."""
    record = ClipRecord(
        clip_id="::inference::", subject_id=style_id,
        audio_path="", coefficients_path="", transcript=transcript,
    )
    ref = ref if ref is not None else ReferenceImage()
    data_cfg, feature_cfg = bundle.data_cfg, bundle.feature_cfg
    t = frame_count(clip_audio, data_cfg.fps)
    latent = latent_stream_provider(record, clip_audio, t, feature_cfg, fps=data_cfg.fps)
    lips = lip_stream_provider(record, clip_audio, ref, t, feature_cfg, fps=data_cfg.fps)
    text = text_stream_provider(record, t, feature_cfg, fps=data_cfg.fps)
    with torch.no_grad():
        out = bundle.model(
            torch.from_numpy(latent.values.astype(np.float32)),
            torch.from_numpy(lips.frames.astype(np.float32)),
            torch.from_numpy(text.values.astype(np.float32)),
            style_id,
        )
    return BlendshapeSequence(
        values=out["pred"].numpy().astype(np.float64),
        fps=data_cfg.fps,
        channel_names=data_cfg.channels,
    )


# --- checkpoint container ----------------------------------------------------
#
# A checkpoint is a .npz archive holding:
#   config                      JSON string (model/train/data/features echo,
#                               subject ids, step counter)
#   param/<name>                float32 parameter tensors
#   adam/<name>/step            per-parameter step count
#   adam/<name>/exp_avg         first moment
#   adam/<name>/exp_avg_sq      second moment
# Reloading reproduces forward outputs bit-identically.

def save_checkpoint(bundle: TrainedBundle, path: str | os.PathLike) -> None:
    arrays: dict[str, np.ndarray] = {
        "config": np.asarray(json.dumps(bundle.config_echo())),
    }
    named = dict(bundle.model.named_parameters())
    for name, param in named.items():
        arrays[f"param/{name}"] = param.detach().numpy().astype(np.float32)
    if bundle.optimizer is not None:
        for name, param in named.items():
            state = bundle.optimizer.state.get(param)
            if not state:
                continue
            arrays[f"adam/{name}/step"] = np.asarray(float(state["step"]), dtype=np.float64)
            arrays[f"adam/{name}/exp_avg"] = state["exp_avg"].numpy().astype(np.float32)
            arrays[f"adam/{name}/exp_avg_sq"] = state["exp_avg_sq"].numpy().astype(np.float32)

    directory = os.path.dirname(os.fspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp.npz")
    os.close(fd)
    try:
        with open(tmp, "wb") as fh:
            np.savez(fh, **arrays)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def load_checkpoint(path: str | os.PathLike) -> TrainedBundle:
    if not os.path.exists(path):
        raise IoFailure(f"no such checkpoint: {path}")
    with np.load(path, allow_pickle=False) as archive:
        arrays = {k: archive[k] for k in archive.files}
    echo = json.loads(str(arrays.pop("config")[()]))

    model_cfg = ModelConfig.from_dict(echo["model"])
    train_cfg = TrainConfig(**echo["train"])
    data_cfg = DataConfig(fps=echo["data"]["fps"], channels=tuple(echo["data"]["channels"]))
    feature_cfg = FeatureConfig(**echo["features"])
    model = SpeechBlendshapeModel(model_cfg, echo["subjects"])

    named = dict(model.named_parameters())
    for name, param in named.items():
        key = f"param/{name}"
        if key not in arrays:
            raise IoFailure(f"{path}: checkpoint misses parameter {name!r}")
        with torch.no_grad():
            param.copy_(torch.from_numpy(arrays[key]))

    optimizer = torch.optim.Adam(
        model.parameters(), lr=train_cfg.learning_rate,
        betas=(train_cfg.beta1, train_cfg.beta2), eps=train_cfg.eps,
    )
    for name, param in named.items():
        step_key = f"adam/{name}/step"
        if step_key not in arrays:
            continue
        optimizer.state[param] = {
            "step": torch.tensor(float(arrays[step_key])),
            "exp_avg": torch.from_numpy(arrays[f"adam/{name}/exp_avg"]),
            "exp_avg_sq": torch.from_numpy(arrays[f"adam/{name}/exp_avg_sq"]),
        }
    return TrainedBundle(
        model=model, model_cfg=model_cfg, train_cfg=train_cfg,
        data_cfg=data_cfg, feature_cfg=feature_cfg,
        step=int(echo.get("step", 0)), optimizer=optimizer,
    )
