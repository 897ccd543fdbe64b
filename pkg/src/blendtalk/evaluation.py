"""Lip error metrics and split-level evaluation reports.

LVE is the per-frame maximum squared coefficient error; ALE the per-frame
mean. Both aggregate as the frame-weighted mean over every frame of every
clip in the partition, and are reported raw plus in the conventional x1e-2
display scale.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

import torch

from .corpus import ClipRecord, SplitSpec
from .errors import ShapeMismatch
from .training import TrainedBundle, prepare_clip


def _paired(pred, target) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape or pred.ndim != 2:
        raise ShapeMismatch(f"shapes differ: {pred.shape} vs {target.shape}")
    return pred, target


def lve(pred, target) -> float:
    """Mean over frames of the maximum per-channel squared error."""
    pred, target = _paired(pred, target)
    return float(((pred - target) ** 2).max(axis=1).mean())


def ale(pred, target) -> float:
    """Mean over frames of the mean per-channel squared error."""
    pred, target = _paired(pred, target)
    return float(((pred - target) ** 2).mean(axis=1).mean())


DISPLAY_SCALE = 1e-2


@dataclass
class EvalReport:
    protocol: str
    partition: str
    clip_count: int
    frame_count: int
    lve: float
    ale: float
    per_clip: list[dict] = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (0.0 <= self.ale <= self.lve):
            raise ValueError(f"expected 0 <= ale <= lve, got ale={self.ale} lve={self.lve}")

    def to_dict(self) -> dict:
        return {
            "protocol": self.protocol,
            "partition": self.partition,
            "clip_count": self.clip_count,
            "frame_count": self.frame_count,
            "lve": self.lve,
            "ale": self.ale,
            "lve_x1e2": self.lve / DISPLAY_SCALE,
            "ale_x1e2": self.ale / DISPLAY_SCALE,
            "per_clip": self.per_clip,
            "config": self.config,
        }


def evaluate_split(
    bundle: TrainedBundle,
    manifest: list[ClipRecord],
    split: SplitSpec,
    partition: str = "test",
) -> EvalReport:
    """Predict every clip of a partition and accumulate frame-weighted metrics.

    Clips of subjects without a registered style are conditioned on the first
    registered training style.
    """
    if partition not in ("val", "test"):
        raise ValueError(f"partition must be val or test, got {partition!r}")
    clip_ids = split.partition(partition)
    if not clip_ids:
        raise ValueError(f"partition {partition!r} of split is empty")
    by_id = {r.clip_id: r for r in manifest}
    missing = [cid for cid in clip_ids if cid not in by_id]
    if missing:
        raise ValueError(f"split references clips absent from manifest: {missing}")

    known = set(bundle.model.subject_ids)
    fallback = bundle.model.subject_ids[0]
    per_clip = []
    sq_max_sum = 0.0
    sq_mean_sum = 0.0
    frames_total = 0
    for cid in clip_ids:
        record = by_id[cid]
        clip = prepare_clip(record, bundle.data_cfg, bundle.feature_cfg)
        style = record.subject_id if record.subject_id in known else fallback
        with torch.no_grad():
            out = bundle.model(clip.latent, clip.frames, clip.text, style)
        pred = out["pred"].numpy()
        target = clip.target.numpy()
        sq = (pred - target) ** 2
        t = sq.shape[0]
        sq_max_sum += float(sq.max(axis=1).sum())
        sq_mean_sum += float(sq.mean(axis=1).sum())
        frames_total += t
        per_clip.append({
            "clip_id": cid,
            "style": style,
            "frames": t,
            "lve": lve(pred, target),
            "ale": ale(pred, target),
        })
    return EvalReport(
        protocol=split.protocol,
        partition=partition,
        clip_count=len(clip_ids),
        frame_count=frames_total,
        lve=sq_max_sum / frames_total,
        ale=sq_mean_sum / frames_total,
        per_clip=per_clip,
        config=bundle.config_echo(),
    )


def save_report(report: EvalReport, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(report.to_dict(), fh, indent=2)
        fh.write("\n")


def save_per_clip_csv(report: EvalReport, path: str | os.PathLike) -> None:
    lines = ["clip_id,style,frames,lve,ale"]
    for row in report.per_clip:
        lines.append(
            f"{row['clip_id']},{row['style']},{row['frames']},{row['lve']:.10g},{row['ale']:.10g}"
        )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def clip_metrics(bundle: TrainedBundle, record: ClipRecord) -> dict[str, float]:
    """Metrics of the bundle's model on one clip; handy for before/after checks."""
    clip = prepare_clip(record, bundle.data_cfg, bundle.feature_cfg)
    known = set(bundle.model.subject_ids)
    style = record.subject_id if record.subject_id in known else bundle.model.subject_ids[0]
    with torch.no_grad():
        out = bundle.model(clip.latent, clip.frames, clip.text, style)
    pred = out["pred"].numpy()
    target = clip.target.numpy()
    return {"lve": lve(pred, target), "ale": ale(pred, target)}
