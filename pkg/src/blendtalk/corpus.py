"""Corpus manifests and subject-level split protocols.

Expected corpus layout::

    root/
      <subject_id>/
        meta.json        # {"gender": "male"|"female", "transcripts": {stem: text}}
        <stem>.wav
        <stem>.csv       # Live Link coefficient track paired with the wav

Manifests and splits serialize as line-delimited JSON with a fixed key order,
so rebuilding from the same tree is byte-identical.
"""

from __future__ import annotations

import json
import os
import random
from dataclasses import dataclass, field

from .errors import (
    InsufficientGenderCoverage,
    IoFailure,
    OrphanFile,
    TooFewSubjects,
)

GENDERS = ("male", "female")


@dataclass
class ClipRecord:
    clip_id: str
    subject_id: str
    audio_path: str
    coefficients_path: str
    gender: str | None = None
    transcript: str | None = None

    def __post_init__(self):
        if self.gender is not None and self.gender not in GENDERS:
            raise ValueError(f"gender must be one of {GENDERS}, got {self.gender!r}")


@dataclass
class SplitSpec:
    protocol: str
    seed: int
    train: list[str] = field(default_factory=list)
    val: list[str] = field(default_factory=list)
    test: list[str] = field(default_factory=list)

    def partition(self, name: str) -> list[str]:
        if name not in ("train", "val", "test"):
            raise ValueError(f"unknown partition {name!r}")
        return getattr(self, name)


def build_manifest(root: str | os.PathLike) -> list[ClipRecord]:
    """Scan a corpus tree into clip records, ordered by clip_id.

    Every wav must have a csv twin and vice versa; unpaired files raise
    OrphanFile naming the offender.
    """
    root = os.fspath(root)
    if not os.path.isdir(root):
        raise IoFailure(f"corpus root {root!r} is not a directory")
    records = []
    for subject in sorted(os.listdir(root)):
        subject_dir = os.path.join(root, subject)
        if not os.path.isdir(subject_dir):
            continue
        meta = {}
        meta_path = os.path.join(subject_dir, "meta.json")
        if os.path.exists(meta_path):
            with open(meta_path, "r", encoding="utf-8") as fh:
                meta = json.load(fh)
        transcripts = meta.get("transcripts", {})
        gender = meta.get("gender")

        stems_wav = {os.path.splitext(f)[0] for f in os.listdir(subject_dir) if f.endswith(".wav")}
        stems_csv = {os.path.splitext(f)[0] for f in os.listdir(subject_dir) if f.endswith(".csv")}
        for stem in sorted(stems_wav - stems_csv):
            raise OrphanFile(f"{os.path.join(subject_dir, stem + '.wav')} has no coefficient csv")
        for stem in sorted(stems_csv - stems_wav):
            raise OrphanFile(f"{os.path.join(subject_dir, stem + '.csv')} has no audio wav")

        for stem in sorted(stems_wav):
            records.append(ClipRecord(
                clip_id=f"{subject}/{stem}",
                subject_id=subject,
                audio_path=os.path.join(subject_dir, stem + ".wav"),
                coefficients_path=os.path.join(subject_dir, stem + ".csv"),
                gender=gender,
                transcript=transcripts.get(stem),
            ))
    records.sort(key=lambda r: r.clip_id)
    return records


def save_manifest(records: list[ClipRecord], path: str | os.PathLike) -> None:
    lines = []
    for r in records:
        obj = {
            "clip_id": r.clip_id,
            "subject_id": r.subject_id,
            "audio_path": r.audio_path,
            "coefficients_path": r.coefficients_path,
            "gender": r.gender,
            "transcript": r.transcript,
        }
        lines.append(json.dumps(obj, ensure_ascii=False))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_manifest(path: str | os.PathLike) -> list[ClipRecord]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    except OSError as exc:
        raise IoFailure(f"cannot read manifest {path}: {exc}") from exc
    records = [ClipRecord(**json.loads(ln)) for ln in lines]
    seen = set()
    for r in records:
        if r.clip_id in seen:
            raise ValueError(f"duplicate clip_id {r.clip_id!r} in manifest")
        seen.add(r.clip_id)
    return records


def _clips_by_subject(manifest: list[ClipRecord]) -> dict[str, list[str]]:
    by_subject: dict[str, list[str]] = {}
    for r in manifest:
        by_subject.setdefault(r.subject_id, []).append(r.clip_id)
    for clips in by_subject.values():
        clips.sort()
    return by_subject


def split_cross_subject(manifest: list[ClipRecord], seed: int) -> SplitSpec:
    """60/20/20 split by subject identity; train absorbs rounding remainders."""
    by_subject = _clips_by_subject(manifest)
    subjects = sorted(by_subject)
    if len(subjects) < 5:
        raise TooFewSubjects(f"cross_subject split needs >= 5 subjects, got {len(subjects)}")
    rng = random.Random(seed)
    rng.shuffle(subjects)
    n = len(subjects)
    n_val = int(n * 0.2)
    n_test = int(n * 0.2)
    n_train = n - n_val - n_test
    spec = SplitSpec(protocol="cross_subject", seed=seed)
    for bucket, names in (
        ("train", subjects[:n_train]),
        ("val", subjects[n_train:n_train + n_val]),
        ("test", subjects[n_train + n_val:]),
    ):
        for subject in names:
            spec.partition(bucket).extend(by_subject[subject])
    return spec


def split_cross_gender(manifest: list[ClipRecord], seed: int) -> SplitSpec:
    """All-male training set; female subjects split evenly between val and test."""
    for r in manifest:
        if r.gender is None:
            raise InsufficientGenderCoverage(f"clip {r.clip_id!r} has no gender annotation")
    by_subject = _clips_by_subject(manifest)
    gender_of: dict[str, str] = {}
    for r in manifest:
        prev = gender_of.setdefault(r.subject_id, r.gender)
        if prev != r.gender:
            raise InsufficientGenderCoverage(
                f"subject {r.subject_id!r} has conflicting gender annotations"
            )
    males = sorted(s for s, g in gender_of.items() if g == "male")
    females = sorted(s for s, g in gender_of.items() if g == "female")
    if len(males) < 1 or len(females) < 2:
        raise InsufficientGenderCoverage(
            f"cross_gender split needs >= 1 male and >= 2 female subjects, "
            f"got {len(males)} male / {len(females)} female"
        )
    rng = random.Random(seed)
    rng.shuffle(females)
    n_val = len(females) // 2
    spec = SplitSpec(protocol="cross_gender", seed=seed)
    for subject in males:
        spec.train.extend(by_subject[subject])
    for subject in females[:n_val]:
        spec.val.extend(by_subject[subject])
    for subject in females[n_val:]:
        spec.test.extend(by_subject[subject])
    return spec


def split_by_protocol(manifest: list[ClipRecord], protocol: str, seed: int) -> SplitSpec:
    if protocol == "cross_subject":
        return split_cross_subject(manifest, seed)
    if protocol == "cross_gender":
        return split_cross_gender(manifest, seed)
    raise ValueError(f"unknown protocol {protocol!r}")


def save_split(spec: SplitSpec, path: str | os.PathLike) -> None:
    obj = {
        "protocol": spec.protocol,
        "seed": spec.seed,
        "train": spec.train,
        "val": spec.val,
        "test": spec.test,
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


def load_split(path: str | os.PathLike) -> SplitSpec:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except OSError as exc:
        raise IoFailure(f"cannot read split {path}: {exc}") from exc
    return SplitSpec(
        protocol=obj["protocol"], seed=obj["seed"],
        train=list(obj["train"]), val=list(obj["val"]), test=list(obj["test"]),
    )
