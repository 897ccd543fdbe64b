"""Deterministic synthetic corpus for desk-scale training, tests, and demos.

Each clip is a short amplitude-modulated tone whose syllable-like energy
envelope also drives the articulation coefficient labels through fixed
per-subject response curves, so the audio-to-coefficient mapping is genuinely
learnable. Audio is written as 48 kHz 16-bit WAV, labels as 60 fps Live Link
CSV; downstream ingestion normalizes both.
"""

from __future__ import annotations

import json
import os

import numpy as np
from scipy.io import wavfile

from .livelink import DEFAULT_CHANNELS, LIVELINK_CHANNELS, write_livelink_csv

_WORDS = (
    "da", "ni", "hao", "shan", "gong", "zuo", "ming", "tian",
    "xie", "chi", "fan", "shuo", "hua", "kan", "shu", "lai",
)


def _syllable_envelope(rng: np.random.Generator, times: np.ndarray, n_syllables: int) -> np.ndarray:
    """Sum of smooth bumps in [0, 1] imitating syllable energy."""
    duration = times[-1] if len(times) else 1.0
    env = np.zeros_like(times)
    centers = np.linspace(0.15, 0.85, n_syllables) * duration
    centers = centers + rng.uniform(-0.05, 0.05, size=n_syllables) * duration
    for c in centers:
        width = rng.uniform(0.06, 0.12) * duration
        gain = rng.uniform(0.5, 1.0)
        env += gain * np.exp(-0.5 * ((times - c) / width) ** 2)
    peak = env.max()
    return env / peak if peak > 0 else env


def _subject_response(rng: np.random.Generator, n_channels: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-channel (base, amplitude) response of coefficients to the envelope."""
    base = rng.uniform(0.02, 0.08, size=n_channels)
    amp = rng.uniform(0.15, 0.55, size=n_channels)
    # a few channels barely react, like real squint/sneer channels
    quiet = rng.choice(n_channels, size=n_channels // 4, replace=False)
    amp[quiet] *= 0.1
    return base, amp


def generate_corpus(
    root: str | os.PathLike,
    subjects: int = 3,
    clips_per_subject: int = 2,
    duration: float = 2.0,
    seed: int = 0,
    sample_rate: int = 48000,
    label_fps: float = 60.0,
) -> list[str]:
    """Emit a corpus tree under `root`; returns the generated clip ids.

    Subject genders follow a fixed pattern (index % 3 == 0 is male), so the
    default 3-subject corpus supports the cross-gender protocol and 5+
    subjects support cross-subject.
    """
    root = os.fspath(root)
    os.makedirs(root, exist_ok=True)
    channel_index = {name: i for i, name in enumerate(LIVELINK_CHANNELS)}
    clip_ids = []
    for s in range(subjects):
        subject_id = f"s{s + 1:02d}"
        subject_dir = os.path.join(root, subject_id)
        os.makedirs(subject_dir, exist_ok=True)
        subject_rng = np.random.default_rng((seed, 1, s))
        base, amp = _subject_response(subject_rng, len(DEFAULT_CHANNELS))
        gender = "male" if s % 3 == 0 else "female"
        transcripts = {}
        for c in range(clips_per_subject):
            stem = f"clip{c + 1:02d}"
            rng = np.random.default_rng((seed, 2, s, c))
            n_samples = int(duration * sample_rate)
            t_audio = np.arange(n_samples) / sample_rate
            n_syllables = int(rng.integers(2, 5))
            env = _syllable_envelope(rng, t_audio, n_syllables)
            f0 = rng.uniform(110.0, 240.0)
            carrier = np.sin(2 * np.pi * f0 * t_audio) + 0.4 * np.sin(2 * np.pi * 2 * f0 * t_audio)
            samples = 0.6 * env * carrier
            wavfile.write(
                os.path.join(subject_dir, stem + ".wav"),
                sample_rate,
                (samples * 32767).astype(np.int16),
            )

            n_frames = int(duration * label_fps)
            t_frames = np.arange(n_frames) / label_fps
            env_frames = np.interp(t_frames, t_audio, env)
            values = np.zeros((n_frames, len(LIVELINK_CHANNELS)))
            for j, name in enumerate(DEFAULT_CHANNELS):
                values[:, channel_index[name]] = np.clip(
                    base[j] + amp[j] * env_frames, 0.0, 1.0
                )
            write_livelink_csv(os.path.join(subject_dir, stem + ".csv"), t_frames, values)

            words = rng.choice(len(_WORDS), size=int(rng.integers(2, 5)))
            transcripts[stem] = " ".join(_WORDS[w] for w in words)
            clip_ids.append(f"{subject_id}/{stem}")

        meta = {"gender": gender, "transcripts": transcripts}
        with open(os.path.join(subject_dir, "meta.json"), "w", encoding="utf-8") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return clip_ids
