"""WAV ingestion and sample-rate normalization.

All downstream consumers expect mono float audio in [-1, 1] at 16 kHz.
Resampling defaults to linear interpolation and is injectable, so a
windowed-sinc resampler can be swapped in without touching callers.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.io import wavfile

from .errors import EmptyAudio, IoFailure, UnsupportedEncoding

TARGET_SAMPLE_RATE = 16000


@dataclass
class AudioClip:
    samples: np.ndarray  # (N,) float64 in [-1, 1]
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ValueError("samples must be one-dimensional")
        if np.any(np.isnan(self.samples)):
            raise ValueError("samples contain NaN")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")

    @property
    def num_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return self.num_samples / self.sample_rate


Resampler = Callable[[np.ndarray, int, int], np.ndarray]


def linear_resample(samples: np.ndarray, src_rate: int, dst_rate: int) -> np.ndarray:
    """Resample by linear interpolation; output length rounds n * dst / src."""
    if src_rate == dst_rate:
        return np.asarray(samples, dtype=np.float64)
    n = len(samples)
    n_out = int(round(n * dst_rate / src_rate))
    positions = np.arange(n_out, dtype=np.float64) * (src_rate / dst_rate)
    return np.interp(positions, np.arange(n, dtype=np.float64), samples)


def load_audio(
    path: str | os.PathLike,
    target_rate: int = TARGET_SAMPLE_RATE,
    resampler: Resampler = linear_resample,
) -> AudioClip:
    """Load a PCM WAV (16-bit int or 32-bit float, mono or stereo) at 16 kHz.

    Stereo is downmixed by channel averaging before resampling.
    """
    try:
        rate, data = wavfile.read(os.fspath(path))
    except FileNotFoundError as exc:
        raise IoFailure(f"no such file: {path}") from exc
    except ValueError as exc:
        raise UnsupportedEncoding(f"{path}: {exc}") from exc

    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(np.float64)
    else:
        raise UnsupportedEncoding(f"{path}: unsupported sample dtype {data.dtype}")

    if samples.size == 0:
        raise EmptyAudio(f"{path}: no samples")
    if samples.ndim == 2:
        if samples.shape[1] > 2:
            raise UnsupportedEncoding(f"{path}: {samples.shape[1]} channels (mono/stereo only)")
        samples = samples.mean(axis=1)
    elif samples.ndim != 1:
        raise UnsupportedEncoding(f"{path}: unexpected array rank {samples.ndim}")
    if np.any(np.isnan(samples)):
        raise UnsupportedEncoding(f"{path}: NaN samples")

    samples = resampler(samples, int(rate), int(target_rate))
    samples = np.clip(samples, -1.0, 1.0)
    return AudioClip(samples=samples, sample_rate=int(target_rate))
