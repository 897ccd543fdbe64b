"""Per-frame pseudo-modality feature providers.

Three streams feed the model: latent audio features, text features, and lip
image frames. Each stream comes from a provider that is deterministic and
carries no trainable parameters. The synthetic providers make the repo
self-contained; the file provider reads precomputed features (e.g. dumped
from large pretrained nets) in the PMMF1 binary format::

    magic "PMMF1" | uint32-LE frame count T | uint32-LE dim d
    | T*d little-endian float32, row-major

All provider outputs live on the label frame grid: exactly T frames, where
T = frame_count(audio, fps).
"""

from __future__ import annotations

import os
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .audio import AudioClip
from .corpus import ClipRecord
from .errors import (
    BadMagic,
    ClipTooShort,
    ConfigError,
    IoFailure,
    NoTextSource,
    TruncatedPayload,
)

MODALITIES = ("latent_audio", "audio", "text", "image")
PMMF_MAGIC = b"PMMF1"

# Synthetic text vocabulary: blank + a-z + 0-9 + space + apostrophe + other.
TEXT_BLANK = 0
TEXT_OTHER = 39
SYNTHETIC_TEXT_VOCAB = 40


@dataclass
class FeatureStream:
    values: np.ndarray  # (T, d) float32
    modality: str
    fps: float

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.values.ndim != 2 or self.values.shape[0] < 1 or self.values.shape[1] < 1:
            raise ValueError(f"expected non-empty (T, d) values, got {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("feature values must be finite")
        if self.modality not in MODALITIES:
            raise ValueError(f"unknown modality {self.modality!r}")

    @property
    def frame_count(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]


@dataclass
class LipFrameStream:
    frames: np.ndarray  # (T, H, W) grayscale in [0, 1]
    fps: float

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float32)
        if self.frames.ndim != 3:
            raise ValueError(f"expected (T, H, W) frames, got {self.frames.shape}")
        if np.any(self.frames < 0) or np.any(self.frames > 1):
            raise ValueError("pixel values must lie in [0, 1]")

    @property
    def frame_count(self) -> int:
        return self.frames.shape[0]


@dataclass
class ReferenceImage:
    """Prior face structure: either an actual grayscale image or an identifier
    that seeds a fixed background texture."""

    identifier: str = "default"
    image: np.ndarray | None = None

    def __post_init__(self):
        if self.image is not None:
            self.image = np.asarray(self.image, dtype=np.float32)
            if self.image.ndim != 2:
                raise ValueError("reference image must be 2-D grayscale")
            if np.any(self.image < 0) or np.any(self.image > 1):
                raise ValueError("reference pixels must lie in [0, 1]")


@dataclass
class FeatureConfig:
    """Provider selection and dimensions.

    Providers are "synthetic" or "file"; file providers read
    `<feature_dir>/<clip_id>.<latent|text|image>.pmmf`.
    """

    latent_provider: str = "synthetic"
    text_provider: str = "synthetic"
    image_provider: str = "synthetic"
    feature_dir: str | None = None
    latent_dim: int = 64
    text_vocab: int = SYNTHETIC_TEXT_VOCAB
    image_size: int = 16
    envelope_smoothing: int = 3

    def __post_init__(self):
        for name in (self.latent_provider, self.text_provider, self.image_provider):
            if name not in ("synthetic", "file"):
                raise ConfigError(f"unknown provider kind {name!r}")
        if min(self.latent_dim, self.text_vocab, self.image_size) < 1:
            raise ConfigError("feature dimensions must be positive")
        if self.envelope_smoothing < 1:
            raise ConfigError("envelope_smoothing must be >= 1")
        if "file" in (self.latent_provider, self.text_provider, self.image_provider) \
                and not self.feature_dir:
            raise ConfigError("file providers need feature_dir")


def frame_count(audio: AudioClip, fps: float) -> int:
    """Number of label frames covered by a clip: floor(samples * fps / rate)."""
    if fps <= 0:
        raise ValueError("fps must be positive")
    t = int(audio.num_samples * fps // audio.sample_rate)
    if t < 1:
        raise ClipTooShort(
            f"{audio.num_samples} samples at {audio.sample_rate} Hz cover no {fps} fps frame"
        )
    return t


def _frame_windows(audio: AudioClip, t: int, fps: float) -> np.ndarray:
    """Stack per-frame sample windows of length D = round(rate / fps), zero-padded."""
    d = int(round(audio.sample_rate / fps))
    windows = np.zeros((t, d), dtype=np.float64)
    for k in range(t):
        chunk = audio.samples[k * d:(k + 1) * d]
        windows[k, :len(chunk)] = chunk
    return windows


def _triangular_filterbank(n_bands: int, window_len: int, sample_rate: int, f_max: float) -> np.ndarray:
    """(n_bands, n_bins) triangular filters with peaks spread linearly over (0, f_max)."""
    freqs = np.fft.rfftfreq(window_len, d=1.0 / sample_rate)
    edges = np.linspace(0.0, f_max, n_bands + 2)
    bank = np.zeros((n_bands, freqs.shape[0]), dtype=np.float64)
    for j in range(n_bands):
        lo, mid, hi = edges[j], edges[j + 1], edges[j + 2]
        rising = (freqs - lo) / (mid - lo)
        falling = (hi - freqs) / (hi - mid)
        bank[j] = np.clip(np.minimum(rising, falling), 0.0, None)
    return bank


def audio_latent_synthetic(audio: AudioClip, cfg: FeatureConfig, fps: float = 30.0) -> FeatureStream:
    """Frozen stand-in for a pretrained speech encoder: per-frame log filterbank
    energies, `latent_dim` triangular bands over 0-8 kHz, log(1 + energy)."""
    t = frame_count(audio, fps)
    windows = _frame_windows(audio, t, fps)
    spectra = np.abs(np.fft.rfft(windows, axis=1)) ** 2
    bank = _triangular_filterbank(
        cfg.latent_dim, windows.shape[1], audio.sample_rate,
        f_max=min(8000.0, audio.sample_rate / 2),
    )
    energies = spectra @ bank.T / windows.shape[1]
    return FeatureStream(values=np.log1p(energies), modality="latent_audio", fps=fps)


def _text_symbol(ch: str) -> int:
    if ch.isascii() and ch.isalpha():
        return 1 + (ord(ch.lower()) - ord("a"))
    if ch.isascii() and ch.isdigit():
        return 27 + (ord(ch) - ord("0"))
    if ch == " ":
        return 37
    if ch == "'":
        return 38
    return TEXT_OTHER


def text_stream_synthetic(transcript: str, t: int, cfg: FeatureConfig, fps: float = 30.0) -> FeatureStream:
    """Frozen stand-in for a speech recognizer: transcript symbols spread
    uniformly over the frame grid as soft one-hots (0.9 peak)."""
    if cfg.text_vocab < SYNTHETIC_TEXT_VOCAB:
        raise ConfigError(
            f"synthetic text provider needs text_vocab >= {SYNTHETIC_TEXT_VOCAB}"
        )
    symbols = [_text_symbol(ch) for ch in transcript] or [TEXT_BLANK]
    off_value = 0.1 / (cfg.text_vocab - 1)
    values = np.full((t, cfg.text_vocab), off_value, dtype=np.float64)
    n = len(symbols)
    for i in range(t):
        values[i, symbols[i * n // t]] = 0.9
    return FeatureStream(values=values, modality="text", fps=fps)


def text_stream_provider(
    record: ClipRecord, t: int, cfg: FeatureConfig, fps: float = 30.0
) -> FeatureStream:
    """Text features for a clip: precomputed PMMF1 file when configured and
    present, otherwise synthetic from the transcript."""
    if cfg.text_provider == "file":
        path = _feature_path(cfg, record.clip_id, "text")
        if os.path.exists(path):
            stream = load_feature_file(path, modality="text", fps=fps)
            return resample_stream(stream, t)
    if record.transcript is None:
        raise NoTextSource(f"clip {record.clip_id!r} has neither transcript nor feature file")
    return text_stream_synthetic(record.transcript, t, cfg, fps=fps)


def aperture_envelope(audio: AudioClip, t: int, cfg: FeatureConfig, fps: float = 30.0) -> np.ndarray:
    """Per-frame mouth aperture in [0, 1]: smoothed RMS energy, max-normalized.

    This is a function of the audio alone; the reference image never enters.
    """
    windows = _frame_windows(audio, t, fps)
    rms = np.sqrt(np.mean(windows ** 2, axis=1))
    w = min(cfg.envelope_smoothing, t)
    if w > 1:
        padded = np.pad(rms, (w // 2, w - 1 - w // 2), mode="edge")
        rms = np.convolve(padded, np.full(w, 1.0 / w), mode="valid")
    peak = rms.max()
    return rms / peak if peak > 0 else np.zeros_like(rms)


def _background_texture(ref: ReferenceImage, size: int) -> np.ndarray:
    """Fixed background in [0, 0.5] derived from the reference image or its id."""
    if ref.image is not None:
        h, w = ref.image.shape
        rows = (np.arange(size) * h // size)
        cols = (np.arange(size) * w // size)
        return 0.5 * ref.image[np.ix_(rows, cols)].astype(np.float64)
    seed = zlib.crc32(ref.identifier.encode("utf-8"))
    rng = np.random.default_rng(seed)
    return rng.uniform(0.0, 0.5, size=(size, size))


def lip_frames_synthetic(
    audio: AudioClip, ref: ReferenceImage, t: int, cfg: FeatureConfig, fps: float = 30.0
) -> LipFrameStream:
    """Frozen stand-in for a talking-head generator: a procedural mouth whose
    vertical aperture follows the audio energy envelope.

    Mouth pixels are written as exactly 1.0 over a background in [0, 0.5], so
    the aperture mask is recoverable from the rendered frames.
    """
    env = aperture_envelope(audio, t, cfg, fps=fps)
    size = cfg.image_size
    background = _background_texture(ref, size)
    cy, cx = 0.65 * (size - 1), 0.5 * (size - 1)
    semi_x = 0.30 * size
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64)
    frames = np.empty((t, size, size), dtype=np.float64)
    for k in range(t):
        semi_y = max(env[k] * 0.25 * size, 0.5)
        mouth = ((xs - cx) / semi_x) ** 2 + ((ys - cy) / semi_y) ** 2 <= 1.0
        frame = background.copy()
        frame[mouth] = 1.0
        frames[k] = frame
    return LipFrameStream(frames=frames, fps=fps)


def _feature_path(cfg: FeatureConfig, clip_id: str, kind: str) -> str:
    return os.path.join(cfg.feature_dir, f"{clip_id}.{kind}.pmmf")


def write_feature_file(path: str | os.PathLike, values: np.ndarray) -> None:
    values = np.ascontiguousarray(values, dtype=np.float32)
    if values.ndim != 2:
        raise ValueError(f"expected (T, d) values, got {values.shape}")
    t, d = values.shape
    with open(path, "wb") as fh:
        fh.write(PMMF_MAGIC)
        fh.write(struct.pack("<II", t, d))
        fh.write(values.astype("<f4").tobytes())


def load_feature_file(
    path: str | os.PathLike, modality: str = "latent_audio", fps: float = 30.0
) -> FeatureStream:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise IoFailure(f"cannot read feature file {path}: {exc}") from exc
    if blob[:len(PMMF_MAGIC)] != PMMF_MAGIC:
        raise BadMagic(f"{path}: not a PMMF1 file")
    header_end = len(PMMF_MAGIC) + 8
    if len(blob) < header_end:
        raise TruncatedPayload(f"{path}: truncated header")
    t, d = struct.unpack("<II", blob[len(PMMF_MAGIC):header_end])
    payload = blob[header_end:]
    if len(payload) != 4 * t * d:
        raise TruncatedPayload(
            f"{path}: payload is {len(payload)} bytes, expected {4 * t * d}"
        )
    values = np.frombuffer(payload, dtype="<f4").reshape(t, d)
    return FeatureStream(values=values, modality=modality, fps=fps)


def resample_stream(stream: FeatureStream, t_target: int) -> FeatureStream:
    """Linearly interpolate a stream along time to exactly `t_target` frames."""
    if t_target < 1:
        raise ValueError("t_target must be >= 1")
    t_in = stream.frame_count
    if t_in == t_target:
        return stream
    values = resample_matrix(stream.values, t_target)
    fps = stream.fps * t_target / t_in
    return FeatureStream(values=values, modality=stream.modality, fps=fps)


def resample_matrix(values: np.ndarray, t_target: int) -> np.ndarray:
    """Endpoint-aligned linear time interpolation of a (T, d) matrix."""
    values = np.asarray(values, dtype=np.float64)
    t_in = values.shape[0]
    if t_in == 1:
        return np.repeat(values, t_target, axis=0)
    if t_target == 1:
        positions = np.array([(t_in - 1) / 2.0])
    else:
        positions = np.arange(t_target, dtype=np.float64) * (t_in - 1) / (t_target - 1)
    src = np.arange(t_in, dtype=np.float64)
    out = np.empty((t_target, values.shape[1]), dtype=np.float64)
    for c in range(values.shape[1]):
        out[:, c] = np.interp(positions, src, values[:, c])
    return out


def latent_stream_provider(
    record: ClipRecord, audio: AudioClip, t: int, cfg: FeatureConfig, fps: float = 30.0
) -> FeatureStream:
    if cfg.latent_provider == "file":
        path = _feature_path(cfg, record.clip_id, "latent")
        stream = load_feature_file(path, modality="latent_audio", fps=fps)
        return resample_stream(stream, t)
    return audio_latent_synthetic(audio, cfg, fps=fps)


def lip_stream_provider(
    record: ClipRecord, audio: AudioClip, ref: ReferenceImage, t: int,
    cfg: FeatureConfig, fps: float = 30.0,
) -> LipFrameStream:
    if cfg.image_provider == "file":
        path = _feature_path(cfg, record.clip_id, "image")
        stream = load_feature_file(path, modality="image", fps=fps)
        stream = resample_stream(stream, t)
        side = cfg.image_size
        if stream.dim != side * side:
            raise ValueError(
                f"{path}: rows of {stream.dim} values cannot form {side}x{side} frames"
            )
        frames = np.clip(stream.values.reshape(t, side, side), 0.0, 1.0)
        return LipFrameStream(frames=frames, fps=fps)
    return lip_frames_synthetic(audio, ref, t, cfg, fps=fps)
