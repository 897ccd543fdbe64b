"""Live Link Face coefficient tracks: CSV ingest/export, resampling, channel selection.

The CSV dialect handled here mirrors what the Live Link Face iOS app exports:
a ``Timecode`` column, a ``BlendShapeCount`` column, and 61 named coefficient
channels (52 ARKit blendshapes plus 9 head/eye rotation channels). Files are
UTF-8 with LF or CRLF line endings; we always emit LF. Timecodes are either
decimal seconds (what `export_blendshape_csv` writes) or the app's
``HH:MM:SS:FF.fff`` form, where the frame field counts frames at
`timecode_rate` (60 by default). Channel headers are matched
case-insensitively so both ARKit-style ``jawOpen`` and Live Link's ``JawOpen``
parse.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    IoFailure,
    MissingColumn,
    NonMonotonicTimecode,
    TooShort,
    UnknownChannel,
    ValueOutOfRange,
)

# Column order of a Live Link Face export (ARKit naming).
LIVELINK_CHANNELS = (
    "eyeBlinkLeft", "eyeLookDownLeft", "eyeLookInLeft", "eyeLookOutLeft",
    "eyeLookUpLeft", "eyeSquintLeft", "eyeWideLeft",
    "eyeBlinkRight", "eyeLookDownRight", "eyeLookInRight", "eyeLookOutRight",
    "eyeLookUpRight", "eyeSquintRight", "eyeWideRight",
    "jawForward", "jawLeft", "jawRight", "jawOpen",
    "mouthClose", "mouthFunnel", "mouthPucker", "mouthLeft", "mouthRight",
    "mouthSmileLeft", "mouthSmileRight", "mouthFrownLeft", "mouthFrownRight",
    "mouthDimpleLeft", "mouthDimpleRight", "mouthStretchLeft", "mouthStretchRight",
    "mouthRollLower", "mouthRollUpper", "mouthShrugLower", "mouthShrugUpper",
    "mouthPressLeft", "mouthPressRight", "mouthLowerDownLeft", "mouthLowerDownRight",
    "mouthUpperUpLeft", "mouthUpperUpRight",
    "browDownLeft", "browDownRight", "browInnerUp", "browOuterUpLeft", "browOuterUpRight",
    "cheekPuff", "cheekSquintLeft", "cheekSquintRight",
    "noseSneerLeft", "noseSneerRight",
    "tongueOut",
    "headYaw", "headPitch", "headRoll",
    "leftEyeYaw", "leftEyePitch", "leftEyeRoll",
    "rightEyeYaw", "rightEyePitch", "rightEyeRoll",
)
assert len(LIVELINK_CHANNELS) == 61

# The articulation subset used as regression targets: jaw (4) + mouth (23)
# + cheek (3) + nose (2). Configurable everywhere it is consumed.
DEFAULT_CHANNELS = (
    "jawForward", "jawLeft", "jawRight", "jawOpen",
    "mouthClose", "mouthFunnel", "mouthPucker", "mouthLeft", "mouthRight",
    "mouthSmileLeft", "mouthSmileRight", "mouthFrownLeft", "mouthFrownRight",
    "mouthDimpleLeft", "mouthDimpleRight", "mouthStretchLeft", "mouthStretchRight",
    "mouthRollLower", "mouthRollUpper", "mouthShrugLower", "mouthShrugUpper",
    "mouthPressLeft", "mouthPressRight", "mouthLowerDownLeft", "mouthLowerDownRight",
    "mouthUpperUpLeft", "mouthUpperUpRight",
    "cheekPuff", "cheekSquintLeft", "cheekSquintRight",
    "noseSneerLeft", "noseSneerRight",
)
assert len(DEFAULT_CHANNELS) == 32

VALUE_TOLERANCE = 1e-6


@dataclass
class RawCoefficientTrack:
    """A timestamped 61-channel coefficient track as captured (nominally 60 fps)."""

    timecodes: np.ndarray  # (T,) seconds, strictly increasing
    values: np.ndarray     # (T, 61) in [0, 1]
    source_rate: float
    channel_names: tuple[str, ...] = LIVELINK_CHANNELS

    def __post_init__(self):
        self.timecodes = np.asarray(self.timecodes, dtype=np.float64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[1] != len(LIVELINK_CHANNELS):
            raise ValueError(f"expected (T, 61) values, got {self.values.shape}")
        if self.timecodes.shape[0] != self.values.shape[0]:
            raise ValueError("timecodes and values disagree on frame count")
        if self.timecodes.size > 1 and not np.all(np.diff(self.timecodes) > 0):
            raise NonMonotonicTimecode("timecodes must be strictly increasing")
        if np.any(self.values < -VALUE_TOLERANCE) or np.any(self.values > 1 + VALUE_TOLERANCE):
            raise ValueOutOfRange("coefficients outside [0, 1]")
        self.values = np.clip(self.values, 0.0, 1.0)
        if len(self.channel_names) != self.values.shape[1]:
            raise ValueError("channel_names length mismatch")

    @property
    def frame_count(self) -> int:
        return self.values.shape[0]


@dataclass
class BlendshapeSequence:
    """A fixed-rate track over the modeled coefficient channels."""

    values: np.ndarray  # (T, C), finite; may leave [0, 1] for raw predictions
    fps: float
    channel_names: tuple[str, ...] = DEFAULT_CHANNELS

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.channel_names = tuple(self.channel_names)
        if self.values.ndim != 2:
            raise ValueError(f"expected (T, C) values, got shape {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("coefficient values must be finite")
        if self.fps <= 0:
            raise ValueError("fps must be positive")
        if len(self.channel_names) != self.values.shape[1]:
            raise ValueError("channel_names length mismatch")
        if len(set(self.channel_names)) != len(self.channel_names):
            raise ValueError("duplicate channel names")

    @property
    def frame_count(self) -> int:
        return self.values.shape[0]


def _timecode_to_seconds(text: str, timecode_rate: float) -> float:
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 4:
            raise ValueError(f"malformed timecode {text!r}")
        hh, mm, ss, ff = parts
        return int(hh) * 3600 + int(mm) * 60 + int(ss) + float(ff) / timecode_rate
    return float(text)


def ingest_livelink_csv(path: str | os.PathLike, timecode_rate: float = 60.0) -> RawCoefficientTrack:
    """Parse a Live Link Face CSV into a RawCoefficientTrack.

    Raises MissingColumn if any of Timecode/BlendShapeCount/61 channels is
    absent, ValueOutOfRange for coefficients outside [0, 1] beyond 1e-6, and
    NonMonotonicTimecode when row times do not increase.
    """
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise MissingColumn(f"{path}: empty file") from None
            rows = [row for row in reader if row]
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc

    lower_index = {name.strip().lower(): i for i, name in enumerate(header)}
    for required in ("timecode", "blendshapecount"):
        if required not in lower_index:
            raise MissingColumn(f"{path}: missing column {required!r}")
    time_col = lower_index["timecode"]
    channel_cols = []
    for name in LIVELINK_CHANNELS:
        idx = lower_index.get(name.lower())
        if idx is None:
            raise MissingColumn(f"{path}: missing channel column {name!r}")
        channel_cols.append(idx)

    timecodes = np.empty(len(rows), dtype=np.float64)
    values = np.empty((len(rows), len(LIVELINK_CHANNELS)), dtype=np.float64)
    for r, row in enumerate(rows):
        try:
            timecodes[r] = _timecode_to_seconds(row[time_col], timecode_rate)
            for c, col in enumerate(channel_cols):
                values[r, c] = float(row[col])
        except (ValueError, IndexError) as exc:
            raise ValueOutOfRange(f"{path}: row {r + 2}: {exc}") from exc

    if timecodes.size > 1 and not np.all(np.diff(timecodes) > 0):
        bad = int(np.argmax(np.diff(timecodes) <= 0))
        raise NonMonotonicTimecode(f"{path}: timecode at data row {bad + 2} does not increase")
    if np.any(values < -VALUE_TOLERANCE) or np.any(values > 1 + VALUE_TOLERANCE):
        rr, cc = np.unravel_index(
            int(np.argmax(np.maximum(-values, values - 1.0))), values.shape
        )
        raise ValueOutOfRange(
            f"{path}: value {values[rr, cc]} in channel {LIVELINK_CHANNELS[cc]!r} outside [0, 1]"
        )

    if timecodes.size > 1:
        rate = (timecodes.size - 1) / (timecodes[-1] - timecodes[0])
    else:
        rate = timecode_rate
    return RawCoefficientTrack(timecodes=timecodes, values=values, source_rate=rate)


def resample_coefficients(track: RawCoefficientTrack, target_fps: float) -> RawCoefficientTrack:
    """Linearly interpolate a track onto a uniform grid at `target_fps`.

    Output timestamps are t_k = first + k / target_fps for
    k = 0 .. floor((last - first) * target_fps), so the grid stays inside the
    recorded span regardless of dropped source frames.
    """
    if target_fps <= 0:
        raise ValueError("target_fps must be positive")
    if track.frame_count < 2:
        raise TooShort("resampling needs at least 2 frames")
    first, last = track.timecodes[0], track.timecodes[-1]
    n_out = int(np.floor((last - first) * target_fps)) + 1
    t_out = first + np.arange(n_out, dtype=np.float64) / target_fps
    out = np.empty((n_out, track.values.shape[1]), dtype=np.float64)
    for c in range(track.values.shape[1]):
        out[:, c] = np.interp(t_out, track.timecodes, track.values[:, c])
    return RawCoefficientTrack(
        timecodes=t_out, values=out, source_rate=float(target_fps),
        channel_names=track.channel_names,
    )


def select_channels(
    track: RawCoefficientTrack, channels: tuple[str, ...] = DEFAULT_CHANNELS
) -> BlendshapeSequence:
    """Project a 61-channel track onto the requested channels, in order."""
    channels = tuple(channels)
    if len(set(channels)) != len(channels):
        dupes = sorted({c for c in channels if channels.count(c) > 1})
        raise UnknownChannel(f"duplicate channel request: {dupes}")
    index = {name: i for i, name in enumerate(track.channel_names)}
    cols = []
    for name in channels:
        if name not in index:
            raise UnknownChannel(f"channel {name!r} not present in track")
        cols.append(index[name])
    return BlendshapeSequence(
        values=track.values[:, cols], fps=track.source_rate, channel_names=channels
    )


def write_livelink_csv(path: str | os.PathLike, timecodes: np.ndarray, values: np.ndarray) -> None:
    """Write a full 61-channel track in the Live Link dialect (LF, UTF-8)."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2 or values.shape[1] != len(LIVELINK_CHANNELS):
        raise ValueError(f"expected (T, 61) values, got {values.shape}")
    header = "Timecode,BlendShapeCount," + ",".join(LIVELINK_CHANNELS)
    lines = [header]
    for t, row in zip(timecodes, values):
        cells = [f"{t:.6f}", "61"] + [f"{v:.8f}" for v in row]
        lines.append(",".join(cells))
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def export_blendshape_csv(seq: BlendshapeSequence, path: str | os.PathLike) -> None:
    """Export a prediction as a Live-Link-shaped CSV.

    Modeled channels are clamped to [0, 1]; the remaining channels carry 0.
    Re-ingesting and re-selecting the same channels reproduces
    clamp(seq.values) to within 1e-6.
    """
    index = {name: i for i, name in enumerate(LIVELINK_CHANNELS)}
    for name in seq.channel_names:
        if name not in index:
            raise UnknownChannel(f"channel {name!r} is not a Live Link channel")
    full = np.zeros((seq.frame_count, len(LIVELINK_CHANNELS)), dtype=np.float64)
    clamped = np.clip(seq.values, 0.0, 1.0)
    for j, name in enumerate(seq.channel_names):
        full[:, index[name]] = clamped[:, j]
    timecodes = np.arange(seq.frame_count, dtype=np.float64) / seq.fps
    write_livelink_csv(path, timecodes, full)
