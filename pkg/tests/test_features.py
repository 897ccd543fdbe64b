import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blendtalk.audio import AudioClip
from blendtalk.corpus import ClipRecord
from blendtalk.errors import BadMagic, ClipTooShort, NoTextSource, TruncatedPayload
from blendtalk.features import (
    SYNTHETIC_TEXT_VOCAB,
    TEXT_BLANK,
    FeatureConfig,
    FeatureStream,
    ReferenceImage,
    aperture_envelope,
    audio_latent_synthetic,
    frame_count,
    lip_frames_synthetic,
    load_feature_file,
    resample_stream,
    text_stream_provider,
    text_stream_synthetic,
    write_feature_file,
)


def make_clip(samples):
    return AudioClip(samples=np.asarray(samples, dtype=np.float64), sample_rate=16000)


def tone_clip(freq, duration=0.2, amplitude=0.5):
    t = np.arange(int(16000 * duration)) / 16000
    return make_clip(amplitude * np.sin(2 * np.pi * freq * t))


def record_with(transcript):
    return ClipRecord(
        clip_id="s01/c01", subject_id="s01", audio_path="", coefficients_path="",
        transcript=transcript,
    )


class TestFrameCount:
    def test_one_second(self):
        assert frame_count(make_clip(np.zeros(16000)), 30) == 30

    def test_two_seconds(self):
        assert frame_count(make_clip(np.zeros(32000)), 30) == 60

    def test_too_short(self):
        with pytest.raises(ClipTooShort):
            frame_count(make_clip(np.zeros(100)), 30)


class TestAudioLatent:
    def test_silence_gives_zeros(self):
        cfg = FeatureConfig(latent_dim=16)
        stream = audio_latent_synthetic(make_clip(np.zeros(16000)), cfg)
        assert stream.values.shape == (30, 16)
        assert np.all(stream.values == 0.0)

    def test_shape(self):
        cfg = FeatureConfig(latent_dim=64)
        stream = audio_latent_synthetic(make_clip(np.random.default_rng(0).normal(0, 0.1, 16000)), cfg)
        assert stream.values.shape == (30, 64)
        assert stream.modality == "latent_audio"

    def test_pure_tone_band_argmax_and_dft_oracle(self):
        # oracle: brute-force DFT per frame plus an independently written
        # triangular filterbank, checked against the fft-based implementation
        cfg = FeatureConfig(latent_dim=32)
        clip = tone_clip(1000.0, duration=0.2)
        stream = audio_latent_synthetic(clip, cfg, fps=30.0)

        d = round(16000 / 30.0)
        n_frames = stream.frame_count
        edges = np.linspace(0.0, 8000.0, cfg.latent_dim + 2)
        freqs = np.array([k * 16000.0 / d for k in range(d // 2 + 1)])
        expected = np.zeros((n_frames, cfg.latent_dim))
        for k in range(n_frames):
            window = np.zeros(d)
            chunk = clip.samples[k * d:(k + 1) * d]
            window[:len(chunk)] = chunk
            n = np.arange(d)
            power = np.empty(d // 2 + 1)
            for m in range(d // 2 + 1):
                re = float(np.sum(window * np.cos(-2 * np.pi * m * n / d)))
                im = float(np.sum(window * np.sin(-2 * np.pi * m * n / d)))
                power[m] = re * re + im * im
            for j in range(cfg.latent_dim):
                lo, mid, hi = edges[j], edges[j + 1], edges[j + 2]
                tri = np.clip(np.minimum((freqs - lo) / (mid - lo), (hi - freqs) / (hi - mid)), 0, None)
                expected[k, j] = np.log1p(np.sum(tri * power) / d)
        assert np.max(np.abs(stream.values - expected)) < 1e-5

        band_means = stream.values.mean(axis=0)
        best = int(np.argmax(band_means))
        assert edges[best] < 1000.0 < edges[best + 2]

    def test_deterministic(self):
        cfg = FeatureConfig(latent_dim=24)
        clip = tone_clip(440.0)
        a = audio_latent_synthetic(clip, cfg)
        b = audio_latent_synthetic(clip, cfg)
        assert np.array_equal(a.values, b.values)


class TestTextStream:
    def test_empty_transcript_all_blank(self):
        cfg = FeatureConfig()
        stream = text_stream_synthetic("", t=8, cfg=cfg)
        assert stream.values.shape == (8, SYNTHETIC_TEXT_VOCAB)
        peak = stream.values.argmax(axis=1)
        assert np.all(peak == TEXT_BLANK)
        assert np.allclose(stream.values.sum(axis=1), 1.0, atol=1e-6)

    def test_uniform_spread_two_symbols(self):
        cfg = FeatureConfig()
        stream = text_stream_synthetic("ab", t=10, cfg=cfg)
        peaks = stream.values.argmax(axis=1)
        # floor(i * S / T): frames 0-4 carry 'a', frames 5-9 carry 'b'
        assert np.all(peaks[:5] == 1)
        assert np.all(peaks[5:] == 2)
        assert np.all(stream.values.max(axis=1) == np.float32(0.9))

    def test_uniform_spread_oracle(self):
        cfg = FeatureConfig()
        text = "ni hao 3"
        t = 17
        stream = text_stream_synthetic(text, t=t, cfg=cfg)
        symbols = []
        for ch in text:
            if ch == " ":
                symbols.append(37)
            elif ch.isdigit():
                symbols.append(27 + int(ch))
            else:
                symbols.append(1 + ord(ch) - ord("a"))
        expected = [symbols[i * len(symbols) // t] for i in range(t)]
        assert list(stream.values.argmax(axis=1)) == expected

    def test_full_scale_file_dim(self, tmp_path):
        # precomputed recognizer logits at full vocabulary width
        values = np.random.default_rng(0).normal(size=(7, 3503)).astype(np.float32)
        feature_dir = tmp_path
        (feature_dir / "s01").mkdir()
        write_feature_file(feature_dir / "s01" / "c01.text.pmmf", values)
        cfg = FeatureConfig(text_provider="file", feature_dir=str(feature_dir), text_vocab=3503)
        stream = text_stream_provider(record_with("ignored"), t=12, cfg=cfg)
        assert stream.values.shape == (12, 3503)
        assert stream.modality == "text"

    def test_no_text_source(self):
        cfg = FeatureConfig()
        with pytest.raises(NoTextSource):
            text_stream_provider(record_with(None), t=5, cfg=cfg)


class TestLipFrames:
    def test_silence_constant_closed_mouth(self):
        cfg = FeatureConfig()
        clip = make_clip(np.zeros(16000))
        stream = lip_frames_synthetic(clip, ReferenceImage(), t=30, cfg=cfg)
        assert stream.frames.shape == (30, 16, 16)
        for k in range(1, 30):
            assert np.array_equal(stream.frames[k], stream.frames[0])

    def test_constant_level_constant_aperture(self):
        cfg = FeatureConfig()
        clip = make_clip(np.full(16000, 0.5))
        env = aperture_envelope(clip, t=30, cfg=cfg)
        assert np.max(np.abs(env - 1.0)) < 1e-6

    def test_reference_changes_background_not_aperture(self):
        cfg = FeatureConfig()
        rng = np.random.default_rng(0)
        clip = make_clip(rng.normal(0, 0.3, 16000).clip(-1, 1))
        a = lip_frames_synthetic(clip, ReferenceImage(identifier="alice"), t=30, cfg=cfg)
        b = lip_frames_synthetic(clip, ReferenceImage(identifier="bob"), t=30, cfg=cfg)
        # mouth pixels are written as exactly 1.0 over a background in [0, .5]
        mask_a = a.frames == 1.0
        mask_b = b.frames == 1.0
        assert np.array_equal(mask_a, mask_b)
        assert not np.array_equal(a.frames, b.frames)
        env = aperture_envelope(clip, t=30, cfg=cfg)
        env_again = aperture_envelope(clip, t=30, cfg=cfg)
        assert np.array_equal(env, env_again)

    def test_louder_audio_opens_wider(self):
        cfg = FeatureConfig(envelope_smoothing=1)
        quiet = np.full(8000, 0.05)
        loud = np.full(8000, 0.8)
        clip = make_clip(np.concatenate([quiet, loud]))
        stream = lip_frames_synthetic(clip, ReferenceImage(), t=30, cfg=cfg)
        open_pixels = (stream.frames == 1.0).sum(axis=(1, 2))
        assert open_pixels[-1] > open_pixels[0]

    def test_image_reference_used_as_background(self):
        cfg = FeatureConfig()
        image = np.full((32, 32), 0.8, dtype=np.float32)
        clip = make_clip(np.zeros(16000))
        stream = lip_frames_synthetic(clip, ReferenceImage(image=image), t=2, cfg=cfg)
        background = stream.frames[0][stream.frames[0] != 1.0]
        assert np.allclose(background, 0.4, atol=1e-6)  # scaled into [0, 0.5]


class TestFeatureFile:
    def test_roundtrip_bit_identical(self, tmp_path):
        values = np.random.default_rng(1).normal(size=(5, 3)).astype(np.float32)
        path = tmp_path / "x.pmmf"
        write_feature_file(path, values)
        loaded = load_feature_file(path)
        assert np.array_equal(loaded.values, values)
        assert loaded.values.dtype == np.float32

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.pmmf"
        path.write_bytes(b"WRONG" + b"\x00" * 16)
        with pytest.raises(BadMagic):
            load_feature_file(path)

    def test_truncated_payload(self, tmp_path):
        values = np.ones((4, 4), dtype=np.float32)
        path = tmp_path / "t.pmmf"
        write_feature_file(path, values)
        blob = path.read_bytes()
        path.write_bytes(blob[:-4])
        with pytest.raises(TruncatedPayload):
            load_feature_file(path)

    def test_truncated_header(self, tmp_path):
        path = tmp_path / "h.pmmf"
        path.write_bytes(b"PMMF1\x01")
        with pytest.raises(TruncatedPayload):
            load_feature_file(path)


class TestResampleStream:
    def test_constant(self):
        stream = FeatureStream(values=np.full((7, 3), 0.2), modality="text", fps=30)
        out = resample_stream(stream, 19)
        assert out.values.shape == (19, 3)
        assert np.allclose(out.values, 0.2, atol=1e-7)

    def test_midpoint(self):
        stream = FeatureStream(values=np.array([[0.0], [1.0]]), modality="audio", fps=30)
        out = resample_stream(stream, 3)
        assert np.allclose(out.values[:, 0], [0.0, 0.5, 1.0], atol=1e-7)

    def test_broadcast_single_frame(self):
        stream = FeatureStream(values=np.array([[3.0, 4.0]]), modality="audio", fps=30)
        out = resample_stream(stream, 5)
        assert out.values.shape == (5, 2)
        assert np.all(out.values == np.float32([3.0, 4.0]))

    def test_down_up_ramp_identity(self):
        ramp = np.linspace(0, 1, 9)[:, None] * np.ones((1, 4))
        stream = FeatureStream(values=ramp, modality="audio", fps=30)
        down = resample_stream(stream, 5)
        up = resample_stream(down, 9)
        assert np.max(np.abs(up.values - ramp)) < 1e-6

    @given(
        t_in=st.integers(min_value=1, max_value=12),
        t_out=st.integers(min_value=1, max_value=12),
        fill=st.floats(min_value=-5, max_value=5),
    )
    @settings(max_examples=40, deadline=None)
    def test_constant_property(self, t_in, t_out, fill):
        stream = FeatureStream(values=np.full((t_in, 2), fill), modality="audio", fps=30)
        out = resample_stream(stream, t_out)
        assert out.values.shape[0] == t_out
        assert np.allclose(out.values, np.float32(fill), atol=1e-6)


class TestProviderFrameAlignment:
    def test_all_streams_share_the_frame_grid(self):
        cfg = FeatureConfig(latent_dim=8)
        clip = tone_clip(220.0, duration=0.9)
        t = frame_count(clip, 30)
        latent = audio_latent_synthetic(clip, cfg)
        lips = lip_frames_synthetic(clip, ReferenceImage(), t, cfg)
        text = text_stream_synthetic("ni hao", t, cfg)
        assert latent.frame_count == lips.frame_count == text.frame_count == t
