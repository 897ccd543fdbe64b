import math

import numpy as np
import pytest
import torch

from blendtalk.decoder import (
    STYLE_DIM,
    CoefficientDecoder,
    DecoderConfig,
    FeatureFusion,
    StyleTable,
    alibi_bias,
    alibi_slopes,
    periodic_positional_encoding,
)
from blendtalk.errors import ConfigError, DimensionMismatch, LengthMismatch, UnknownStyle
from blendtalk.model import seeded_init_

from helpers import gradient_relative_errors


def tiny_cfg(**kw):
    defaults = dict(d_fuse=4, d_model=8, n_layers=1, n_heads=2, d_ff=8, ppe_period=4)
    defaults.update(kw)
    return DecoderConfig(**defaults)


def make_decoder(cfg=None, subjects=("s01", "s02"), audio_dim=8, image_dim=8, text_dim=6, out_dim=5, seed=0):
    dec = CoefficientDecoder(audio_dim, image_dim, text_dim, subjects, cfg or tiny_cfg(), out_dim=out_dim)
    seeded_init_(dec, seed)
    return dec


class TestStyleTable:
    def test_lookup_returns_64_dims(self):
        table = StyleTable(["s01", "s02"])
        seeded_init_(table, 0)
        assert table.lookup("s01").shape == (STYLE_DIM,)

    def test_unknown_style(self):
        table = StyleTable(["s01"])
        with pytest.raises(UnknownStyle):
            table.lookup("stranger")

    def test_distinct_ids_distinct_vectors(self):
        table = StyleTable(["s01", "s02"])
        seeded_init_(table, 0)
        assert not torch.equal(table.lookup("s01"), table.lookup("s02"))


class TestPeriodicPositionalEncoding:
    def test_first_row(self):
        ppe = periodic_positional_encoding(4, 6, period=25)
        assert float(ppe[0, 0]) == 0.0
        assert float(ppe[0, 1]) == 1.0

    def test_periodicity(self):
        ppe = periodic_positional_encoding(60, 16, period=25)
        for t in range(60 - 25):
            assert torch.equal(ppe[t], ppe[t + 25])

    def test_shape_and_range(self):
        ppe = periodic_positional_encoding(50, 128, period=25)
        assert ppe.shape == (50, 128)
        assert float(ppe.abs().max()) <= 1.0

    def test_rejects_short_period(self):
        with pytest.raises(ValueError):
            periodic_positional_encoding(4, 8, period=1)


class TestAlibiBias:
    def test_zero_diagonal(self):
        bias = alibi_bias(6, 4)
        for h in range(4):
            assert torch.all(torch.diagonal(bias[h]) == 0.0)

    def test_slope_arithmetic(self):
        # head 0 of 4 has slope 2^-2 = 0.25, so bias(5, 3) = -0.25 * 2 = -0.5
        bias = alibi_bias(8, 4)
        assert float(bias[0, 5, 3]) == pytest.approx(-0.5, abs=1e-9)
        slopes = alibi_slopes(4)
        assert [float(s) for s in slopes] == pytest.approx([2**-2, 2**-4, 2**-6, 2**-8])

    def test_future_is_minus_inf(self):
        bias = alibi_bias(5, 2)
        for h in range(2):
            for i in range(5):
                for j in range(5):
                    if j > i:
                        assert float(bias[h, i, j]) == float("-inf")
                    else:
                        assert math.isfinite(float(bias[h, i, j]))

    def test_monotone_decay_with_distance(self):
        bias = alibi_bias(7, 3)
        for h in range(3):
            row = bias[h, 6, :7]
            # farther key (smaller j) gets a strictly more negative bias
            assert all(float(row[j]) < float(row[j + 1]) for j in range(6))


class TestFeatureFusion:
    def test_output_shape(self):
        cfg = DecoderConfig(d_fuse=64, d_model=128, n_layers=2, n_heads=4, d_ff=256)
        fusion = FeatureFusion(128, 128, 40, cfg)
        seeded_init_(fusion, 0)
        out = fusion(torch.rand(30, 128), torch.rand(30, 128), torch.rand(30, 40), torch.rand(64))
        assert out.shape == (30, 128)

    def test_zero_everything_gives_ppe(self):
        cfg = tiny_cfg()
        fusion = FeatureFusion(8, 8, 6, cfg)
        seeded_init_(fusion, 0)
        with torch.no_grad():
            for layer in (fusion.audio_proj, fusion.image_proj, fusion.text_proj, fusion.mix):
                layer.bias.zero_()
        t = 7
        out = fusion(torch.zeros(t, 8), torch.zeros(t, 8), torch.zeros(t, 6), torch.zeros(STYLE_DIM))
        ppe = periodic_positional_encoding(t, cfg.d_model, cfg.ppe_period)
        assert torch.equal(out, ppe)

    def test_style_changes_every_frame(self):
        fusion = FeatureFusion(8, 8, 6, tiny_cfg())
        seeded_init_(fusion, 1)
        rng = np.random.default_rng(0)
        a = torch.tensor(rng.normal(size=(9, 8)), dtype=torch.float32)
        i = torch.tensor(rng.normal(size=(9, 8)), dtype=torch.float32)
        c = torch.tensor(rng.normal(size=(9, 6)), dtype=torch.float32)
        p1 = torch.tensor(rng.normal(size=(STYLE_DIM,)), dtype=torch.float32)
        p2 = torch.tensor(rng.normal(size=(STYLE_DIM,)), dtype=torch.float32)
        out1, out2 = fusion(a, i, c, p1), fusion(a, i, c, p2)
        assert torch.all((out1 - out2).abs().max(dim=1).values > 0)

    def test_length_mismatch(self):
        fusion = FeatureFusion(8, 8, 6, tiny_cfg())
        with pytest.raises(LengthMismatch):
            fusion(torch.zeros(4, 8), torch.zeros(5, 8), torch.zeros(4, 6), torch.zeros(STYLE_DIM))


class TestCoefficientDecoder:
    def test_output_shape(self):
        dec = make_decoder(out_dim=32)
        out = dec(torch.rand(30, 8), torch.rand(30, 8), torch.rand(30, 6), "s01")
        assert out.shape == (30, 32)

    def test_causality_bitwise(self):
        dec = make_decoder()
        fused = torch.tensor(np.random.default_rng(0).normal(size=(10, 8)), dtype=torch.float32)
        base = dec.decode(fused)
        poked = fused.clone()
        poked[6] += 1.0
        out = dec.decode(poked)
        assert torch.equal(out[:6], base[:6])
        assert not torch.allclose(out[6:], base[6:], atol=1e-9)

    def test_raw_outputs_not_clamped(self):
        dec = make_decoder(seed=4)
        fused = 100.0 * torch.ones(4, 8)
        out = dec.decode(fused).detach()
        assert float(out.min()) < 0.0 or float(out.max()) > 1.0

    def test_dimension_mismatch(self):
        dec = make_decoder()
        with pytest.raises(DimensionMismatch):
            dec.decode(torch.zeros(4, 16))

    def test_unknown_style_propagates(self):
        dec = make_decoder()
        with pytest.raises(UnknownStyle):
            dec(torch.rand(3, 8), torch.rand(3, 8), torch.rand(3, 6), "nobody")

    def test_styles_change_outputs(self):
        dec = make_decoder(seed=9)
        a, i, c = torch.rand(5, 8), torch.rand(5, 8), torch.rand(5, 6)
        assert not torch.allclose(dec(a, i, c, "s01"), dec(a, i, c, "s02"), atol=1e-9)

    def test_seeded_determinism(self):
        a, i, c = torch.rand(5, 8), torch.rand(5, 8), torch.rand(5, 6)
        out1 = make_decoder(seed=3)(a, i, c, "s01")
        out2 = make_decoder(seed=3)(a, i, c, "s01")
        assert torch.equal(out1, out2)

    def test_gradients_match_finite_differences(self):
        dec = make_decoder(
            tiny_cfg(), subjects=("s01",), audio_dim=5, image_dim=5, text_dim=4, out_dim=3,
        ).double()
        seeded_init_(dec, 21)
        rng = np.random.default_rng(8)
        a = torch.tensor(rng.normal(size=(5, 5)))
        i = torch.tensor(rng.normal(size=(5, 5)))
        c = torch.tensor(rng.normal(size=(5, 4)))
        target = torch.tensor(rng.normal(size=(5, 3)))
        params = dict(dec.named_parameters())
        assert sum(p.numel() for p in params.values()) < 5000

        def f():
            return ((dec(a, i, c, "s01") - target) ** 2).sum()

        errors = gradient_relative_errors(f, params, h=1e-5)
        assert max(errors.values()) < 1e-4


class TestDecoderConfig:
    def test_ppe_period_bound(self):
        with pytest.raises(ConfigError):
            DecoderConfig(ppe_period=1)

    def test_heads_divide(self):
        with pytest.raises(ConfigError):
            DecoderConfig(d_model=9, n_heads=2)
