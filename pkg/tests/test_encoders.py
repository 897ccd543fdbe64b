import numpy as np
import pytest
import torch

from blendtalk.encoders import EncoderConfig, LatentAudioDecoder, LipImageEncoder
from blendtalk.errors import ConfigError, DimensionMismatch
from blendtalk.model import seeded_init_

from helpers import gradient_relative_errors


def tiny_cfg(**kw):
    defaults = dict(d_model=8, n_layers=1, n_heads=2, d_ff=8)
    defaults.update(kw)
    return EncoderConfig(**defaults)


def zero_residual_branches(module):
    # with attention out-projections and FFN down-projections zeroed, every
    # residual branch contributes nothing
    with torch.no_grad():
        for layer in module.stack.layers:
            layer.attn.out_proj.weight.zero_()
            layer.attn.out_proj.bias.zero_()
            layer.ffn.down.weight.zero_()
            layer.ffn.down.bias.zero_()


class TestConfig:
    def test_heads_must_divide(self):
        with pytest.raises(ConfigError):
            EncoderConfig(d_model=10, n_heads=3)

    def test_positive_sizes(self):
        with pytest.raises(ConfigError):
            EncoderConfig(d_model=0)


class TestAudioDecoder:
    def test_output_shape(self):
        enc = LatentAudioDecoder(64, EncoderConfig(d_model=128, n_layers=2, n_heads=4, d_ff=256))
        seeded_init_(enc, 0)
        out = enc(torch.randn(30, 64))
        assert out.shape == (30, 128)

    def test_width_mismatch(self):
        enc = LatentAudioDecoder(16, tiny_cfg())
        with pytest.raises(DimensionMismatch):
            enc(torch.randn(5, 8))

    def test_context_sensitivity(self):
        enc = LatentAudioDecoder(6, tiny_cfg())
        seeded_init_(enc, 3)
        x = torch.tensor(np.random.default_rng(0).normal(size=(7, 6)), dtype=torch.float32)
        out = enc(x)
        # permuting the frame order changes the output at a fixed index
        perm = torch.tensor([3, 0, 6, 2, 5, 1, 4])
        out_perm = enc(x[perm])
        assert not torch.allclose(out_perm[0], out[0], atol=1e-7)
        # and a single perturbed frame bleeds into every other frame's output
        x2 = x.clone()
        x2[6] += 0.5
        out2 = enc(x2)
        assert not torch.allclose(out2[0], out[0], atol=1e-9)

    def test_zero_residuals_give_input_projection(self):
        enc = LatentAudioDecoder(6, tiny_cfg(n_layers=2))
        seeded_init_(enc, 1)
        zero_residual_branches(enc)
        x = torch.randn(9, 6)
        assert torch.equal(enc(x), enc.input_proj(x))

    def test_seeded_determinism(self):
        cfg = tiny_cfg()
        x = torch.randn(5, 6)
        a = LatentAudioDecoder(6, cfg)
        b = LatentAudioDecoder(6, cfg)
        seeded_init_(a, 11)
        seeded_init_(b, 11)
        assert torch.equal(a(x), b(x))

    def test_gradients_match_finite_differences(self):
        enc = LatentAudioDecoder(4, tiny_cfg()).double()
        seeded_init_(enc, 5)
        x = torch.tensor(np.random.default_rng(1).normal(size=(5, 4)))
        weights = torch.tensor(np.random.default_rng(2).normal(size=(5, 8)))

        def f():
            return (enc(x) * weights).sum()

        errors = gradient_relative_errors(f, dict(enc.named_parameters()), h=1e-5)
        assert max(errors.values()) < 1e-4


class TestImageEncoder:
    def test_output_shape(self):
        enc = LipImageEncoder(16, EncoderConfig(d_model=128, n_layers=2, n_heads=4, d_ff=256))
        seeded_init_(enc, 0)
        out = enc(torch.rand(30, 16, 16))
        assert out.shape == (30, 128)

    def test_frame_size_mismatch(self):
        enc = LipImageEncoder(16, tiny_cfg())
        with pytest.raises(DimensionMismatch):
            enc(torch.rand(4, 8, 8))

    def test_weight_sharing_identical_frames(self):
        enc = LipImageEncoder(8, tiny_cfg())
        seeded_init_(enc, 2)
        zero_residual_branches(enc)
        frames = torch.rand(6, 8, 8)
        frames[4] = frames[1]
        out = enc(frames)
        assert torch.equal(out[4], out[1])

    def test_gradients_match_finite_differences(self):
        enc = LipImageEncoder(8, tiny_cfg(), channels=(2, 3)).double()
        seeded_init_(enc, 7)
        frames = torch.tensor(np.random.default_rng(3).uniform(0, 1, size=(4, 8, 8)))
        weights = torch.tensor(np.random.default_rng(4).normal(size=(4, 8)))

        def f():
            return (enc(frames) * weights).sum()

        params = dict(enc.named_parameters())
        assert sum(p.numel() for p in params.values()) < 5000
        errors = gradient_relative_errors(f, params, h=1e-5)
        assert max(errors.values()) < 1e-4

    def test_shape_contract_any_t(self):
        enc = LipImageEncoder(8, tiny_cfg())
        seeded_init_(enc, 0)
        for t in (1, 2, 9):
            assert enc(torch.rand(t, 8, 8)).shape == (t, 8)
