"""Shared test utilities: finite-difference gradient checks and tiny fixtures."""

from __future__ import annotations

import numpy as np
import torch

from blendtalk.decoder import DecoderConfig
from blendtalk.encoders import EncoderConfig
from blendtalk.model import ModelConfig, SpeechBlendshapeModel


def finite_difference_gradients(f, params: dict[str, torch.Tensor], h: float = 1e-5):
    """Central finite differences of the scalar f() w.r.t. each named tensor.

    Independent of autograd: every entry is perturbed in place, f re-evaluated
    twice, and the secant slope recorded.
    """
    grads = {}
    with torch.no_grad():
        for name, p in params.items():
            g = torch.zeros_like(p)
            flat, gflat = p.view(-1), g.view(-1)
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + h
                f_plus = float(f())
                flat[i] = orig - h
                f_minus = float(f())
                flat[i] = orig
                gflat[i] = (f_plus - f_minus) / (2 * h)
            grads[name] = g
    return grads


def analytic_gradients(f, params: dict[str, torch.Tensor]):
    for p in params.values():
        if p.grad is not None:
            p.grad = None
    f().backward()
    return {
        name: (p.grad.clone() if p.grad is not None else torch.zeros_like(p))
        for name, p in params.items()
    }


def gradient_relative_errors(f, params, h: float = 1e-5) -> dict[str, float]:
    """Per-tensor norm-relative error between autograd and finite differences."""
    analytic = analytic_gradients(f, params)
    numeric = finite_difference_gradients(f, params, h=h)
    errors = {}
    for name in params:
        a, n = analytic[name], numeric[name]
        denom = max(float(a.norm()), float(n.norm()), 1e-12)
        errors[name] = float((a - n).norm()) / denom
    return errors


def micro_model(
    latent_dim=6, text_dim=8, image_size=8, d_align=4, out_dim=5,
    d_model=8, n_layers=1, n_heads=2, d_ff=8, d_fuse=4, ppe_period=4,
    subjects=("s01", "s02"), seed=0,
) -> SpeechBlendshapeModel:
    cfg = ModelConfig(
        latent_dim=latent_dim, text_dim=text_dim, image_size=image_size,
        d_align=d_align, out_dim=out_dim, seed=seed,
        encoder=EncoderConfig(d_model=d_model, n_layers=n_layers, n_heads=n_heads, d_ff=d_ff),
        decoder=DecoderConfig(
            d_fuse=d_fuse, d_model=d_model, n_layers=n_layers,
            n_heads=n_heads, d_ff=d_ff, ppe_period=ppe_period,
        ),
    )
    return SpeechBlendshapeModel(cfg, subjects)


def random_clip_inputs(model: SpeechBlendshapeModel, t=6, seed=0, dtype=torch.float64):
    rng = np.random.default_rng(seed)
    cfg = model.cfg
    latent = torch.tensor(rng.normal(size=(t, cfg.latent_dim)), dtype=dtype)
    frames = torch.tensor(rng.uniform(0, 1, size=(t, cfg.image_size, cfg.image_size)), dtype=dtype)
    text = torch.tensor(rng.uniform(0, 1, size=(t, cfg.text_dim)), dtype=dtype)
    target = torch.tensor(rng.uniform(0, 1, size=(t, cfg.out_dim)), dtype=dtype)
    return latent, frames, text, target
