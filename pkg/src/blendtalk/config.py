"""Declarative run configuration: an INI file with strict keys plus flag
overrides (`--set section.key=value`, flags win).

Sections and defaults:

    [data]      root=, fps=30, channels=default
    [features]  latent_provider=synthetic, text_provider=synthetic,
                image_provider=synthetic, feature_dir=, latent_dim=64,
                text_vocab=40, image_size=16, envelope_smoothing=3
    [model]     d_model=128, n_layers=2, n_heads=4, d_ff=256, d_fuse=64,
                d_align=64, ppe_period=25
    [train]     learning_rate=1e-4, batch_size=1, epochs=50, seed=0,
                lambda_pos=1, lambda_mot=10, lambda_tem=1e-4, lambda_sem=1e-5,
                grad_clip=0, lr_schedule=none
    [eval]      protocol=cross_subject, partition=test

Unknown sections or keys are rejected. The effective configuration is echoed
into every artifact a run produces.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field

from .decoder import DecoderConfig
from .encoders import EncoderConfig
from .errors import ConfigError
from .features import FeatureConfig
from .livelink import DEFAULT_CHANNELS, LIVELINK_CHANNELS
from .model import ModelConfig
from .training import DataConfig, LossWeights, TrainConfig

_SCHEMA: dict[str, dict[str, str]] = {
    "data": {"root": "", "fps": "30", "channels": "default"},
    "features": {
        "latent_provider": "synthetic",
        "text_provider": "synthetic",
        "image_provider": "synthetic",
        "feature_dir": "",
        "latent_dim": "64",
        "text_vocab": "40",
        "image_size": "16",
        "envelope_smoothing": "3",
    },
    "model": {
        "d_model": "128",
        "n_layers": "2",
        "n_heads": "4",
        "d_ff": "256",
        "d_fuse": "64",
        "d_align": "64",
        "ppe_period": "25",
    },
    "train": {
        "learning_rate": "1e-4",
        "batch_size": "1",
        "epochs": "50",
        "seed": "0",
        "lambda_pos": "1",
        "lambda_mot": "10",
        "lambda_tem": "1e-4",
        "lambda_sem": "1e-5",
        "grad_clip": "0",
        "lr_schedule": "none",
    },
    "eval": {"protocol": "cross_subject", "partition": "test"},
}


@dataclass
class RunConfig:
    raw: dict[str, dict[str, str]]
    data: DataConfig
    features: FeatureConfig
    model: ModelConfig
    train: TrainConfig
    eval_protocol: str
    eval_partition: str

    @property
    def data_root(self) -> str:
        return self.raw["data"]["root"]

    def to_dict(self) -> dict:
        return {section: dict(keys) for section, keys in self.raw.items()}


def _parse_int(section: str, key: str, text: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"[{section}] {key}: expected integer, got {text!r}") from None


def _parse_float(section: str, key: str, text: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"[{section}] {key}: expected number, got {text!r}") from None


def _parse_channels(text: str) -> tuple[str, ...]:
    if text.strip() == "default":
        return DEFAULT_CHANNELS
    channels = tuple(name.strip() for name in text.split(",") if name.strip())
    unknown = [c for c in channels if c not in LIVELINK_CHANNELS]
    if unknown:
        raise ConfigError(f"[data] channels: not Live Link channels: {unknown}")
    return channels


def load_run_config(
    path: str | os.PathLike | None = None,
    overrides: list[str] | None = None,
) -> RunConfig:
    """Read an INI config (optional) and apply `section.key=value` overrides."""
    raw = {section: dict(defaults) for section, defaults in _SCHEMA.items()}

    if path is not None:
        parser = configparser.ConfigParser(interpolation=None)
        try:
            with open(path, "r", encoding="utf-8") as fh:
                parser.read_file(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except configparser.Error as exc:
            raise ConfigError(f"malformed config {path}: {exc}") from exc
        for section in parser.sections():
            if section not in _SCHEMA:
                raise ConfigError(f"unknown config section [{section}]")
            for key, value in parser.items(section):
                if key not in _SCHEMA[section]:
                    raise ConfigError(f"unknown config key [{section}] {key}")
                raw[section][key] = value

    for item in overrides or []:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override must look like section.key=value, got {item!r}")
        target, value = item.split("=", 1)
        section, key = target.split(".", 1)
        if section not in _SCHEMA or key not in _SCHEMA[section]:
            raise ConfigError(f"unknown config key [{section}] {key}")
        raw[section][key] = value

    return _build(raw)


def _build(raw: dict[str, dict[str, str]]) -> RunConfig:
    d, f, m, t, e = raw["data"], raw["features"], raw["model"], raw["train"], raw["eval"]

    data_cfg = DataConfig(
        fps=_parse_float("data", "fps", d["fps"]),
        channels=_parse_channels(d["channels"]),
    )
    feature_cfg = FeatureConfig(
        latent_provider=f["latent_provider"],
        text_provider=f["text_provider"],
        image_provider=f["image_provider"],
        feature_dir=f["feature_dir"] or None,
        latent_dim=_parse_int("features", "latent_dim", f["latent_dim"]),
        text_vocab=_parse_int("features", "text_vocab", f["text_vocab"]),
        image_size=_parse_int("features", "image_size", f["image_size"]),
        envelope_smoothing=_parse_int("features", "envelope_smoothing", f["envelope_smoothing"]),
    )
    seed = _parse_int("train", "seed", t["seed"])
    encoder_cfg = EncoderConfig(
        d_model=_parse_int("model", "d_model", m["d_model"]),
        n_layers=_parse_int("model", "n_layers", m["n_layers"]),
        n_heads=_parse_int("model", "n_heads", m["n_heads"]),
        d_ff=_parse_int("model", "d_ff", m["d_ff"]),
        seed=seed,
    )
    decoder_cfg = DecoderConfig(
        d_fuse=_parse_int("model", "d_fuse", m["d_fuse"]),
        d_model=encoder_cfg.d_model,
        n_layers=encoder_cfg.n_layers,
        n_heads=encoder_cfg.n_heads,
        d_ff=encoder_cfg.d_ff,
        ppe_period=_parse_int("model", "ppe_period", m["ppe_period"]),
        seed=seed,
    )
    model_cfg = ModelConfig(
        latent_dim=feature_cfg.latent_dim,
        text_dim=feature_cfg.text_vocab,
        image_size=feature_cfg.image_size,
        d_align=_parse_int("model", "d_align", m["d_align"]),
        out_dim=len(data_cfg.channels),
        seed=seed,
        encoder=encoder_cfg,
        decoder=decoder_cfg,
    )
    train_cfg = TrainConfig(
        learning_rate=_parse_float("train", "learning_rate", t["learning_rate"]),
        batch_size=_parse_int("train", "batch_size", t["batch_size"]),
        epochs=_parse_int("train", "epochs", t["epochs"]),
        seed=seed,
        grad_clip=_parse_float("train", "grad_clip", t["grad_clip"]),
        lr_schedule=t["lr_schedule"],
        weights=LossWeights(
            pos=_parse_float("train", "lambda_pos", t["lambda_pos"]),
            mot=_parse_float("train", "lambda_mot", t["lambda_mot"]),
            tem=_parse_float("train", "lambda_tem", t["lambda_tem"]),
            sem=_parse_float("train", "lambda_sem", t["lambda_sem"]),
        ),
    )
    if e["protocol"] not in ("cross_subject", "cross_gender"):
        raise ConfigError(f"[eval] protocol: unknown protocol {e['protocol']!r}")
    if e["partition"] not in ("val", "test"):
        raise ConfigError(f"[eval] partition: must be val or test, got {e['partition']!r}")
    return RunConfig(
        raw=raw,
        data=data_cfg,
        features=feature_cfg,
        model=model_cfg,
        train=train_cfg,
        eval_protocol=e["protocol"],
        eval_partition=e["partition"],
    )
