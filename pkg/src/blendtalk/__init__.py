"""Speech-driven facial blendshape animation at desk scale.

Pipeline: WAV + Live Link Face coefficient tracks -> frozen pseudo-modality
feature providers (latent audio, text, lip frames) -> trainable encoders ->
cross-modal alignment -> biased-attention decoder -> 32 coefficient channels
per frame, plus the split protocols and LVE/ALE evaluation around it.
"""

__version__ = "0.1.0"

from .audio import AudioClip, load_audio
from .corpus import ClipRecord, SplitSpec, build_manifest, split_cross_gender, split_cross_subject
from .evaluation import EvalReport, ale, evaluate_split, lve
from .features import FeatureConfig, FeatureStream, LipFrameStream, ReferenceImage
from .livelink import (
    DEFAULT_CHANNELS,
    LIVELINK_CHANNELS,
    BlendshapeSequence,
    RawCoefficientTrack,
    export_blendshape_csv,
    ingest_livelink_csv,
    resample_coefficients,
    select_channels,
)
from .model import ModelConfig, SpeechBlendshapeModel
from .training import (
    DataConfig,
    LossWeights,
    TrainConfig,
    TrainedBundle,
    load_checkpoint,
    predict_clip,
    save_checkpoint,
    train_run,
)

__all__ = [
    "AudioClip",
    "BlendshapeSequence",
    "ClipRecord",
    "DataConfig",
    "DEFAULT_CHANNELS",
    "EvalReport",
    "FeatureConfig",
    "FeatureStream",
    "LipFrameStream",
    "LIVELINK_CHANNELS",
    "LossWeights",
    "ModelConfig",
    "RawCoefficientTrack",
    "ReferenceImage",
    "SpeechBlendshapeModel",
    "SplitSpec",
    "TrainConfig",
    "TrainedBundle",
    "ale",
    "build_manifest",
    "evaluate_split",
    "export_blendshape_csv",
    "ingest_livelink_csv",
    "load_audio",
    "load_checkpoint",
    "lve",
    "predict_clip",
    "resample_coefficients",
    "save_checkpoint",
    "select_channels",
    "split_cross_gender",
    "split_cross_subject",
    "train_run",
]
