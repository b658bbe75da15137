"""
traitfusion - Big Five trait regression from audio, text and video.

This package provides:
- A small numpy reverse-mode autodiff engine with Adam and finite-difference checks
- Audio (raw waveform), text (sentence CNN) and video (frozen backbone) channels
- Decision-level fusion with fitted per-trait weights, and NNLB / NNFB network fusion
- Manifest, WAV, frame, feature-file and embedding-table I/O
- A synthetic corpus generator with planted per-modality trait signals
- Training with early stopping, evaluation metrics and checkpoints
"""

from .audio import AudioChannel, audio_forward, dual_channel, randomize_amplitude, resample_to_8khz
from .autograd import (
    Parameter,
    Tensor,
    concat,
    conv1d,
    conv2d,
    dropout,
    fully_connected,
    global_avg_pool,
    matmul,
    max_over_time,
    mse_over_traits,
    relu,
    sigmoid,
)
from .checkpoint import load_checkpoint, save_checkpoint, write_history
from .config import (
    AudioChannelConfig,
    FusionConfig,
    RunConfig,
    SynthConfig,
    TextChannelConfig,
    TrainConfig,
    VideoChannelConfig,
    apply_overrides,
)
from .errors import (
    DataError,
    DataIOError,
    DimensionError,
    NumericError,
    ParameterError,
    TraitFusionError,
    UsageError,
)
from .fusion import (
    DecisionFusion,
    FusedNetwork,
    build_fused,
    dlf_fit,
    dlf_predict,
    fused_forward,
    read_weights,
    write_weights,
)
from .gradcheck import finite_diff_check, run_suite
from .media import load_embeddings, read_wav
from .models import (
    # Core records
    AudioClip,
    ClipInputs,
    ClipRecord,
    DatasetSplit,
    FrameImage,
    # Results
    FusionWeights,
    Metrics,
    # Enums
    ModelKind,
    PredictionSet,
    Trait,
    TrainHistory,
    Transcript,
    accuracy_from_mae,
)
from .optim import Adam, AdamState, adam_step
from .parser import ManifestParser, parse_manifest
from .study import StudyResult, run_fusion_study
from .synth import SyntheticCorpusGenerator, synth_generate
from .text import EmbeddingTable, TextChannel, embed_sentence, normalize_text, text_forward
from .trainer import baseline_train_mean, evaluate, train
from .video import VideoChannel, backbone_features, select_random_frame, video_forward

__version__ = "0.4.0"
__all__ = [
    # Autodiff
    "Tensor",
    "Parameter",
    "conv1d",
    "conv2d",
    "matmul",
    "fully_connected",
    "sigmoid",
    "relu",
    "global_avg_pool",
    "max_over_time",
    "dropout",
    "concat",
    "mse_over_traits",
    "Adam",
    "AdamState",
    "adam_step",
    "finite_diff_check",
    "run_suite",
    # Channels
    "AudioChannel",
    "audio_forward",
    "dual_channel",
    "randomize_amplitude",
    "resample_to_8khz",
    "TextChannel",
    "EmbeddingTable",
    "embed_sentence",
    "normalize_text",
    "text_forward",
    "VideoChannel",
    "backbone_features",
    "select_random_frame",
    "video_forward",
    # Fusion
    "DecisionFusion",
    "FusedNetwork",
    "build_fused",
    "dlf_fit",
    "dlf_predict",
    "fused_forward",
    "read_weights",
    "write_weights",
    # Data
    "AudioClip",
    "Transcript",
    "FrameImage",
    "ClipRecord",
    "ClipInputs",
    "DatasetSplit",
    "ManifestParser",
    "parse_manifest",
    "read_wav",
    "load_embeddings",
    "SyntheticCorpusGenerator",
    "synth_generate",
    # Training and results
    "train",
    "evaluate",
    "baseline_train_mean",
    "Metrics",
    "TrainHistory",
    "FusionWeights",
    "PredictionSet",
    "Trait",
    "ModelKind",
    "accuracy_from_mae",
    "save_checkpoint",
    "load_checkpoint",
    "write_history",
    "run_fusion_study",
    "StudyResult",
    # Configuration and errors
    "AudioChannelConfig",
    "TextChannelConfig",
    "VideoChannelConfig",
    "FusionConfig",
    "TrainConfig",
    "SynthConfig",
    "RunConfig",
    "apply_overrides",
    "TraitFusionError",
    "UsageError",
    "DimensionError",
    "ParameterError",
    "DataError",
    "DataIOError",
    "NumericError",
]
