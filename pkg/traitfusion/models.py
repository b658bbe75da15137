"""
Data models for clips, datasets, evaluation results and fusion weights.

Provides the plain Python types passed between the data loaders, the three
channel networks, the fusion strategies and the trainer.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import (
    DataError,
    DimensionError,
    DuplicateClipError,
    EmptyDatasetError,
    EmptyTranscriptError,
    InvalidWeightsError,
    LabelRangeError,
)

# ============================================================================
# TRAITS AND MODALITIES
# ============================================================================


class Trait(Enum):
    """The Big Five traits, in the column order used by every table and file."""
    EXTRAVERSION = "E"
    AGREEABLENESS = "A"
    CONSCIENTIOUSNESS = "C"
    NEUROTICISM = "N"
    OPENNESS = "O"

    @property
    def index(self) -> int:
        return TRAIT_ORDER.index(self)

    @classmethod
    def from_string(cls, value: str) -> "Trait":
        """Accept a code (``"E"``) or a name (``"extraversion"``), case-insensitive."""
        cleaned = value.strip()
        for trait in cls:
            if cleaned.upper() == trait.value or cleaned.lower() == trait.name.lower():
                return trait
        raise ValueError(
            f"Invalid trait: '{value}'. Valid traits: {', '.join(t.value for t in cls)}"
        )


TRAIT_ORDER: Tuple[Trait, ...] = tuple(Trait)
TRAIT_CODES: Tuple[str, ...] = tuple(t.value for t in TRAIT_ORDER)
NUM_TRAITS = len(TRAIT_ORDER)


class Modality(Enum):
    AUDIO = "audio"
    TEXT = "text"
    VIDEO = "video"


MODALITY_ORDER: Tuple[Modality, ...] = tuple(Modality)


class ModelKind(Enum):
    """Everything ``train`` can produce."""
    AUDIO = "audio"
    TEXT = "text"
    VIDEO = "video"
    NNLB = "nnlb"
    NNFB = "nnfb"

    @property
    def is_fusion(self) -> bool:
        return self in (ModelKind.NNLB, ModelKind.NNFB)


def validate_labels(labels: Sequence[float], where: str = "") -> np.ndarray:
    """Return labels as a float64 ``[5]`` array, rejecting anything outside [0, 1]."""
    values = np.asarray(labels, dtype=np.float64)
    if values.shape != (NUM_TRAITS,):
        raise DataError(f"{where + ': ' if where else ''}expected {NUM_TRAITS} labels, "
                        f"got {values.size}")
    for trait, value in zip(TRAIT_ORDER, values):
        if not (0.0 <= value <= 1.0) or np.isnan(value):
            raise LabelRangeError(trait.value, float(value), where)
    return values


# ============================================================================
# MODALITY INPUTS
# ============================================================================


@dataclass
class AudioClip:
    """Mono waveform nominally in [-1, 1].

    Attributes:
        samples: 1-D float64 array.
        sample_rate: Samples per second.
    """
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise DimensionError(f"audio samples must be 1-D, got shape {self.samples.shape}")
        if self.sample_rate <= 0:
            raise DataError(f"sample_rate must be positive, got {self.sample_rate}")
        if self.samples.size < 1:
            raise DataError("audio clip has no samples")

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    def __len__(self) -> int:
        return self.samples.size


@dataclass
class Transcript:
    """Sentences of normalised tokens (lowercase, punctuation stripped)."""
    sentences: List[List[str]]

    def __post_init__(self):
        if not self.sentences or any(not s for s in self.sentences):
            raise EmptyTranscriptError("transcript needs at least one non-empty sentence")
        if any(not token for sentence in self.sentences for token in sentence):
            raise EmptyTranscriptError("transcript tokens must be non-empty strings")

    @property
    def num_tokens(self) -> int:
        return sum(len(s) for s in self.sentences)


@dataclass
class FrameImage:
    """One video frame as a ``[3 x H x W]`` array in [0, 1], channels blue, red, green."""
    pixels: np.ndarray

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float64)
        if self.pixels.ndim != 3 or self.pixels.shape[0] != 3:
            raise DimensionError(f"frame pixels must be [3 x H x W], got {self.pixels.shape}")
        if self.pixels.size and (self.pixels.min() < 0.0 or self.pixels.max() > 1.0):
            raise DataError("frame pixel values must lie in [0, 1]")

    @property
    def height(self) -> int:
        return self.pixels.shape[1]

    @property
    def width(self) -> int:
        return self.pixels.shape[2]


# ============================================================================
# DATASET
# ============================================================================


@dataclass
class ClipRecord:
    """One manifest entry.

    Attributes:
        clip_id: Unique clip identifier.
        split: ``"train"``, ``"val"`` or ``"test"``.
        audio_path: WAV file.
        visual_path: Frame image, directory of frames, or precomputed-feature file.
        transcript: Raw transcript text.
        labels: Five trait scores in [0, 1], order E A C N O.
    """
    clip_id: str
    split: str
    audio_path: str
    visual_path: str
    transcript: str
    labels: Tuple[float, ...]

    def __post_init__(self):
        self.labels = tuple(float(v) for v in validate_labels(self.labels, self.clip_id))

    @property
    def label_array(self) -> np.ndarray:
        return np.asarray(self.labels, dtype=np.float64)


SPLIT_NAMES = ("train", "val", "test")


@dataclass
class DatasetSplit:
    """Train / validation / test partitions with disjoint clip ids."""
    train: List[ClipRecord] = field(default_factory=list)
    validation: List[ClipRecord] = field(default_factory=list)
    test: List[ClipRecord] = field(default_factory=list)

    def __post_init__(self):
        seen: Dict[str, str] = {}
        for name, records in self.partitions().items():
            for record in records:
                if record.clip_id in seen:
                    raise DuplicateClipError(
                        f"clip id {record.clip_id!r} appears in both {seen[record.clip_id]} "
                        f"and {name}"
                    )
                seen[record.clip_id] = name

    def partitions(self) -> Dict[str, List[ClipRecord]]:
        return {"train": self.train, "val": self.validation, "test": self.test}

    def get(self, split: str) -> List[ClipRecord]:
        aliases = {"validation": "val", "dev": "val"}
        key = aliases.get(split, split)
        if key not in SPLIT_NAMES:
            raise DataError(f"unknown split {split!r}; expected one of {', '.join(SPLIT_NAMES)}")
        return self.partitions()[key]

    @property
    def records(self) -> List[ClipRecord]:
        return self.train + self.validation + self.test

    def __len__(self) -> int:
        return len(self.records)


@dataclass
class ClipInputs:
    """Decoded, model-ready inputs of one clip.

    Attributes:
        clip_id: Identifier carried through to diagnostics.
        labels: ``[5]`` float64 ground truth (may be ``None`` at prediction time).
        audio: Waveform already resampled to 8 kHz.
        transcript: Normalised transcript.
        frames: Candidate frames for the video channel.
        features: Precomputed backbone features, one vector per candidate frame.
    """
    clip_id: str
    labels: Optional[np.ndarray] = None
    audio: Optional[AudioClip] = None
    transcript: Optional[Transcript] = None
    frames: Optional[List[FrameImage]] = None
    features: Optional[List[np.ndarray]] = None


# ============================================================================
# EVALUATION
# ============================================================================


def accuracy_from_mae(mae: float) -> float:
    """ChaLearn mean accuracy: ``1 - MAE``."""
    return 1.0 - mae


@dataclass
class Metrics:
    """Per-trait and mean MAE / accuracy plus the training objective (MSE).

    Attributes:
        trait_mae: ``[5]`` mean absolute error per trait.
        trait_accuracy: ``[5]`` exactly ``1 - trait_mae``.
        mean_mae: Arithmetic mean of ``trait_mae``.
        mean_accuracy: Arithmetic mean of ``trait_accuracy``.
        mse: Mean over clips of the five-trait mean squared error.
        count: Number of clips evaluated.
    """
    trait_mae: Tuple[float, ...]
    trait_accuracy: Tuple[float, ...]
    mean_mae: float
    mean_accuracy: float
    mse: float
    count: int

    @classmethod
    def from_predictions(cls, predictions: np.ndarray, labels: np.ndarray) -> "Metrics":
        predictions = np.asarray(predictions, dtype=np.float64)
        labels = np.asarray(labels, dtype=np.float64)
        if predictions.shape != labels.shape or predictions.ndim != 2 \
                or predictions.shape[1] != NUM_TRAITS:
            raise DimensionError(
                f"predictions {predictions.shape} and labels {labels.shape} must both be "
                f"[n x {NUM_TRAITS}]"
            )
        if predictions.shape[0] == 0:
            raise EmptyDatasetError("cannot compute metrics over zero clips")
        errors = predictions - labels
        trait_mae = np.abs(errors).mean(axis=0)
        return cls.from_trait_mae(trait_mae, mse=float(np.mean((errors ** 2).mean(axis=1))),
                                  count=predictions.shape[0])

    @classmethod
    def from_trait_mae(cls, trait_mae: Sequence[float], mse: float = float("nan"),
                       count: int = 0) -> "Metrics":
        mae = tuple(float(v) for v in trait_mae)
        accuracy = tuple(accuracy_from_mae(v) for v in mae)
        return cls(
            trait_mae=mae,
            trait_accuracy=accuracy,
            mean_mae=float(np.mean(mae)),
            mean_accuracy=float(np.mean(accuracy)),
            mse=mse,
            count=count,
        )

    def as_row(self, kind: str = "mae") -> List[float]:
        """``[mean, E, A, C, N, O]`` for MAE (``kind="mae"``) or accuracy."""
        if kind == "mae":
            return [self.mean_mae, *self.trait_mae]
        if kind == "accuracy":
            return [self.mean_accuracy, *self.trait_accuracy]
        raise ValueError(f"kind must be 'mae' or 'accuracy', got {kind!r}")


@dataclass
class EpochRecord:
    epoch: int
    train_mse: float
    val_mse: float
    best: bool = False


@dataclass
class TrainHistory:
    """Per-epoch losses, the best (minimal validation MSE) epoch and why training stopped."""
    epochs: List[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    stop_reason: str = ""
    steps: int = 0

    @property
    def best_val_mse(self) -> float:
        for record in self.epochs:
            if record.epoch == self.best_epoch:
                return record.val_mse
        return float("nan")


# ============================================================================
# FUSION
# ============================================================================

_ROW_SUM_TOLERANCE = 1e-9


@dataclass
class FusionWeights:
    """Per-trait decision-level weights ``w[i, j]`` (trait i, modality j).

    Rows must sum to one; entries may be negative.

    Attributes:
        w: ``[5 x 3]`` array, rows E A C N O, columns audio, text, video.
        degenerate: Per-trait flag set when the fit had no information to use
            (all modalities predicted identically) and uniform weights were returned.
    """
    w: np.ndarray
    degenerate: Tuple[bool, ...] = (False,) * NUM_TRAITS

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=np.float64)
        if self.w.shape != (NUM_TRAITS, len(MODALITY_ORDER)):
            raise InvalidWeightsError(
                f"fusion weights must be {NUM_TRAITS}x{len(MODALITY_ORDER)}, got {self.w.shape}"
            )
        if not np.all(np.isfinite(self.w)):
            raise InvalidWeightsError("fusion weights must be finite")
        sums = self.w.sum(axis=1)
        for trait, total in zip(TRAIT_ORDER, sums):
            if abs(total - 1.0) > _ROW_SUM_TOLERANCE:
                raise InvalidWeightsError(
                    f"weights for trait {trait.value} sum to {total:.12f}, expected 1"
                )
        self.degenerate = tuple(bool(d) for d in self.degenerate)

    @classmethod
    def uniform(cls) -> "FusionWeights":
        return cls(np.full((NUM_TRAITS, len(MODALITY_ORDER)), 1.0 / len(MODALITY_ORDER)))

    def row(self, trait: Trait) -> np.ndarray:
        return self.w[trait.index]

    def to_table(self) -> List[List[str]]:
        """Modality rows x trait columns, two decimals (how the fitted weights are read)."""
        return [
            [modality.value.capitalize()] + [f"{self.w[i, j]:.2f}" for i in range(NUM_TRAITS)]
            for j, modality in enumerate(MODALITY_ORDER)
        ]


@dataclass
class PredictionSet:
    """Per-modality trait predictions and ground truth for a set of clips.

    Attributes:
        clip_ids: One id per clip.
        predictions: ``[n x 5 x 3]``: clip, trait and modality (audio, text, video).
        labels: ``[n x 5]`` ground truth.
    """
    clip_ids: List[str]
    predictions: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.predictions = np.asarray(self.predictions, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.float64)
        n = len(self.clip_ids)
        if self.predictions.shape != (n, NUM_TRAITS, len(MODALITY_ORDER)):
            raise DimensionError(
                f"predictions must be [{n} x {NUM_TRAITS} x {len(MODALITY_ORDER)}], "
                f"got {self.predictions.shape}"
            )
        if self.labels.shape != (n, NUM_TRAITS):
            raise DimensionError(f"labels must be [{n} x {NUM_TRAITS}], got {self.labels.shape}")
        for name, values in (("predictions", self.predictions), ("labels", self.labels)):
            if values.size and (values.min() < 0.0 or values.max() > 1.0):
                raise DataError(f"{name} must lie in [0, 1]")

    def __len__(self) -> int:
        return len(self.clip_ids)
