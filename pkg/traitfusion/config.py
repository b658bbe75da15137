"""
Configuration dataclasses with the full-size defaults, plus ``key=value`` overrides.

Each section validates itself on construction and raises ``ParameterError``.
``apply_overrides`` is what the command line's repeated ``--set`` flag feeds.
"""

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Tuple, Union

from .errors import ParameterError

OUTPUT_DIR_ENV = "TRAITFUSION_OUTPUT_DIR"
DEFAULT_OUTPUT_DIR = "traitfusion-out"

MODEL_SAMPLE_RATE = 8000


def default_output_dir() -> Path:
    return Path(os.environ.get(OUTPUT_DIR_ENV, DEFAULT_OUTPUT_DIR))


def _require_positive(section: str, **values: Union[int, float]) -> None:
    for name, value in values.items():
        if value <= 0:
            raise ParameterError(f"{section}.{name} must be positive, got {value}")


# ============================================================================
# CHANNELS
# ============================================================================


@dataclass
class AudioChannelConfig:
    """Raw-waveform audio CNN.

    The first layer spans 25 ms at 8 kHz with 50% overlap; later layers use
    window 8, stride 2.
    """
    first_window: int = 200
    first_stride: int = 100
    later_window: int = 8
    later_stride: int = 2
    filters: int = 512
    num_conv_layers: int = 4
    penultimate_dim: int = 64
    amplitude_randomization: bool = True
    amplitude_exponent_range: float = 1.5

    def __post_init__(self):
        _require_positive(
            "audio", first_window=self.first_window, first_stride=self.first_stride,
            later_window=self.later_window, later_stride=self.later_stride,
            filters=self.filters, penultimate_dim=self.penultimate_dim,
        )
        if self.num_conv_layers != 4:
            raise ParameterError(
                f"audio.num_conv_layers must be 4, got {self.num_conv_layers}"
            )
        if self.amplitude_exponent_range < 0:
            raise ParameterError(
                f"audio.amplitude_exponent_range must be >= 0, got {self.amplitude_exponent_range}"
            )

    def layer_geometry(self) -> List[Tuple[int, int]]:
        """``(window, stride)`` for each conv layer, first to last."""
        return [(self.first_window, self.first_stride)] + \
            [(self.later_window, self.later_stride)] * (self.num_conv_layers - 1)

    def minimum_length(self) -> int:
        """Shortest input for which every conv layer has at least one output position."""
        needed = 1
        for window, stride in reversed(self.layer_geometry()):
            needed = window + stride * (needed - 1)
        return needed


@dataclass
class TextChannelConfig:
    window_widths: Tuple[int, ...] = (3, 4, 5)
    filters_per_width: int = 128
    dropout_p: float = 0.5
    penultimate_dim: int = 64
    embedding_dim: int = 300

    def __post_init__(self):
        self.window_widths = tuple(int(w) for w in self.window_widths)
        if not self.window_widths or any(w <= 0 for w in self.window_widths):
            raise ParameterError(
                f"text.window_widths must be positive, got {list(self.window_widths)}"
            )
        if len(set(self.window_widths)) != len(self.window_widths):
            raise ParameterError(
                f"text.window_widths must be distinct, got {list(self.window_widths)}"
            )
        _require_positive(
            "text", filters_per_width=self.filters_per_width,
            penultimate_dim=self.penultimate_dim, embedding_dim=self.embedding_dim,
        )
        if not 0.0 <= self.dropout_p < 1.0:
            raise ParameterError(f"text.dropout_p must be in [0, 1), got {self.dropout_p}")

    @property
    def max_width(self) -> int:
        return max(self.window_widths)

    @property
    def encoding_dim(self) -> int:
        return self.filters_per_width * len(self.window_widths)


BACKBONE_SOURCES = ("random", "precomputed")
DEFAULT_BACKBONE_SPEC = "conv16,pool2,conv32,pool2,conv64"


def parse_backbone_spec(spec: str) -> List[Tuple[str, int]]:
    """Parse ``"conv16,pool2,conv32"`` into ``[("conv", 16), ("pool", 2), ("conv", 32)]``.

    ``convN`` is a 3x3, stride 1, pad 1 convolution with N filters followed by
    ReLU; ``poolK`` is non-overlapping K x K max pooling.
    """
    layers: List[Tuple[str, int]] = []
    for item in (part.strip() for part in spec.split(",")):
        for kind in ("conv", "pool"):
            if item.startswith(kind) and item[len(kind):].isdigit():
                size = int(item[len(kind):])
                if size <= 0:
                    raise ParameterError(f"backbone layer {item!r} needs a positive size")
                layers.append((kind, size))
                break
        else:
            raise ParameterError(
                f"invalid backbone layer {item!r}; expected convN or poolK in {spec!r}"
            )
    if not any(kind == "conv" for kind, _ in layers):
        raise ParameterError(f"backbone spec {spec!r} has no conv layer")
    return layers


@dataclass
class VideoChannelConfig:
    """Frozen conv backbone plus two trainable dense layers.

    Attributes:
        backbone_spec: Layer list, see ``parse_backbone_spec``.
        source: ``"random"`` (seeded frozen backbone over frames) or
            ``"precomputed"`` (feature vectors read from disk).
        feature_dim: Length of precomputed feature vectors; ignored for
            ``"random"``, where the last conv width decides.
        backbone_seed: Seed for the frozen backbone's initialisation.
    """
    backbone_spec: str = DEFAULT_BACKBONE_SPEC
    head_hidden_dim: int = 512
    frame_size: int = 64
    source: str = "random"
    feature_dim: int = 64
    backbone_seed: int = 0

    def __post_init__(self):
        self.layers = parse_backbone_spec(self.backbone_spec)
        _require_positive(
            "video", head_hidden_dim=self.head_hidden_dim, frame_size=self.frame_size,
            feature_dim=self.feature_dim,
        )
        if self.source not in BACKBONE_SOURCES:
            raise ParameterError(
                f"video.source must be one of {', '.join(BACKBONE_SOURCES)}, got {self.source!r}"
            )
        size = self.frame_size
        for kind, k in self.layers:
            if kind == "pool":
                size //= k
                if size == 0:
                    raise ParameterError(
                        f"video.backbone_spec pools a {self.frame_size}px frame to nothing"
                    )

    @property
    def backbone_output_dim(self) -> int:
        if self.source == "precomputed":
            return self.feature_dim
        return [size for kind, size in self.layers if kind == "conv"][-1]


# ============================================================================
# FUSION, TRAINING, SYNTHESIS
# ============================================================================


@dataclass
class FusionConfig:
    hidden_dim: int = 256
    penultimate_dims: Tuple[int, int, int] = (64, 64, 512)
    dlf_iterations: int = 10_000
    dlf_step: float = 0.1
    dlf_polish: bool = True

    def __post_init__(self):
        self.penultimate_dims = tuple(int(d) for d in self.penultimate_dims)
        if len(self.penultimate_dims) != 3:
            raise ParameterError(
                f"fusion.penultimate_dims needs three entries, got {list(self.penultimate_dims)}"
            )
        _require_positive(
            "fusion", hidden_dim=self.hidden_dim, dlf_iterations=self.dlf_iterations,
            dlf_step=self.dlf_step, **{f"penultimate_dims[{i}]": d
                                       for i, d in enumerate(self.penultimate_dims)},
        )

    @property
    def concat_dim(self) -> int:
        return sum(self.penultimate_dims)


@dataclass
class TrainConfig:
    batch_size: int = 8
    max_epochs: int = 30
    early_stop_patience: int = 5
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        _require_positive(
            "train", batch_size=self.batch_size, max_epochs=self.max_epochs,
            early_stop_patience=self.early_stop_patience, lr=self.lr, epsilon=self.epsilon,
        )
        if self.early_stop_patience > self.max_epochs:
            raise ParameterError(
                f"train.early_stop_patience ({self.early_stop_patience}) must not exceed "
                f"train.max_epochs ({self.max_epochs})"
            )


@dataclass
class SynthConfig:
    """Synthetic corpus with planted, complementary per-modality trait signals.

    Noise levels are standard deviations of the nuisance added to each
    planted cue; ``leak`` scales the weak secondary-trait cue every
    modality carries.
    """
    n_clips: int = 100
    seed: int = 0
    clip_seconds: float = 2.0
    sample_rate: int = MODEL_SAMPLE_RATE
    vocab_size: int = 200
    frame_size: int = 64
    frames_per_clip: int = 3
    embedding_dim: int = 300
    sentences_max: int = 5
    words_per_sentence: int = 12
    audio_noise: float = 0.02
    text_noise: float = 0.05
    video_noise: float = 0.02
    leak: float = 0.3

    def __post_init__(self):
        if self.n_clips < 3:
            raise ParameterError(
                f"synth.n_clips must be >= 3 to fill train/val/test splits, got {self.n_clips}"
            )
        _require_positive(
            "synth", clip_seconds=self.clip_seconds, sample_rate=self.sample_rate,
            vocab_size=self.vocab_size, frame_size=self.frame_size,
            frames_per_clip=self.frames_per_clip, embedding_dim=self.embedding_dim,
            sentences_max=self.sentences_max, words_per_sentence=self.words_per_sentence,
        )
        for name in ("audio_noise", "text_noise", "video_noise", "leak"):
            if getattr(self, name) < 0:
                raise ParameterError(f"synth.{name} must be >= 0, got {getattr(self, name)}")


# ============================================================================
# OVERRIDES
# ============================================================================


@dataclass
class RunConfig:
    """All configuration sections of one command-line run."""
    audio: AudioChannelConfig = field(default_factory=AudioChannelConfig)
    text: TextChannelConfig = field(default_factory=TextChannelConfig)
    video: VideoChannelConfig = field(default_factory=VideoChannelConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)

    def sections(self) -> Dict[str, Any]:
        return {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}


def _coerce(raw: str, current: Any, key: str) -> Any:
    try:
        if isinstance(current, bool):
            lowered = raw.strip().lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(current, int):
            return int(raw)
        if isinstance(current, float):
            return float(raw)
        if isinstance(current, tuple):
            return tuple(int(part) for part in raw.split(",") if part.strip())
    except ValueError:
        raise ParameterError(
            f"cannot convert {raw!r} for {key} (expected {type(current).__name__})"
        ) from None
    return raw


def apply_overrides(config: RunConfig, overrides: Iterable[str]) -> RunConfig:
    """Return a copy of ``config`` with dotted ``section.field=value`` overrides applied.

    Values are coerced to the type of the field's current value; tuples are
    comma-separated integers.
    """
    changes: Dict[str, Dict[str, Any]] = {}
    sections = config.sections()
    for item in overrides:
        key, sep, raw = item.partition("=")
        key = key.strip()
        section, dot, name = key.partition(".")
        if not sep or not dot:
            raise ParameterError(f"override must look like section.field=value, got {item!r}")
        if section not in sections:
            raise ParameterError(
                f"unknown config section {section!r}; expected one of {', '.join(sections)}"
            )
        valid = {f.name for f in dataclasses.fields(sections[section])}
        if name not in valid:
            raise ParameterError(
                f"unknown field {name!r} in section {section!r}; expected one of "
                f"{', '.join(sorted(valid))}"
            )
        current = changes.get(section, {}).get(name, getattr(sections[section], name))
        changes.setdefault(section, {})[name] = _coerce(raw, current, key)
    replaced = {
        section: dataclasses.replace(sections[section], **fields)
        for section, fields in changes.items()
    }
    return dataclasses.replace(config, **replaced)


def config_to_dict(section: Any) -> Dict[str, Any]:
    """Plain, JSON-serialisable dict of one config section."""
    return {
        f.name: list(v) if isinstance(v := getattr(section, f.name), tuple) else v
        for f in dataclasses.fields(section)
    }


def config_from_dict(cls: type, values: Dict[str, Any]) -> Any:
    """Rebuild a config section, ignoring keys the class does not know."""
    known = {f.name for f in dataclasses.fields(cls)}
    return cls(**{k: tuple(v) if isinstance(v, list) else v
                  for k, v in values.items() if k in known})
