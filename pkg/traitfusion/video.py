"""
Video channel: one frame per clip, a frozen conv backbone, two trainable dense layers.

The backbone is a small seeded stand-in for a pretrained face CNN and never
trains. Alternatively the channel reads precomputed feature vectors, so
real backbone features can be plugged in without images.
"""

import logging
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .autograd import (
    Parameter,
    Tensor,
    conv2d,
    fully_connected,
    global_avg_pool,
    max_pool2d,
    relu,
    sigmoid,
)
from .config import VideoChannelConfig
from .errors import DimensionError, MissingModalityError, NoFramesError
from .models import NUM_TRAITS, ClipInputs, FrameImage
from .nn import Module

logger = logging.getLogger(__name__)

# backbone features kept per channel, oldest dropped first
FEATURE_CACHE_SIZE = 4096


def select_frame_index(count: int, training: bool,
                       rng: Optional[np.random.Generator] = None) -> int:
    """Uniform random index while training, the middle index (``count // 2``) otherwise."""
    if count < 1:
        raise NoFramesError("clip has no frames to choose from")
    if training and rng is not None:
        return int(rng.integers(count))
    return count // 2


def select_random_frame(frames: Sequence[FrameImage], rng: Optional[np.random.Generator] = None,
                        training: bool = True) -> FrameImage:
    return frames[select_frame_index(len(frames), training, rng)]


class Backbone(Module):
    """Frozen feature extractor built from ``VideoChannelConfig.backbone_spec``.

    ``convN`` layers are 3x3, stride 1, pad 1, followed by ReLU; ``poolK`` is
    K x K max pooling; a global average pool over the final map gives the
    feature vector.
    """

    def __init__(self, config: VideoChannelConfig, seed: Optional[int] = None):
        super().__init__("video.backbone")
        self.config = config
        rng = np.random.default_rng(config.backbone_seed if seed is None else seed)
        channels_in = 3
        for index, (kind, size) in enumerate(config.layers, start=1):
            if kind == "conv":
                self.conv(f"conv{index}", (size, channels_in, 3, 3), rng)
                channels_in = size
        self.output_dim = channels_in
        self.set_frozen(True)

    def features(self, frame: FrameImage) -> np.ndarray:
        size = self.config.frame_size
        if (frame.height, frame.width) != (size, size):
            raise DimensionError(
                f"frame is {frame.height}x{frame.width}, backbone expects {size}x{size}"
            )
        params = self.named_parameters()
        h = Tensor(frame.pixels)
        for index, (kind, size) in enumerate(self.config.layers, start=1):
            if kind == "conv":
                h = relu(conv2d(h, params[f"video.backbone.conv{index}.kernels"],
                                params[f"video.backbone.conv{index}.bias"], stride=1, padding=1))
            else:
                h = max_pool2d(h, size)
        return global_avg_pool(h.reshape(h.shape[0], -1)).data


def backbone_features(frame: FrameImage, backbone: Backbone) -> np.ndarray:
    """Deterministic ``[F]`` features of one frame; the backbone is never updated."""
    return backbone.features(frame)


def video_forward(
    features: Tensor,
    params: Mapping[str, Parameter],
    config: VideoChannelConfig,
    training: bool = False,
) -> Tuple[Tensor, Tensor]:
    """Returns ``(penultimate [head_hidden_dim], traits [5])``."""
    penultimate = video_penultimate(features, params, config)
    traits = sigmoid(fully_connected(penultimate, params["video.head.weights"],
                                     params["video.head.bias"]))
    return penultimate, traits


def video_penultimate(
    features: Tensor, params: Mapping[str, Parameter], config: VideoChannelConfig
) -> Tensor:
    if features.shape != (config.backbone_output_dim,):
        raise DimensionError(
            f"feature vector has shape {features.shape}, expected "
            f"({config.backbone_output_dim},)"
        )
    return relu(fully_connected(features, params["video.fc1.weights"], params["video.fc1.bias"]))


class VideoChannel(Module):
    """Video channel: frozen ``Backbone`` (random source only) plus ``video.fc1`` / ``video.head``.

    Backbone features are cached per (clip id, frame index).
    """

    kind = "video"
    head_names = ("video.head.weights", "video.head.bias")

    def __init__(self, config: Optional[VideoChannelConfig] = None, seed: int = 0):
        super().__init__("video")
        self.config = config or VideoChannelConfig()
        self.backbone: Optional[Backbone] = None
        if self.config.source == "random":
            self.backbone = self.add_child(Backbone(self.config))
        rng = np.random.default_rng(seed)
        self.dense("fc1", self.config.backbone_output_dim, self.config.head_hidden_dim, rng)
        self.dense("head", self.config.head_hidden_dim, NUM_TRAITS, rng)
        self._cache: Dict[Tuple[str, int], Tuple[FrameImage, np.ndarray]] = {}

    @property
    def penultimate_dim(self) -> int:
        return self.config.head_hidden_dim

    @property
    def backbone_names(self) -> List[str]:
        return list(self.backbone.named_parameters()) if self.backbone is not None else []

    def clear_cache(self) -> None:
        self._cache.clear()

    def features(self, inputs: ClipInputs, training: bool = False,
                 rng: Optional[np.random.Generator] = None) -> Tensor:
        """Backbone (or precomputed) features of the frame chosen for this pass."""
        if self.config.source == "precomputed":
            if not inputs.features:
                raise MissingModalityError(f"clip {inputs.clip_id} has no precomputed features")
            index = select_frame_index(len(inputs.features), training, rng)
            return Tensor(inputs.features[index])
        if not inputs.frames:
            if inputs.frames is None:
                raise MissingModalityError(f"clip {inputs.clip_id} has no frames")
            raise NoFramesError(f"clip {inputs.clip_id} has no frames to choose from")
        index = select_frame_index(len(inputs.frames), training, rng)
        frame = inputs.frames[index]
        key = (inputs.clip_id, index)
        cached = self._cache.get(key)
        # entries hold their frame, so a reused clip id with new frames misses
        if cached is None or cached[0] is not frame:
            if key not in self._cache and len(self._cache) >= FEATURE_CACHE_SIZE:
                del self._cache[next(iter(self._cache))]
            cached = (frame, backbone_features(frame, self.backbone))
            self._cache[key] = cached
        return Tensor(cached[1])

    def forward(self, inputs: ClipInputs, training: bool = False,
                rng: Optional[np.random.Generator] = None) -> Tuple[Tensor, Tensor]:
        return video_forward(self.features(inputs, training, rng), self.named_parameters(),
                             self.config, training)

    def encode(self, inputs: ClipInputs, training: bool = False,
               rng: Optional[np.random.Generator] = None) -> Tensor:
        return video_penultimate(self.features(inputs, training, rng), self.named_parameters(),
                                 self.config)
