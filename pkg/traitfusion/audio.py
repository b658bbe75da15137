"""
Audio channel: raw-waveform preprocessing and the four-layer 1-D CNN.

The network sees two rows per clip, the waveform and its square, runs a
cascade of valid convolutions (ReLU after each), takes the global average
of every layer's output, blends the four averages with softmax-normalised
learned weights and maps the blend through a 64-d dense layer to five
sigmoid trait scores.
"""

import logging
from typing import List, Mapping, Optional, Tuple

import numpy as np

from .autograd import (
    Parameter,
    Tensor,
    conv1d,
    conv1d_output_length,
    fully_connected,
    global_avg_pool,
    relu,
    sigmoid,
    softmax,
    weighted_sum,
)
from .config import MODEL_SAMPLE_RATE, AudioChannelConfig
from .errors import InputTooShortError, MissingModalityError, UpsamplingUnsupportedError
from .models import NUM_TRAITS, AudioClip, ClipInputs
from .nn import Module

logger = logging.getLogger(__name__)


# ============================================================================
# PREPROCESSING
# ============================================================================


def resample_to_8khz(clip: AudioClip) -> AudioClip:
    """Downsample to 8 kHz.

    Integer ratios decimate exactly (every k-th sample); anything else is
    linearly interpolated onto the 8 kHz grid.
    """
    rate = clip.sample_rate
    if rate < MODEL_SAMPLE_RATE:
        raise UpsamplingUnsupportedError(
            f"audio sampled at {rate} Hz; rates below {MODEL_SAMPLE_RATE} Hz are not supported"
        )
    if rate == MODEL_SAMPLE_RATE:
        return clip
    if rate % MODEL_SAMPLE_RATE == 0:
        return AudioClip(clip.samples[::rate // MODEL_SAMPLE_RATE].copy(), MODEL_SAMPLE_RATE)
    n_out = max(1, (clip.samples.size * MODEL_SAMPLE_RATE) // rate)
    t_out = np.arange(n_out) / MODEL_SAMPLE_RATE
    t_in = np.arange(clip.samples.size) / rate
    return AudioClip(np.interp(t_out, t_in, clip.samples), MODEL_SAMPLE_RATE)


def amplitude_coefficient(exponent: float) -> float:
    """``10 ** exponent``."""
    return float(10.0 ** exponent)


def randomize_amplitude(
    clip: AudioClip, rng: np.random.Generator, exponent_range: float = 1.5
) -> AudioClip:
    """Scale the whole clip by one draw of ``10 ** U(-r, r)`` (training only)."""
    alpha = amplitude_coefficient(rng.uniform(-exponent_range, exponent_range))
    return AudioClip(clip.samples * alpha, clip.sample_rate)


def dual_channel(clip: AudioClip) -> Tensor:
    """Stack the waveform and its elementwise square into a ``[2 x L]`` input."""
    return Tensor(np.stack([clip.samples, clip.samples * clip.samples]))


def conv_output_lengths(config: AudioChannelConfig, length: int) -> List[int]:
    """Output length of every conv layer for an input of ``length`` samples."""
    lengths = []
    for window, stride in config.layer_geometry():
        length = conv1d_output_length(length, window, stride)
        lengths.append(length)
    return lengths


# ============================================================================
# NETWORK
# ============================================================================


def audio_forward(
    x: Tensor,
    params: Mapping[str, Parameter],
    config: AudioChannelConfig,
    training: bool = False,
) -> Tuple[Tensor, Tensor]:
    """Run the audio CNN on a ``[2 x L]`` input.

    ``training`` is accepted for symmetry with the other channels; amplitude
    randomization happens on the clip, before ``dual_channel``.

    Returns:
        ``(penultimate [penultimate_dim], traits [5])``.
    """
    penultimate = audio_penultimate(x, params, config)
    traits = sigmoid(fully_connected(penultimate, params["audio.head.weights"],
                                     params["audio.head.bias"]))
    return penultimate, traits


def audio_penultimate(
    x: Tensor, params: Mapping[str, Parameter], config: AudioChannelConfig
) -> Tensor:
    """Everything up to (and including) the 64-d dense layer; the trait head is skipped."""
    minimum = config.minimum_length()
    if x.shape[-1] < minimum:
        raise InputTooShortError(x.shape[-1], minimum, "audio input")

    h = x
    pooled = []
    for layer, (_, stride) in enumerate(config.layer_geometry(), start=1):
        h = relu(conv1d(h, params[f"audio.conv{layer}.kernels"],
                        params[f"audio.conv{layer}.bias"], stride))
        pooled.append(global_avg_pool(h))
    blended = weighted_sum(softmax(params["audio.blend.logits"]), pooled)
    return relu(fully_connected(blended, params["audio.fc1.weights"], params["audio.fc1.bias"]))


class AudioChannel(Module):
    """Trainable audio channel.

    Parameters: ``audio.conv1..4.{kernels,bias}``, ``audio.blend.logits``,
    ``audio.fc1.{weights,bias}`` and ``audio.head.{weights,bias}``.
    """

    kind = "audio"
    head_names = ("audio.head.weights", "audio.head.bias")

    def __init__(self, config: Optional[AudioChannelConfig] = None, seed: int = 0):
        super().__init__("audio")
        self.config = config or AudioChannelConfig()
        rng = np.random.default_rng(seed)
        channels_in = 2
        for layer, (window, _) in enumerate(self.config.layer_geometry(), start=1):
            self.conv(f"conv{layer}", (self.config.filters, channels_in, window), rng)
            channels_in = self.config.filters
        self.vector("blend.logits", np.zeros(self.config.num_conv_layers))
        self.dense("fc1", self.config.filters, self.config.penultimate_dim, rng)
        self.dense("head", self.config.penultimate_dim, NUM_TRAITS, rng)

    @property
    def penultimate_dim(self) -> int:
        return self.config.penultimate_dim

    def blend_coefficients(self) -> np.ndarray:
        return softmax(Tensor(self.named_parameters()["audio.blend.logits"].data)).data

    def prepare(self, inputs: ClipInputs, training: bool,
                rng: Optional[np.random.Generator]) -> Tensor:
        if inputs.audio is None:
            raise MissingModalityError(f"clip {inputs.clip_id} has no audio")
        clip = resample_to_8khz(inputs.audio)
        if training and self.config.amplitude_randomization and rng is not None:
            clip = randomize_amplitude(clip, rng, self.config.amplitude_exponent_range)
        return dual_channel(clip)

    def forward(self, inputs: ClipInputs, training: bool = False,
                rng: Optional[np.random.Generator] = None) -> Tuple[Tensor, Tensor]:
        x = self.prepare(inputs, training, rng)
        return audio_forward(x, self.named_parameters(), self.config, training)

    def encode(self, inputs: ClipInputs, training: bool = False,
               rng: Optional[np.random.Generator] = None) -> Tensor:
        return audio_penultimate(self.prepare(inputs, training, rng), self.named_parameters(),
                                 self.config)
