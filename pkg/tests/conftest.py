"""Shared fixtures: desk-sized channel configs and a tiny synthetic corpus."""

import pytest

from traitfusion.config import (
    AudioChannelConfig,
    FusionConfig,
    RunConfig,
    SynthConfig,
    TextChannelConfig,
    TrainConfig,
    VideoChannelConfig,
)
from traitfusion.synth import MANIFEST_NAME, SyntheticCorpusGenerator, synth_generate

# Minimum admissible audio length for TINY_AUDIO is 230 samples; synthetic
# clips below are 0.05 s at 8 kHz = 400 samples.
TINY_AUDIO = dict(first_window=20, first_stride=10, later_window=4, later_stride=2, filters=4,
                  penultimate_dim=6, amplitude_randomization=False)
TINY_TEXT = dict(window_widths=(2, 3), filters_per_width=4, dropout_p=0.5, penultimate_dim=4,
                 embedding_dim=8)
TINY_VIDEO = dict(backbone_spec="conv4,pool2,conv6", head_hidden_dim=5, frame_size=8)
TINY_SYNTH = dict(n_clips=10, seed=3, clip_seconds=0.05, vocab_size=40, frame_size=8,
                  frames_per_clip=2, embedding_dim=8, sentences_max=3, words_per_sentence=5)

# The same sizes as --set overrides for the command line.
TINY_OVERRIDES = [
    *(f"audio.{k}={str(v).lower() if isinstance(v, bool) else v}" for k, v in TINY_AUDIO.items()),
    *(f"text.{k}={','.join(map(str, v)) if isinstance(v, tuple) else v}"
      for k, v in TINY_TEXT.items()),
    *(f"video.{k}={v}" for k, v in TINY_VIDEO.items()),
    *(f"synth.{k}={v}" for k, v in TINY_SYNTH.items()),
    "fusion.hidden_dim=4",
    "train.batch_size=4",
    "train.max_epochs=2",
    "train.early_stop_patience=1",
]


@pytest.fixture
def audio_config():
    return AudioChannelConfig(**TINY_AUDIO)


@pytest.fixture
def text_config():
    return TextChannelConfig(**TINY_TEXT)


@pytest.fixture
def video_config():
    return VideoChannelConfig(**TINY_VIDEO)


@pytest.fixture
def synth_config():
    return SynthConfig(**TINY_SYNTH)


@pytest.fixture
def fusion_config():
    return FusionConfig(hidden_dim=4, penultimate_dims=(6, 4, 5))


@pytest.fixture
def run_config(audio_config, text_config, video_config, synth_config, fusion_config):
    return RunConfig(
        audio=audio_config,
        text=text_config,
        video=video_config,
        fusion=fusion_config,
        train=TrainConfig(batch_size=4, max_epochs=3, early_stop_patience=2),
        synth=synth_config,
    )


@pytest.fixture
def clips(synth_config):
    """The tiny corpus as in-memory ``ClipInputs``, id order."""
    return [clip.to_inputs() for clip in SyntheticCorpusGenerator(synth_config).clips()]


@pytest.fixture
def corpus(tmp_path, synth_config):
    """The tiny corpus written to disk; yields ``(manifest_path, split)``."""
    out = tmp_path / "corpus"
    split = synth_generate(synth_config, out)
    return out / MANIFEST_NAME, split
