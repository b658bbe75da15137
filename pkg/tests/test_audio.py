"""Tests for the audio channel: resampling, amplitude randomization and the CNN."""

import numpy as np
import pytest
from scipy import stats

from traitfusion.audio import (
    AudioChannel,
    amplitude_coefficient,
    audio_forward,
    conv_output_lengths,
    dual_channel,
    randomize_amplitude,
    resample_to_8khz,
)
from traitfusion.config import AudioChannelConfig
from traitfusion.errors import InputTooShortError, MissingModalityError, UpsamplingUnsupportedError
from traitfusion.models import AudioClip, ClipInputs


def _clip(n=400, rate=8000, seed=0):
    return AudioClip(np.random.default_rng(seed).uniform(-0.5, 0.5, n), rate)


# ============================================================================
# PREPROCESSING
# ============================================================================


class TestResample:

    def test_48k_fifteen_seconds(self):
        clip = resample_to_8khz(AudioClip(np.zeros(48000 * 15), 48000))
        assert clip.sample_rate == 8000
        assert len(clip) == 120000

    def test_integer_ratio_decimates(self):
        samples = np.arange(12.0) / 100.0
        clip = resample_to_8khz(AudioClip(samples, 16000))
        np.testing.assert_array_equal(clip.samples, samples[::2])

    def test_one_second_at_48k(self):
        assert len(resample_to_8khz(AudioClip(np.zeros(48000), 48000))) == 8000

    def test_44k1_constant_stays_constant(self):
        clip = resample_to_8khz(AudioClip(np.full(44100, 0.25), 44100))
        assert len(clip) == 8000
        np.testing.assert_allclose(clip.samples, 0.25)

    def test_8k_is_unchanged(self):
        clip = _clip()
        assert resample_to_8khz(clip) is clip

    def test_upsampling_rejected(self):
        with pytest.raises(UpsamplingUnsupportedError):
            resample_to_8khz(AudioClip(np.zeros(100), 4000))


class TestAmplitude:

    def test_coefficient(self):
        assert amplitude_coefficient(1.5) == pytest.approx(31.6227766)
        assert amplitude_coefficient(-1.5) == pytest.approx(0.0316227766)

    def test_randomized_within_range(self):
        clip = AudioClip(np.full(10, 0.1), 8000)
        rng = np.random.default_rng(0)
        for _ in range(50):
            scaled = randomize_amplitude(clip, rng).samples
            assert np.all(scaled == scaled[0])
            assert 10 ** -1.5 * 0.1 - 1e-12 <= scaled[0] <= 10 ** 1.5 * 0.1 + 1e-12

    def test_exponent_is_uniform(self):
        clip = AudioClip(np.ones(1), 8000)
        rng = np.random.default_rng(1)
        exponents = [np.log10(randomize_amplitude(clip, rng).samples[0]) for _ in range(2000)]
        assert stats.kstest(exponents, stats.uniform(loc=-1.5, scale=3.0).cdf).pvalue > 0.01

    def test_dual_channel(self):
        x = dual_channel(AudioClip(np.array([0.5, -0.5, 0.0]), 8000))
        np.testing.assert_array_equal(x.data, [[0.5, -0.5, 0.0], [0.25, 0.25, 0.0]])


# ============================================================================
# NETWORK
# ============================================================================


class TestGeometry:

    def test_fifteen_second_layer_lengths(self):
        assert conv_output_lengths(AudioChannelConfig(), 120000) == [1199, 596, 295, 144]

    def test_minimum_length(self):
        assert AudioChannelConfig().minimum_length() == 5100
        assert conv_output_lengths(AudioChannelConfig(), 5100)[-1] == 1

    def test_too_short_rejected(self, audio_config):
        model = AudioChannel(audio_config)
        with pytest.raises(InputTooShortError) as info:
            model.forward(ClipInputs("c", audio=_clip(n=229)))
        assert info.value.minimum_length == 230

    def test_shortest_admissible_input(self, audio_config):
        _, traits = AudioChannel(audio_config).forward(ClipInputs("c", audio=_clip(n=230)))
        assert traits.shape == (5,)


class TestAudioChannel:

    def test_output_ranges(self, audio_config):
        model = AudioChannel(audio_config, seed=1)
        penultimate, traits = model.forward(ClipInputs("c", audio=_clip()))
        assert penultimate.shape == (6,)
        assert np.all(penultimate.data >= 0.0)
        assert np.all((traits.data > 0.0) & (traits.data < 1.0))

    def test_zero_parameters_predict_half(self, audio_config):
        model = AudioChannel(audio_config)
        model.restore({name: np.zeros(p.shape) for name, p in model.named_parameters().items()})
        _, traits = model.forward(ClipInputs("c", audio=_clip()))
        np.testing.assert_array_equal(traits.data, 0.5)

    def test_blend_starts_uniform(self, audio_config):
        np.testing.assert_allclose(AudioChannel(audio_config).blend_coefficients(), 0.25)

    def test_functional_form_matches_module(self, audio_config):
        model = AudioChannel(audio_config, seed=2)
        clip = _clip(seed=4)
        _, from_module = model.forward(ClipInputs("c", audio=clip))
        _, from_function = audio_forward(dual_channel(clip), model.named_parameters(),
                                         audio_config)
        np.testing.assert_array_equal(from_module.data, from_function.data)

    def test_encode_is_penultimate(self, audio_config):
        model = AudioChannel(audio_config, seed=2)
        inputs = ClipInputs("c", audio=_clip())
        np.testing.assert_array_equal(model.encode(inputs).data, model.forward(inputs)[0].data)

    def test_amplitude_randomization_only_while_training(self):
        config = AudioChannelConfig(first_window=20, first_stride=10, later_window=4,
                                    later_stride=2, filters=4, penultimate_dim=6)
        model = AudioChannel(config, seed=3)
        inputs = ClipInputs("c", audio=_clip())
        evaluation = [model.forward(inputs, False, np.random.default_rng(s))[1].data
                      for s in range(2)]
        np.testing.assert_array_equal(evaluation[0], evaluation[1])
        trained = model.prepare(inputs, True, np.random.default_rng(0)).data
        assert not np.allclose(trained[0], inputs.audio.samples)

    def test_resamples_high_rate_input(self, audio_config):
        model = AudioChannel(audio_config)
        inputs = ClipInputs("c", audio=AudioClip(np.zeros(800 * 6), 48000))
        assert model.prepare(inputs, False, None).shape == (2, 800)

    def test_missing_audio(self, audio_config):
        with pytest.raises(MissingModalityError):
            AudioChannel(audio_config).forward(ClipInputs("c"))

    def test_parameter_names(self, audio_config):
        names = set(AudioChannel(audio_config).named_parameters())
        assert {"audio.conv1.kernels", "audio.conv4.bias", "audio.blend.logits",
                "audio.fc1.weights", "audio.head.bias"} <= names
