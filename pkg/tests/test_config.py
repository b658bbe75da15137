"""Tests for configuration defaults, validation and ``--set`` overrides."""

import pytest

from traitfusion.config import (
    OUTPUT_DIR_ENV,
    AudioChannelConfig,
    FusionConfig,
    RunConfig,
    SynthConfig,
    TextChannelConfig,
    TrainConfig,
    VideoChannelConfig,
    apply_overrides,
    config_from_dict,
    config_to_dict,
    default_output_dir,
    parse_backbone_spec,
)
from traitfusion.errors import ParameterError


class TestDefaults:
    """Defaults give the full-size architecture."""

    def test_audio(self):
        config = AudioChannelConfig()
        assert config.layer_geometry() == [(200, 100), (8, 2), (8, 2), (8, 2)]
        assert config.filters == 512
        assert config.minimum_length() == 5100

    def test_text(self):
        config = TextChannelConfig()
        assert config.window_widths == (3, 4, 5)
        assert config.encoding_dim == 384
        assert config.max_width == 5

    def test_fusion_and_training(self):
        assert FusionConfig().concat_dim == 640
        train = TrainConfig()
        assert (train.batch_size, train.lr) == (8, 1e-3)

    def test_video_backbone(self):
        config = VideoChannelConfig()
        assert config.backbone_output_dim == 64
        assert VideoChannelConfig(source="precomputed", feature_dim=10).backbone_output_dim == 10


class TestValidation:

    def test_audio_layer_count_fixed(self):
        with pytest.raises(ParameterError, match="num_conv_layers"):
            AudioChannelConfig(num_conv_layers=3)

    def test_non_positive_sizes(self):
        with pytest.raises(ParameterError, match="audio.filters"):
            AudioChannelConfig(filters=0)
        with pytest.raises(ParameterError, match="fusion.hidden_dim"):
            FusionConfig(hidden_dim=-1)

    def test_text_widths(self):
        with pytest.raises(ParameterError):
            TextChannelConfig(window_widths=(3, 3))
        with pytest.raises(ParameterError):
            TextChannelConfig(window_widths=())
        with pytest.raises(ParameterError):
            TextChannelConfig(dropout_p=1.0)

    def test_patience_bounded_by_epochs(self):
        with pytest.raises(ParameterError, match="early_stop_patience"):
            TrainConfig(max_epochs=3, early_stop_patience=4)

    def test_video_source(self):
        with pytest.raises(ParameterError, match="video.source"):
            VideoChannelConfig(source="imagenet")

    def test_pooling_to_nothing(self):
        with pytest.raises(ParameterError):
            VideoChannelConfig(backbone_spec="conv4,pool8,pool8", frame_size=16)

    def test_fusion_needs_three_dims(self):
        with pytest.raises(ParameterError):
            FusionConfig(penultimate_dims=(64, 64))

    def test_synth_noise(self):
        with pytest.raises(ParameterError):
            SynthConfig(leak=-0.1)


class TestBackboneSpec:

    def test_parse(self):
        assert parse_backbone_spec("conv16, pool2,conv32") == [
            ("conv", 16), ("pool", 2), ("conv", 32)]

    @pytest.mark.parametrize("spec", ["conv", "dense4", "pool2", "conv0"])
    def test_rejects(self, spec):
        with pytest.raises(ParameterError):
            parse_backbone_spec(spec)


class TestOverrides:

    def test_types_follow_current_values(self):
        config = apply_overrides(RunConfig(), [
            "train.lr=0.01", "train.max_epochs=4", "train.shuffle=no",
            "text.window_widths=2,3", "video.backbone_spec=conv4,pool2,conv6",
        ])
        assert config.train.lr == 0.01
        assert config.train.max_epochs == 4
        assert config.train.shuffle is False
        assert config.text.window_widths == (2, 3)
        assert config.video.backbone_output_dim == 6

    def test_original_untouched(self):
        base = RunConfig()
        apply_overrides(base, ["audio.filters=4"])
        assert base.audio.filters == 512

    def test_later_override_wins(self):
        config = apply_overrides(RunConfig(), ["synth.n_clips=10", "synth.n_clips=12"])
        assert config.synth.n_clips == 12

    def test_validated_after_merge(self):
        with pytest.raises(ParameterError, match="early_stop_patience"):
            apply_overrides(RunConfig(), ["train.max_epochs=2"])
        config = apply_overrides(RunConfig(), ["train.max_epochs=2",
                                               "train.early_stop_patience=1"])
        assert config.train.max_epochs == 2

    @pytest.mark.parametrize("item, match", [
        ("lr=0.1", "section.field=value"),
        ("train.lr", "section.field=value"),
        ("optim.lr=0.1", "unknown config section"),
        ("train.momentum=0.9", "unknown field"),
        ("train.batch_size=eight", "cannot convert"),
        ("train.shuffle=maybe", "cannot convert"),
    ])
    def test_errors(self, item, match):
        with pytest.raises(ParameterError, match=match):
            apply_overrides(RunConfig(), [item])


class TestSerialisation:

    def test_dict_round_trip(self):
        config = TextChannelConfig(window_widths=(2, 4), embedding_dim=16)
        values = config_to_dict(config)
        assert values["window_widths"] == [2, 4]
        assert config_from_dict(TextChannelConfig, values) == config

    def test_unknown_keys_ignored(self):
        config = config_from_dict(TrainConfig, {"lr": 0.5, "legacy_flag": True})
        assert config.lr == 0.5


def test_output_dir_from_environment(monkeypatch, tmp_path):
    monkeypatch.setenv(OUTPUT_DIR_ENV, str(tmp_path / "runs"))
    assert default_output_dir() == tmp_path / "runs"
    monkeypatch.delenv(OUTPUT_DIR_ENV)
    assert default_output_dir().name == "traitfusion-out"
