"""Tests for the video channel: frame selection, the frozen backbone and the dense head."""

import numpy as np
import pytest

from traitfusion import video
from traitfusion.config import VideoChannelConfig, parse_backbone_spec
from traitfusion.errors import DimensionError, MissingModalityError, NoFramesError, ParameterError
from traitfusion.models import ClipInputs, FrameImage
from traitfusion.trainer import train_steps
from traitfusion.video import (
    Backbone,
    VideoChannel,
    backbone_features,
    select_frame_index,
    select_random_frame,
)


def _frames(count=3, size=8, seed=0):
    rng = np.random.default_rng(seed)
    return [FrameImage(rng.uniform(0.0, 1.0, (3, size, size))) for _ in range(count)]


class TestFrameSelection:

    def test_evaluation_takes_middle(self):
        assert select_frame_index(5, training=False) == 2
        assert select_frame_index(4, training=False) == 2
        assert select_frame_index(1, training=False) == 0

    def test_training_covers_all_frames(self):
        rng = np.random.default_rng(0)
        picks = {select_frame_index(4, True, rng) for _ in range(200)}
        assert picks == {0, 1, 2, 3}

    def test_random_frame_is_one_of_the_inputs(self):
        frames = _frames()
        assert any(select_random_frame(frames, np.random.default_rng(1)) is f for f in frames)

    def test_no_frames(self):
        with pytest.raises(NoFramesError):
            select_frame_index(0, training=False)


class TestBackbone:

    def test_spec_parsing(self):
        assert parse_backbone_spec("conv16,pool2,conv32") == [
            ("conv", 16), ("pool", 2), ("conv", 32)]
        with pytest.raises(ParameterError):
            parse_backbone_spec("conv16,dense8")
        with pytest.raises(ParameterError):
            parse_backbone_spec("pool2")

    def test_features_are_deterministic(self, video_config):
        frame = _frames(1)[0]
        a = backbone_features(frame, Backbone(video_config))
        b = backbone_features(frame, Backbone(video_config))
        assert a.shape == (6,)
        np.testing.assert_array_equal(a, b)

    def test_backbone_is_frozen(self, video_config):
        assert all(p.frozen for p in Backbone(video_config).parameters())

    def test_wrong_frame_size(self, video_config):
        with pytest.raises(DimensionError):
            backbone_features(_frames(1, size=10)[0], Backbone(video_config))

    def test_pooling_to_nothing_rejected(self):
        with pytest.raises(ParameterError):
            VideoChannelConfig(backbone_spec="conv4,pool4,pool4", frame_size=8)


class TestVideoChannel:

    def test_forward_shapes(self, video_config):
        model = VideoChannel(video_config, seed=1)
        penultimate, traits = model.forward(ClipInputs("c", frames=_frames()))
        assert penultimate.shape == (5,)
        assert traits.shape == (5,)

    def test_backbone_bit_identical_after_training(self, video_config):
        model = VideoChannel(video_config, seed=1)
        rng = np.random.default_rng(0)
        clips = [ClipInputs(f"c{i}", rng.uniform(0.1, 0.9, 5), frames=_frames(seed=i))
                 for i in range(4)]
        before = {name: model.named_parameters()[name].data.copy()
                  for name in model.backbone_names}
        head_before = model.named_parameters()["video.fc1.weights"].data.copy()
        train_steps(model, clips, 10)
        for name, value in before.items():
            np.testing.assert_array_equal(model.named_parameters()[name].data, value)
        assert not np.array_equal(model.named_parameters()["video.fc1.weights"].data,
                                  head_before)

    def test_trainable_parameters_exclude_backbone(self, video_config):
        names = {p.name for p in VideoChannel(video_config).trainable_parameters()}
        assert names == {"video.fc1.weights", "video.fc1.bias", "video.head.weights",
                         "video.head.bias"}

    def test_precomputed_features(self):
        config = VideoChannelConfig(source="precomputed", feature_dim=4, head_hidden_dim=3)
        model = VideoChannel(config)
        assert model.backbone is None
        inputs = ClipInputs("c", features=[np.ones(4), np.zeros(4), np.full(4, 2.0)])
        np.testing.assert_array_equal(model.features(inputs).data, np.zeros(4))
        with pytest.raises(DimensionError):
            model.forward(ClipInputs("c", features=[np.ones(7)]))

    def test_reused_clip_id_with_new_frames(self, video_config):
        model = VideoChannel(video_config, seed=1)
        first, second = _frames(seed=1), _frames(seed=2)
        model.features(ClipInputs("c", frames=first))
        features = model.features(ClipInputs("c", frames=second)).data
        np.testing.assert_array_equal(features, backbone_features(second[1], model.backbone))

    def test_feature_cache_is_bounded(self, video_config, monkeypatch):
        monkeypatch.setattr(video, "FEATURE_CACHE_SIZE", 2)
        model = VideoChannel(video_config, seed=1)
        for i in range(5):
            model.features(ClipInputs(f"c{i}", frames=_frames(seed=i)))
        assert len(model._cache) == 2

    def test_missing_frames(self, video_config):
        with pytest.raises(MissingModalityError):
            VideoChannel(video_config).forward(ClipInputs("c"))
        with pytest.raises(NoFramesError):
            VideoChannel(video_config).forward(ClipInputs("c", frames=[]))
