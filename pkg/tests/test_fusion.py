"""Tests for decision-level fusion and the NNLB / NNFB fused networks."""

import numpy as np
import pytest

from traitfusion.audio import AudioChannel
from traitfusion.config import FusionConfig, TrainConfig
from traitfusion.errors import DimensionError, EmptyDatasetError, InvalidWeightsError
from traitfusion.fusion import (
    DecisionFusion,
    FusedNetwork,
    build_fused,
    dlf_fit,
    dlf_fit_report,
    dlf_predict,
    fit_trait_weights,
    fusion_config_for,
    grid_search_weights,
    lad_objective,
    read_weights,
    write_weights,
)
from traitfusion.models import FusionWeights, ModelKind, PredictionSet
from traitfusion.text import EmbeddingTable, TextChannel
from traitfusion.trainer import train_steps
from traitfusion.video import VideoChannel


# Audio, text and video rows, traits E A C N O; every trait column sums to 1.
REFERENCE_WEIGHTS = [
    [0.44, 0.32, 0.27, 0.45, 0.54],
    [-0.03, 0.22, 0.13, 0.03, -0.06],
    [0.59, 0.46, 0.60, 0.52, 0.52],
]


def _devset(preds, labels):
    return PredictionSet([f"c{i}" for i in range(len(labels))], preds, labels)


def _planted_devset(n=200, seed=0):
    """Every trait planted as ``0.6 * audio + 0.4 * video`` plus small noise."""
    rng = np.random.default_rng(seed)
    preds = rng.uniform(0.1, 0.9, (n, 5, 3))
    labels = 0.6 * preds[:, :, 0] + 0.4 * preds[:, :, 2] + rng.normal(0.0, 0.01, (n, 5))
    return _devset(preds, np.clip(labels, 0.0, 1.0))


@pytest.fixture
def channels(audio_config, text_config, video_config):
    return (AudioChannel(audio_config, seed=1),
            TextChannel(text_config, EmbeddingTable.hashed(8, 3), seed=1),
            VideoChannel(video_config, seed=1))


# ============================================================================
# DECISION-LEVEL FUSION
# ============================================================================


class TestDlfPredict:

    def test_weighted_sum_per_trait(self):
        weights = FusionWeights(np.tile([0.5, 0.25, 0.25], (5, 1)))
        preds = np.tile([0.8, 0.4, 0.0], (5, 1))
        np.testing.assert_allclose(dlf_predict(weights, preds), 0.5)

    def test_clamped_to_unit_interval(self):
        weights = FusionWeights(np.tile([2.0, -0.5, -0.5], (5, 1)))
        np.testing.assert_array_equal(dlf_predict(weights, np.tile([0.9, 0.0, 0.0], (5, 1))), 1.0)
        np.testing.assert_array_equal(dlf_predict(weights, np.tile([0.0, 0.9, 0.9], (5, 1))), 0.0)

    def test_shape_checked(self):
        with pytest.raises(DimensionError):
            dlf_predict(FusionWeights.uniform(), np.zeros((5, 2)))

    def test_reference_weights(self):
        weights = FusionWeights(np.array(REFERENCE_WEIGHTS).T)
        preds = np.tile([1.0, 0.0, 0.0], (5, 1))
        assert dlf_predict(weights, preds)[0] == pytest.approx(0.44)
        assert weights.to_table()[1] == ["Text", "-0.03", "0.22", "0.13", "0.03", "-0.06"]

    def test_equal_predictions_pass_through(self):
        weights = FusionWeights(np.array(REFERENCE_WEIGHTS).T)
        np.testing.assert_allclose(dlf_predict(weights, np.full((5, 3), 0.5)), 0.5)


class TestDlfFit:

    def test_recovers_single_modality(self):
        rng = np.random.default_rng(5)
        preds = rng.uniform(size=(80, 5, 3))
        weights = dlf_fit(_devset(preds, preds[:, :, 0].copy()))
        for row in weights.w:
            np.testing.assert_allclose(row, [1.0, 0.0, 0.0], atol=1e-2)

    def test_recovers_noiseless_mixture(self):
        rng = np.random.default_rng(6)
        preds = rng.uniform(size=(80, 5, 3))
        weights = dlf_fit(_devset(preds, 0.6 * preds[:, :, 0] + 0.4 * preds[:, :, 2]))
        for row in weights.w:
            np.testing.assert_allclose(row, [0.6, 0.0, 0.4], atol=1e-2)

    def test_recovers_planted_weights(self):
        weights = dlf_fit(_planted_devset())
        for row in weights.w:
            np.testing.assert_allclose(row, [0.6, 0.0, 0.4], atol=2e-2)

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(1)
        weights = dlf_fit(_devset(rng.uniform(size=(30, 5, 3)), rng.uniform(size=(30, 5))))
        np.testing.assert_allclose(weights.w.sum(axis=1), 1.0, atol=1e-9)

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_grid_search(self, seed):
        rng = np.random.default_rng(100 + seed)
        preds, labels = rng.uniform(size=(50, 5, 3)), rng.uniform(size=(50, 5))
        report = dlf_fit_report(_devset(preds, labels), FusionConfig(dlf_iterations=2000))
        for trait in range(5):
            _, grid_objective = grid_search_weights(preds[:, trait], labels[:, trait])
            assert report.objectives[trait] <= grid_objective + 1e-3

    def test_subgradient_alone_is_close(self):
        devset = _planted_devset(n=100, seed=2)
        fit = fit_trait_weights(devset.predictions[:, 0], devset.labels[:, 0], polish=False)
        exact = fit_trait_weights(devset.predictions[:, 0], devset.labels[:, 0])
        uniform = lad_objective(np.full(3, 1 / 3), devset.predictions[:, 0], devset.labels[:, 0])
        assert not fit.polished
        assert exact.objective <= fit.objective <= exact.objective + 5e-3
        assert fit.objective < uniform / 2

    def test_best_iterate_never_worse_than_uniform(self):
        rng = np.random.default_rng(3)
        preds, labels = rng.uniform(size=(20, 3)), rng.uniform(size=20)
        fit = fit_trait_weights(preds, labels, iterations=50, polish=False)
        assert fit.objective <= lad_objective(np.full(3, 1 / 3), preds, labels)

    def test_identical_modalities_degenerate(self):
        rng = np.random.default_rng(4)
        column = rng.uniform(size=(25, 5, 1))
        weights = dlf_fit(_devset(np.repeat(column, 3, axis=2), rng.uniform(size=(25, 5))))
        np.testing.assert_allclose(weights.w, 1.0 / 3.0)
        assert weights.degenerate == (True,) * 5

    def test_empty_devset(self):
        with pytest.raises(EmptyDatasetError):
            dlf_fit(_devset(np.zeros((0, 5, 3)), np.zeros((0, 5))))


class TestWeightsFile:

    def test_write_then_read(self, tmp_path):
        weights = dlf_fit(_planted_devset(n=60))
        path = write_weights(tmp_path / "w.txt", weights)
        lines = path.read_text().splitlines()
        assert [line.split()[0] for line in lines] == ["E", "A", "C", "N", "O"]
        np.testing.assert_array_equal(read_weights(path).w, weights.w)

    def test_rows_must_sum_to_one(self, tmp_path):
        path = tmp_path / "w.txt"
        path.write_text("E 0.5 0.5 0.5\nA 1 0 0\nC 1 0 0\nN 1 0 0\nO 1 0 0\n")
        with pytest.raises(InvalidWeightsError):
            read_weights(path)

    def test_trait_order_enforced(self, tmp_path):
        path = tmp_path / "w.txt"
        path.write_text("A 1 0 0\nE 1 0 0\nC 1 0 0\nN 1 0 0\nO 1 0 0\n")
        with pytest.raises(InvalidWeightsError, match="line 1"):
            read_weights(path)


class TestDecisionFusion:

    def test_forward_combines_channel_outputs(self, channels, clips):
        fusion = DecisionFusion(*channels, FusionWeights(np.tile([1.0, 0.0, 0.0], (5, 1))))
        preds, fused = fusion.forward(clips[0])
        assert preds.shape == (5, 3)
        np.testing.assert_allclose(fused.data, channels[0].forward(clips[0])[1].data)


# ============================================================================
# NETWORK FUSION
# ============================================================================


class TestFusedNetwork:

    def test_default_concat_width(self):
        assert FusionConfig().concat_dim == 640

    def test_penultimate_concat(self, channels, fusion_config, clips):
        net = build_fused(*channels, ModelKind.NNLB, fusion_config)
        assert net.penultimates(clips[0]).shape == (15,)
        hidden, traits = net.forward(clips[0])
        assert hidden.shape == (4,) and traits.shape == (5,)

    def test_dims_must_match(self, channels):
        with pytest.raises(DimensionError):
            build_fused(*channels, ModelKind.NNLB, FusionConfig(hidden_dim=4))

    def test_fusion_config_for_reads_channel_widths(self, channels):
        assert fusion_config_for(*channels).penultimate_dims == (6, 4, 5)

    def test_originals_untouched(self, channels, fusion_config):
        net = build_fused(*channels, ModelKind.NNFB, fusion_config)
        assert net.audio is not channels[0]
        assert not channels[0].named_parameters()["audio.fc1.weights"].frozen

    def test_nnlb_trainable_set(self, channels, fusion_config):
        net = build_fused(*channels, ModelKind.NNLB, fusion_config)
        assert {p.name for p in net.trainable_parameters()} == {
            "fusion.fc1.weights", "fusion.fc1.bias", "fusion.head.weights", "fusion.head.bias"}

    def test_nnfb_trainable_set(self, channels, fusion_config):
        net = build_fused(*channels, ModelKind.NNFB, fusion_config)
        trainable = {p.name for p in net.trainable_parameters()}
        assert "audio.conv1.kernels" in trainable
        assert "text.conv3.kernels" in trainable
        assert "video.fc1.weights" in trainable
        assert not any(name.startswith("video.backbone") for name in trainable)
        assert not any(name.endswith(".head.weights") and not name.startswith("fusion")
                       for name in trainable)

    def test_nnlb_keeps_channels_bit_identical(self, channels, fusion_config, clips):
        net = build_fused(*channels, ModelKind.NNLB, fusion_config)
        before = {name: value for name, value in net.snapshot().items()
                  if not name.startswith("fusion.")}
        fusion_before = net.named_parameters()["fusion.head.bias"].data.copy()
        train_steps(net, clips, 50, TrainConfig(batch_size=4))
        after = net.snapshot()
        for name, value in before.items():
            np.testing.assert_array_equal(after[name], value)
        assert not np.array_equal(after["fusion.head.bias"], fusion_before)

    def test_nnfb_updates_audio_and_text_but_not_backbone(self, channels, fusion_config, clips):
        net = build_fused(*channels, ModelKind.NNFB, fusion_config)
        before = net.snapshot()
        train_steps(net, clips, 50, TrainConfig(batch_size=4))
        after = net.snapshot()

        def changed(prefix):
            return any(not np.array_equal(after[n], before[n]) for n in before
                       if n.startswith(prefix))

        assert changed("audio.")
        assert changed("text.")
        assert not changed("video.backbone.")
        assert not changed("audio.head.")

    def test_rejects_channel_mode(self, channels, fusion_config):
        with pytest.raises(ValueError):
            FusedNetwork(*channels, ModelKind.AUDIO, fusion_config)
