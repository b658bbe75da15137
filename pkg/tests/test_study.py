"""Tests for the end-to-end fusion study."""

import dataclasses

import numpy as np
import pytest

from traitfusion.config import RunConfig
from traitfusion.errors import ParameterError
from traitfusion.models import FusionWeights, Metrics
from traitfusion.study import (
    BASELINE_ROW,
    ROW_ORDER,
    StudyResult,
    check_study_config,
    relative_improvement,
    run_fusion_study,
    study_config,
)


def _result(mean_maes):
    rows = {name: Metrics.from_trait_mae([mae] * 5) for name, mae in zip(ROW_ORDER, mean_maes)}
    return StudyResult(rows, FusionWeights.uniform())


class TestStudyResult:

    def test_relative_improvement(self):
        assert relative_improvement(0.1035, 0.0938) == pytest.approx(0.0937, abs=1e-4)
        assert relative_improvement(0.0, 0.1) == 0.0

    def test_improvements_over_best_single(self):
        # Audio, Text, Video, DLF, NNLB, NNFB, baseline
        result = _result([0.1059, 0.1132, 0.1035, 0.0967, 0.0966, 0.0938, 0.1165])
        assert result.best_single == ("Video", pytest.approx(0.1035))
        improvements = result.improvements
        assert improvements["NNFB"] > improvements["NNLB"] > 0
        assert result.nnfb_over_nnlb == pytest.approx((0.0966 - 0.0938) / 0.0966)

    def test_table(self):
        table = _result([0.1] * 7).table("accuracy")
        assert table[0] == ["Model", "Mean", "E", "A", "C", "N", "O"]
        assert [row[0] for row in table[1:]] == list(ROW_ORDER)
        assert table[-1] == [BASELINE_ROW] + ["0.9000"] * 6


class TestStudyConfig:

    def test_desk_scale_defaults_are_consistent(self):
        config = study_config()
        check_study_config(config)
        assert config.audio.filters < RunConfig().audio.filters

    def test_departures_from_full_size(self):
        config = study_config()
        assert config.audio.amplitude_randomization is False
        assert RunConfig().audio.amplitude_randomization is True
        widths = (config.audio.penultimate_dim, config.text.penultimate_dim,
                  config.video.head_hidden_dim)
        assert sum(widths) == 192

    def test_caller_overrides_applied_last(self):
        assert study_config(["synth.n_clips=20"]).synth.n_clips == 20

    def test_frame_size_mismatch(self):
        with pytest.raises(ParameterError, match="frame_size"):
            check_study_config(study_config(["video.frame_size=16"]))

    def test_embedding_mismatch(self):
        with pytest.raises(ParameterError, match="embedding_dim"):
            check_study_config(study_config(["text.embedding_dim=20"]))


@pytest.mark.slow
def test_tiny_study_end_to_end(tmp_path, run_config):
    config = dataclasses.replace(
        run_config, fusion=dataclasses.replace(run_config.fusion, dlf_iterations=500))
    result = run_fusion_study(tmp_path, config)

    assert set(result.rows) == set(ROW_ORDER)
    for metrics in result.rows.values():
        assert 0.0 <= metrics.mean_mae <= 1.0
    np.testing.assert_allclose(result.weights.w.sum(axis=1), 1.0, atol=1e-9)
    assert set(result.histories) == {"audio", "text", "video", "nnlb", "nnfb"}
    for name in ("audio", "text", "video", "nnlb", "nnfb"):
        assert (tmp_path / "models" / f"{name}.ckpt").exists()
    assert (tmp_path / "models" / "dlf_weights.txt").exists()
    lines = (tmp_path / "results_mae.tsv").read_text().splitlines()
    assert len(lines) == 1 + len(ROW_ORDER)


@pytest.mark.slow
def test_desk_study_fusion_beats_single_channels(tmp_path):
    result = run_fusion_study(tmp_path, study_config())
    mae = {name: metrics.mean_mae for name, metrics in result.rows.items()}

    assert mae["NNFB"] <= mae["NNLB"]
    assert result.improvements["NNFB"] >= 0.03
    for name in ROW_ORDER[:-1]:
        assert mae[name] < mae[BASELINE_ROW], name
