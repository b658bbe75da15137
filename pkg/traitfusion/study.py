"""
End-to-end fusion study on a synthetic corpus.

synth -> train audio, text, video -> fit decision-level weights on the
validation split -> train NNLB and NNFB -> evaluate every model and the
train-label-mean baseline on the test split. The result holds one
``Metrics`` row per model plus the relative improvement of each fusion over
the best single modality.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple, Union

from .audio import AudioChannel
from .checkpoint import save_checkpoint, write_history
from .config import RunConfig, apply_overrides
from .errors import ParameterError
from .fusion import DecisionFusion, build_fused, dlf_fit, fusion_config_for, write_weights
from .media import ClipLoader, load_embeddings
from .models import TRAIT_CODES, DatasetSplit, FusionWeights, Metrics, ModelKind, TrainHistory
from .nn import Module
from .synth import EMBEDDINGS_NAME, synth_generate
from .text import EmbeddingTable, TextChannel
from .trainer import baseline_train_mean, collect_predictions, evaluate, train
from .video import VideoChannel

logger = logging.getLogger(__name__)

SINGLE_ROWS = ("Audio", "Text", "Video")
FUSED_ROWS = ("DLF", "NNLB", "NNFB")
BASELINE_ROW = "Train labels avg"
ROW_ORDER = SINGLE_ROWS + FUSED_ROWS + (BASELINE_ROW,)

# Desk-scale widths; the full-size defaults stay in config.py. Two of these
# leave the full-size recipe: audio amplitude randomization is off, and the
# 64-wide video head makes the fusion input 192 wide instead of 640.
STUDY_OVERRIDES = (
    "synth.n_clips=300",
    "synth.frame_size=32",
    "synth.embedding_dim=50",
    "audio.filters=32",
    "audio.amplitude_randomization=false",
    "text.filters_per_width=32",
    "text.embedding_dim=50",
    "video.frame_size=32",
    "video.backbone_spec=conv8,pool2,conv16",
    "video.head_hidden_dim=64",
    "fusion.hidden_dim=64",
)


def study_config(overrides: Iterable[str] = ()) -> RunConfig:
    """``STUDY_OVERRIDES`` on top of the defaults, then the caller's overrides."""
    return apply_overrides(RunConfig(), list(STUDY_OVERRIDES) + list(overrides))


def check_study_config(config: RunConfig) -> None:
    if config.video.frame_size != config.synth.frame_size:
        raise ParameterError(
            f"video.frame_size ({config.video.frame_size}) must equal synth.frame_size "
            f"({config.synth.frame_size})"
        )
    if config.text.embedding_dim != config.synth.embedding_dim:
        raise ParameterError(
            f"text.embedding_dim ({config.text.embedding_dim}) must equal "
            f"synth.embedding_dim ({config.synth.embedding_dim})"
        )
    if config.video.source != "random":
        raise ParameterError("the study renders frames, so video.source must be 'random'")


def relative_improvement(reference: float, value: float) -> float:
    """``(reference - value) / reference``: positive when ``value`` is the lower error."""
    return (reference - value) / reference if reference else 0.0


@dataclass
class StudyResult:
    rows: Dict[str, Metrics]
    weights: FusionWeights
    histories: Dict[str, TrainHistory] = field(default_factory=dict)
    out_dir: Optional[Path] = None

    @property
    def best_single(self) -> Tuple[str, float]:
        name = min(SINGLE_ROWS, key=lambda row: self.rows[row].mean_mae)
        return name, self.rows[name].mean_mae

    @property
    def improvements(self) -> Dict[str, float]:
        """Relative MAE improvement of each fused model over the best single modality."""
        _, best = self.best_single
        return {row: relative_improvement(best, self.rows[row].mean_mae) for row in FUSED_ROWS}

    @property
    def nnfb_over_nnlb(self) -> float:
        return relative_improvement(self.rows["NNLB"].mean_mae, self.rows["NNFB"].mean_mae)

    def table(self, kind: str = "mae") -> List[List[str]]:
        """Header plus one row per model: name, mean, then E A C N O (four decimals)."""
        header = ["Model", "Mean", *TRAIT_CODES]
        return [header] + [
            [row] + [f"{value:.4f}" for value in self.rows[row].as_row(kind)]
            for row in ROW_ORDER
        ]


def _write_table(path: Path, rows: List[List[str]]) -> None:
    path.write_text("\n".join("\t".join(row) for row in rows) + "\n", encoding="utf-8")


def run_fusion_study(
    out_dir: Union[str, Path],
    config: Optional[RunConfig] = None,
    split: Optional[DatasetSplit] = None,
    table: Optional[EmbeddingTable] = None,
) -> StudyResult:
    """Run the whole comparison, writing corpus, checkpoints and tables under ``out_dir``.

    Args:
        out_dir: Output directory (corpus in ``corpus/``, models in ``models/``).
        config: Run configuration; ``study_config()`` when omitted.
        split: An existing dataset to use instead of generating one.
        table: Embedding table; defaults to the generated corpus's embedding file.
    """
    out = Path(out_dir)
    config = config or study_config()
    if split is None:
        check_study_config(config)
        corpus = out / "corpus"
        split = synth_generate(config.synth, corpus)
        table = table or load_embeddings(corpus / EMBEDDINGS_NAME)
    table = table or EmbeddingTable.hashed(config.text.embedding_dim, config.synth.seed)

    loader = ClipLoader(config.video.feature_dim if config.video.source == "precomputed"
                        else None)
    train_set = loader.load_all(split.train)
    val_set = loader.load_all(split.validation)
    test_set = loader.load_all(split.test)
    seed = config.train.seed
    models_dir = out / "models"
    histories: Dict[str, TrainHistory] = {}

    def fit(model: Module) -> Module:
        logger.info("training %s (%d trainable parameters)", model.kind,
                    model.parameter_count(trainable_only=True))
        model, history = train(model, train_set, val_set, config.train)
        histories[model.kind] = history
        save_checkpoint(models_dir / f"{model.kind}.ckpt", model)
        write_history(models_dir / f"{model.kind}_history.tsv", history)
        return model

    audio = fit(AudioChannel(config.audio, seed=seed))
    text = fit(TextChannel(config.text, table, seed=seed))
    video = fit(VideoChannel(config.video, seed=seed))

    weights = dlf_fit(collect_predictions((audio, text, video), val_set), config.fusion)
    write_weights(models_dir / "dlf_weights.txt", weights)

    fusion_config = fusion_config_for(audio, text, video, config.fusion)
    nnlb = fit(build_fused(audio, text, video, ModelKind.NNLB, fusion_config, seed=seed))
    nnfb = fit(build_fused(audio, text, video, ModelKind.NNFB, fusion_config, seed=seed))

    _, baseline = baseline_train_mean(train_set, test_set)
    rows = {
        "Audio": evaluate(audio, test_set),
        "Text": evaluate(text, test_set),
        "Video": evaluate(video, test_set),
        "DLF": evaluate(DecisionFusion(audio, text, video, weights), test_set),
        "NNLB": evaluate(nnlb, test_set),
        "NNFB": evaluate(nnfb, test_set),
        BASELINE_ROW: baseline,
    }
    result = StudyResult(rows, weights, histories, out)
    _write_table(out / "results_mae.tsv", result.table("mae"))
    _write_table(out / "results_accuracy.tsv", result.table("accuracy"))
    name, best = result.best_single
    logger.info("best single modality %s (MAE %.4f); NNFB improves on it by %.1f%%",
                name, best, 100.0 * result.improvements["NNFB"])
    return result
