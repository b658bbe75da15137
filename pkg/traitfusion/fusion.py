"""
Fusion of the three channels.

Decision-level fusion (DLF) combines per-modality trait predictions with
per-trait affine weights fitted by least absolute deviations on the
development set. The two network fusions concatenate the channels'
penultimate features (audio 64 + text 64 + video 512 = 640) and add two
dense layers: NNLB freezes every channel parameter, NNFB also trains the
audio and text channels (and the video dense layer above the backbone).
"""

import copy
import dataclasses
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import linprog

from .audio import AudioChannel
from .autograd import Tensor, concat, fully_connected, relu, sigmoid
from .config import FusionConfig
from .errors import DataError, DataIOError, DimensionError, EmptyDatasetError, InvalidWeightsError
from .models import (
    MODALITY_ORDER,
    NUM_TRAITS,
    TRAIT_CODES,
    TRAIT_ORDER,
    ClipInputs,
    FusionWeights,
    ModelKind,
    PredictionSet,
)
from .nn import Module
from .text import TextChannel
from .video import VideoChannel

logger = logging.getLogger(__name__)

NUM_MODALITIES = len(MODALITY_ORDER)

# ============================================================================
# DECISION-LEVEL FUSION
# ============================================================================


def dlf_predict(weights: FusionWeights, preds: np.ndarray) -> np.ndarray:
    """Fuse ``[5 x 3]`` per-modality predictions (or a ``[n x 5 x 3]`` stack) into ``[5]``.

    Per trait ``sum_j w[i, j] * p[i, j]``, clamped to [0, 1].
    """
    if not isinstance(weights, FusionWeights):
        weights = FusionWeights(weights)
    preds = np.asarray(preds, dtype=np.float64)
    if preds.shape[-2:] != (NUM_TRAITS, NUM_MODALITIES):
        raise DimensionError(
            f"per-modality predictions must end in [{NUM_TRAITS} x {NUM_MODALITIES}], "
            f"got {preds.shape}"
        )
    return np.clip(np.sum(preds * weights.w, axis=-1), 0.0, 1.0)


def lad_objective(w: np.ndarray, preds: np.ndarray, targets: np.ndarray) -> float:
    """Mean absolute deviation of ``preds @ w`` from ``targets`` (no clamping)."""
    return float(np.mean(np.abs(preds @ w - targets)))


def project_to_simplex_plane(w: np.ndarray) -> np.ndarray:
    """Euclidean projection onto ``sum(w) == 1`` (entries may go negative)."""
    return w - (w.sum() - 1.0) / w.size


@dataclass
class TraitFit:
    weights: np.ndarray
    objective: float
    subgradient_weights: np.ndarray
    subgradient_objective: float
    degenerate: bool = False
    polished: bool = False


def fit_trait_weights(
    preds: np.ndarray,
    targets: np.ndarray,
    iterations: int = 10_000,
    step: float = 0.1,
    polish: bool = True,
) -> TraitFit:
    """Constrained LAD for one trait: ``min mean|P w - y|`` s.t. ``sum(w) == 1``.

    Projected subgradient descent (step ``step / sqrt(t)``, from the uniform
    point, best iterate kept), optionally followed by the exact linear
    program; the lower objective wins.

    Args:
        preds: ``[n x 3]`` per-modality predictions.
        targets: ``[n]`` ground truth.
    """
    n = preds.shape[0]
    uniform = np.full(NUM_MODALITIES, 1.0 / NUM_MODALITIES)
    if np.all(preds == preds[:, :1]):
        objective = lad_objective(uniform, preds, targets)
        return TraitFit(uniform, objective, uniform.copy(), objective, degenerate=True)

    w = uniform.copy()
    best_w, best_obj = w.copy(), lad_objective(w, preds, targets)
    for t in range(1, iterations + 1):
        residual = preds @ w - targets
        g = preds.T @ np.sign(residual) / n
        w = project_to_simplex_plane(w - (step / np.sqrt(t)) * g)
        obj = lad_objective(w, preds, targets)
        if obj < best_obj:
            best_w, best_obj = w.copy(), obj

    fit = TraitFit(best_w, best_obj, best_w.copy(), best_obj)
    if polish:
        exact = _solve_lad_program(preds, targets)
        if exact is not None:
            exact_obj = lad_objective(exact, preds, targets)
            if exact_obj < fit.objective:
                fit.weights, fit.objective, fit.polished = exact, exact_obj, True
    return fit


def _solve_lad_program(preds: np.ndarray, targets: np.ndarray) -> Optional[np.ndarray]:
    # Variables [w (3, free), e (n, >= 0)]: min mean(e) s.t. |P w - y| <= e, sum(w) = 1.
    n = preds.shape[0]
    identity = np.identity(n)
    c = np.concatenate([np.zeros(NUM_MODALITIES), np.full(n, 1.0 / n)])
    a_ub = np.concatenate([
        np.concatenate([preds, -identity], axis=1),
        np.concatenate([-preds, -identity], axis=1),
    ])
    b_ub = np.concatenate([targets, -targets])
    a_eq = np.concatenate([np.ones(NUM_MODALITIES), np.zeros(n)])[None, :]
    bounds = [(None, None)] * NUM_MODALITIES + [(0, None)] * n
    result = linprog(c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=[1.0], bounds=bounds,
                     method="highs")
    if not result.success:
        logger.warning("LAD linear program did not converge: %s", result.message)
        return None
    return project_to_simplex_plane(result.x[:NUM_MODALITIES])


@dataclass
class DLFReport:
    """Fitted weights with the per-trait development-set objectives."""
    weights: FusionWeights
    fits: List[TraitFit]

    @property
    def objectives(self) -> List[float]:
        return [fit.objective for fit in self.fits]


def dlf_fit_report(
    devset: PredictionSet,
    config: Optional[FusionConfig] = None,
) -> DLFReport:
    config = config or FusionConfig()
    if len(devset) == 0:
        raise EmptyDatasetError("cannot fit fusion weights on an empty development set")
    fits = []
    for trait in TRAIT_ORDER:
        fit = fit_trait_weights(
            devset.predictions[:, trait.index, :], devset.labels[:, trait.index],
            iterations=config.dlf_iterations, step=config.dlf_step, polish=config.dlf_polish,
        )
        if fit.degenerate:
            logger.warning(
                "trait %s: all modalities predict identically; using uniform weights",
                trait.value,
            )
        fits.append(fit)
    weights = FusionWeights(np.stack([fit.weights for fit in fits]),
                            degenerate=tuple(fit.degenerate for fit in fits))
    logger.info("fitted fusion weights on %d clips, mean dev MAE %.4f",
                len(devset), float(np.mean([f.objective for f in fits])))
    return DLFReport(weights, fits)


def dlf_fit(devset: PredictionSet, config: Optional[FusionConfig] = None) -> FusionWeights:
    """Per-trait affine weights minimising development-set MAE, rows summing to one."""
    return dlf_fit_report(devset, config).weights


def modality_predictions(channels: Sequence[Module], inputs: ClipInputs) -> np.ndarray:
    """``[5 x 3]`` evaluation-mode predictions of (audio, text, video), one column each."""
    return np.stack([channel.forward(inputs, False)[1].data for channel in channels], axis=1)


class DecisionFusion:
    """Trained channels combined by fitted ``FusionWeights``; evaluation only."""

    kind = "dlf"

    def __init__(self, audio: AudioChannel, text: TextChannel, video: VideoChannel,
                 weights: FusionWeights):
        self.channels = (audio, text, video)
        self.weights = weights

    def modality_predictions(self, inputs: ClipInputs) -> np.ndarray:
        return modality_predictions(self.channels, inputs)

    def forward(self, inputs: ClipInputs, training: bool = False,
                rng: Optional[np.random.Generator] = None) -> Tuple[Tensor, Tensor]:
        preds = self.modality_predictions(inputs)
        return Tensor(preds), Tensor(dlf_predict(self.weights, preds))


def grid_search_weights(
    preds: np.ndarray, targets: np.ndarray, low: float = -0.5, high: float = 1.5,
    step: float = 0.01,
) -> Tuple[np.ndarray, float]:
    """Brute-force oracle over ``w1, w2`` in ``[low, high]`` with ``w3 = 1 - w1 - w2``."""
    grid = np.linspace(low, high, int(round((high - low) / step)) + 1)
    best_w, best_obj = None, np.inf
    for w1 in grid:
        w3 = 1.0 - w1 - grid
        fused = (w1 * preds[:, 0])[None, :] + grid[:, None] * preds[:, 1][None, :] \
            + w3[:, None] * preds[:, 2][None, :]
        objectives = np.abs(fused - targets[None, :]).mean(axis=1)
        k = int(np.argmin(objectives))
        if objectives[k] < best_obj:
            best_obj = float(objectives[k])
            best_w = np.array([w1, grid[k], w3[k]])
    return best_w, best_obj


def write_weights(path: Union[str, Path], weights: FusionWeights) -> Path:
    """Five lines ``"<trait> <w_audio> <w_text> <w_video>"`` in trait order E A C N O."""
    path = Path(path)
    lines = [
        " ".join([trait.value] + [repr(float(v)) for v in weights.w[trait.index]])
        for trait in TRAIT_ORDER
    ]
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as e:
        raise DataIOError(f"cannot write fusion weights to {path}: {e}") from e
    logger.info("wrote fusion weights to %s", path)
    return path


def read_weights(path: Union[str, Path]) -> FusionWeights:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise DataIOError(f"cannot read fusion weights {path}: {e}") from e
    lines = [line for line in text.splitlines() if line.strip()]
    if len(lines) != NUM_TRAITS:
        raise InvalidWeightsError(
            f"{path}: expected {NUM_TRAITS} weight lines, found {len(lines)}"
        )
    rows = []
    for number, (line, code) in enumerate(zip(lines, TRAIT_CODES), start=1):
        fields = line.split()
        if len(fields) != NUM_MODALITIES + 1 or fields[0] != code:
            raise InvalidWeightsError(
                f"{path} line {number}: expected '{code} w_audio w_text w_video', got {line!r}"
            )
        try:
            rows.append([float(v) for v in fields[1:]])
        except ValueError:
            raise InvalidWeightsError(f"{path} line {number}: non-numeric weight") from None
    return FusionWeights(np.array(rows))


# ============================================================================
# NETWORK FUSION
# ============================================================================


class FusedNetwork(Module):
    """Channels truncated at their penultimate layers, concatenated, plus two dense layers.

    Parameters added here: ``fusion.fc1.{weights,bias}`` (concat -> hidden) and
    ``fusion.head.{weights,bias}`` (hidden -> 5). Channel parameters keep their
    own names.
    """

    def __init__(self, audio: AudioChannel, text: TextChannel, video: VideoChannel,
                 mode: ModelKind, config: Optional[FusionConfig] = None, seed: int = 0):
        super().__init__("fusion")
        if not mode.is_fusion:
            raise DataError(f"fusion mode must be nnlb or nnfb, got {mode.value}")
        self.config = config or FusionConfig()
        self.mode = mode
        self.kind = mode.value
        actual = (audio.penultimate_dim, text.penultimate_dim, video.penultimate_dim)
        if actual != self.config.penultimate_dims:
            raise DimensionError(
                f"channel penultimate dims {actual} do not match fusion.penultimate_dims "
                f"{self.config.penultimate_dims}"
            )
        self.audio = self.add_child(audio)
        self.text = self.add_child(text)
        self.video = self.add_child(video)
        rng = np.random.default_rng(seed)
        self.dense("fc1", self.config.concat_dim, self.config.hidden_dim, rng)
        self.dense("head", self.config.hidden_dim, NUM_TRAITS, rng)
        self.apply_mode()

    @property
    def channels(self) -> Tuple[AudioChannel, TextChannel, VideoChannel]:
        return self.audio, self.text, self.video

    def channel_names(self) -> List[str]:
        return [name for channel in self.channels for name in channel.named_parameters()]

    def apply_mode(self) -> None:
        """Set freezing flags: NNLB freezes every channel; NNFB frees audio, text and video.fc1.

        Truncated channel heads and the video backbone are frozen in both modes.
        """
        self.set_frozen(self.mode is ModelKind.NNLB, self.channel_names())
        for channel in self.channels:
            self.set_frozen(True, channel.head_names)
        self.set_frozen(True, self.video.backbone_names)

    def penultimates(self, inputs: ClipInputs, training: bool = False,
                     rng: Optional[np.random.Generator] = None) -> Tensor:
        return concat([channel.encode(inputs, training, rng) for channel in self.channels])

    def forward(self, inputs: ClipInputs, training: bool = False,
                rng: Optional[np.random.Generator] = None) -> Tuple[Tensor, Tensor]:
        """Returns ``(hidden [hidden_dim], traits [5])``."""
        params = self.named_parameters()
        joint = self.penultimates(inputs, training, rng)
        hidden = relu(fully_connected(joint, params["fusion.fc1.weights"],
                                      params["fusion.fc1.bias"]))
        traits = sigmoid(fully_connected(hidden, params["fusion.head.weights"],
                                         params["fusion.head.bias"]))
        return hidden, traits


def build_fused(
    audio: AudioChannel,
    text: TextChannel,
    video: VideoChannel,
    mode: ModelKind,
    config: Optional[FusionConfig] = None,
    seed: int = 0,
) -> FusedNetwork:
    """Wrap copies of trained channels in a fresh fusion head.

    The given channels are not modified.
    """
    return FusedNetwork(copy.deepcopy(audio), copy.deepcopy(text), copy.deepcopy(video),
                        mode, config, seed)


def fused_forward(net: FusedNetwork, inputs: ClipInputs, training: bool = False,
                  rng: Optional[np.random.Generator] = None) -> Tensor:
    return net.forward(inputs, training, rng)[1]


def fusion_config_for(audio: AudioChannel, text: TextChannel, video: VideoChannel,
                      config: Optional[FusionConfig] = None) -> FusionConfig:
    """``config`` with ``penultimate_dims`` taken from the given channels."""
    config = config or FusionConfig()
    dims = (audio.penultimate_dim, text.penultimate_dim, video.penultimate_dim)
    if dims != config.penultimate_dims:
        logger.info("fusion.penultimate_dims %s replaced by channel widths %s",
                    config.penultimate_dims, dims)
    return dataclasses.replace(config, penultimate_dims=dims)
