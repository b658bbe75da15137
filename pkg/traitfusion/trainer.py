"""
Training and evaluation.

Models are anything with ``forward(inputs, training, rng) -> (features, traits)``
plus the ``Module`` parameter API. Training minimises the five-trait mean
squared error with Adam on shuffled mini-batches, checks the validation MSE
after every epoch and stops after ``early_stop_patience`` epochs without
improvement, restoring the best epoch's parameters.
"""

import logging
from typing import List, Optional, Protocol, Sequence, Tuple, Union

import numpy as np

from .autograd import Tensor, mean_of, mse_over_traits
from .config import TrainConfig
from .errors import DataError, EmptyDatasetError, NumericError
from .fusion import modality_predictions
from .media import ClipLoader
from .models import (
    MODALITY_ORDER,
    ClipInputs,
    ClipRecord,
    DatasetSplit,
    EpochRecord,
    Metrics,
    PredictionSet,
    TrainHistory,
)
from .nn import Module
from .optim import Adam

logger = logging.getLogger(__name__)

STOP_EARLY = "early_stop"
STOP_MAX_EPOCHS = "max_epochs"


class TraitModel(Protocol):
    kind: str

    def forward(self, inputs: ClipInputs, training: bool = False,
                rng: Optional[np.random.Generator] = None) -> Tuple[Tensor, Tensor]:
        ...


def _require_labels(clips: Sequence[ClipInputs]) -> None:
    for clip in clips:
        if clip.labels is None:
            raise DataError(f"clip {clip.clip_id} has no labels")


def clip_loss(model: TraitModel, inputs: ClipInputs, training: bool = False,
              rng: Optional[np.random.Generator] = None) -> Tensor:
    return mse_over_traits(model.forward(inputs, training, rng)[1], inputs.labels)


def batch_loss(model: TraitModel, batch: Sequence[ClipInputs], training: bool = False,
               rng: Optional[np.random.Generator] = None) -> Tensor:
    """Mean of the per-clip losses; the training objective for one mini-batch."""
    return mean_of([clip_loss(model, clip, training, rng) for clip in batch])


def _step(model: Module, optimizer: Adam, batch: Sequence[ClipInputs],
          rng: np.random.Generator) -> float:
    optimizer.zero_grad()
    loss = batch_loss(model, batch, training=True, rng=rng)
    value = loss.item()
    if not np.isfinite(value):
        raise NumericError(f"training loss is {value}", [clip.clip_id for clip in batch])
    loss.backward()
    optimizer.step()
    return value


def _optimizer(model: Module, config: TrainConfig) -> Adam:
    return Adam(model.trainable_parameters(), lr=config.lr, beta1=config.beta1,
                beta2=config.beta2, epsilon=config.epsilon)


def train(
    model: Module,
    train_set: Sequence[ClipInputs],
    val_set: Sequence[ClipInputs],
    config: Optional[TrainConfig] = None,
) -> Tuple[Module, TrainHistory]:
    """Train in place and return the model (best validation epoch restored) and its history.

    Raises:
        EmptyDatasetError: If either set is empty.
        NumericError: If a batch loss is not finite; names the batch's clip ids.
    """
    config = config or TrainConfig()
    if not train_set or not val_set:
        raise EmptyDatasetError(
            f"training needs non-empty train and validation sets "
            f"(got {len(train_set)} and {len(val_set)})"
        )
    _require_labels(train_set)
    _require_labels(val_set)

    rng = np.random.default_rng(config.seed)
    optimizer = _optimizer(model, config)
    history = TrainHistory()
    best_val = np.inf
    best_params = model.snapshot()
    bad_epochs = 0
    n = len(train_set)

    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(n) if config.shuffle else np.arange(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            batch = [train_set[i] for i in order[start:start + config.batch_size]]
            total += _step(model, optimizer, batch, rng) * len(batch)
            history.steps += 1
        train_mse = total / n
        val_mse = evaluate(model, val_set).mse

        if val_mse < best_val:
            best_val, best_params, bad_epochs = val_mse, model.snapshot(), 0
            history.best_epoch = epoch
        else:
            bad_epochs += 1
        history.epochs.append(EpochRecord(epoch, train_mse, val_mse))
        logger.info("%s epoch %d: train MSE %.6f, val MSE %.6f%s", model.kind, epoch,
                    train_mse, val_mse, " (best)" if history.best_epoch == epoch else "")
        if bad_epochs >= config.early_stop_patience:
            history.stop_reason = STOP_EARLY
            logger.info("%s: no improvement for %d epochs, stopping", model.kind, bad_epochs)
            break
    else:
        history.stop_reason = STOP_MAX_EPOCHS

    for record in history.epochs:
        record.best = record.epoch == history.best_epoch
    model.restore(best_params)
    return model, history


def train_steps(
    model: Module,
    clips: Sequence[ClipInputs],
    steps: int,
    config: Optional[TrainConfig] = None,
) -> List[float]:
    """Run a fixed number of Adam steps over ``clips`` (no validation, no early stop).

    Returns the loss of every step.
    """
    config = config or TrainConfig()
    if not clips:
        raise EmptyDatasetError("no clips to train on")
    _require_labels(clips)
    rng = np.random.default_rng(config.seed)
    optimizer = _optimizer(model, config)
    losses: List[float] = []
    order: np.ndarray = np.arange(0)
    cursor = 0
    while len(losses) < steps:
        if cursor >= order.size:
            order = rng.permutation(len(clips)) if config.shuffle else np.arange(len(clips))
            cursor = 0
        batch = [clips[i] for i in order[cursor:cursor + config.batch_size]]
        cursor += config.batch_size
        losses.append(_step(model, optimizer, batch, rng))
    return losses


def train_split(
    model: Module,
    split: DatasetSplit,
    config: Optional[TrainConfig] = None,
    loader: Optional[ClipLoader] = None,
) -> Tuple[Module, TrainHistory]:
    """``train`` on the train and validation partitions of a parsed manifest."""
    loader = loader or ClipLoader()
    if not split.train or not split.validation:
        raise EmptyDatasetError(
            f"training needs non-empty train and validation splits "
            f"(got {len(split.train)} and {len(split.validation)})"
        )
    return train(model, loader.load_all(split.train), loader.load_all(split.validation),
                 config)


# ============================================================================
# EVALUATION
# ============================================================================


def predict_traits(model: TraitModel, clips: Sequence[ClipInputs]) -> np.ndarray:
    """Evaluation-mode ``[n x 5]`` predictions."""
    return np.stack([model.forward(clip, False)[1].data for clip in clips])


def evaluate(model: TraitModel, clips: Sequence[ClipInputs]) -> Metrics:
    """MAE, accuracy and MSE in evaluation mode; the model is not modified."""
    if not clips:
        raise EmptyDatasetError("cannot evaluate on an empty record list")
    _require_labels(clips)
    labels = np.stack([clip.labels for clip in clips])
    return Metrics.from_predictions(predict_traits(model, clips), labels)


def collect_predictions(channels: Sequence[TraitModel],
                        clips: Sequence[ClipInputs]) -> PredictionSet:
    """Per-modality predictions (audio, text, video) for decision-level fusion."""
    if len(channels) != len(MODALITY_ORDER):
        raise ValueError(f"need {len(MODALITY_ORDER)} channels, got {len(channels)}")
    if not clips:
        raise EmptyDatasetError("cannot collect predictions for zero clips")
    _require_labels(clips)
    predictions = np.stack([modality_predictions(channels, clip) for clip in clips])
    return PredictionSet([clip.clip_id for clip in clips], predictions,
                         np.stack([clip.labels for clip in clips]))


def _label_matrix(items: Sequence[Union[ClipRecord, ClipInputs]]) -> np.ndarray:
    return np.stack([
        item.label_array if isinstance(item, ClipRecord) else np.asarray(item.labels)
        for item in items
    ])


def baseline_train_mean(
    train_items: Sequence[Union[ClipRecord, ClipInputs]],
    test_items: Optional[Sequence[Union[ClipRecord, ClipInputs]]] = None,
) -> Tuple[np.ndarray, Optional[Metrics]]:
    """Constant predictor at the per-trait mean of the training labels.

    Returns the ``[5]`` prediction and, when test items are given, its metrics on them.
    """
    if not train_items:
        raise EmptyDatasetError("baseline needs a non-empty training set")
    prediction = _label_matrix(train_items).mean(axis=0)
    if not test_items:
        return prediction, None
    labels = _label_matrix(test_items)
    return prediction, Metrics.from_predictions(np.tile(prediction, (len(labels), 1)), labels)
