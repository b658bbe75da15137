"""Model checkpoints and training-history files.

Checkpoint layout::

    traitfusion-checkpoint v1
    {"kind": ..., "configs": {...}, ...}          (one JSON line)
    <name>\\t<shape>\\t<frozen>                      (one text line per parameter,
    <raw little-endian float64 values>             followed by its bytes)

The JSON line carries everything needed to rebuild the model before the
parameter values are restored, so a checkpoint is self-describing.
"""

import json
import logging
from pathlib import Path
from typing import Any, BinaryIO, Dict, Optional, Union

import numpy as np

from .audio import AudioChannel
from .config import (
    AudioChannelConfig,
    FusionConfig,
    TextChannelConfig,
    VideoChannelConfig,
    config_from_dict,
    config_to_dict,
)
from .errors import DataError, DataIOError, UnsupportedFormatError
from .fusion import FusedNetwork
from .media import load_embeddings
from .models import ModelKind, TrainHistory
from .nn import Module
from .text import EmbeddingTable, TextChannel
from .video import VideoChannel

logger = logging.getLogger(__name__)

MAGIC = "traitfusion-checkpoint"
FORMAT_VERSION = 1
HISTORY_HEADER = ("epoch", "train_mse", "val_mse", "best")

PathLike = Union[str, Path]


def _embedding_source(table: EmbeddingTable) -> str:
    return table.describe()


def resolve_embeddings(source: str, dim: int) -> EmbeddingTable:
    """Rebuild a table from ``EmbeddingTable.describe()`` output."""
    kind, _, value = source.partition(":")
    if kind == "hashed":
        return EmbeddingTable.hashed(dim, int(value))
    if kind == "file":
        return load_embeddings(value)
    raise DataError(
        f"checkpoint uses an in-memory embedding table ({source}); pass the table explicitly"
    )


def describe_model(model: Module) -> Dict[str, Any]:
    """The JSON header for ``model``."""
    if isinstance(model, FusedNetwork):
        return {
            "kind": model.kind,
            "configs": {
                "audio": config_to_dict(model.audio.config),
                "text": config_to_dict(model.text.config),
                "video": config_to_dict(model.video.config),
                "fusion": config_to_dict(model.config),
            },
            "embeddings": _embedding_source(model.text.table),
        }
    header: Dict[str, Any] = {"kind": model.kind,
                              "configs": {model.kind: config_to_dict(model.config)}}
    if isinstance(model, TextChannel):
        header["embeddings"] = _embedding_source(model.table)
    return header


def save_checkpoint(path: PathLike, model: Module,
                    extra: Optional[Dict[str, Any]] = None) -> Path:
    """Write ``model``'s parameters (values and frozen flags) to ``path``."""
    path = Path(path)
    header = describe_model(model)
    params = model.named_parameters()
    header["parameters"] = len(params)
    if extra:
        header["extra"] = extra
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("wb") as handle:
            handle.write(f"{MAGIC} v{FORMAT_VERSION}\n".encode("ascii"))
            handle.write((json.dumps(header, sort_keys=True) + "\n").encode("utf-8"))
            for name, param in params.items():
                shape = "x".join(str(d) for d in param.shape) or "scalar"
                handle.write(f"{name}\t{shape}\t{int(param.frozen)}\n".encode("utf-8"))
                handle.write(param.data.astype("<f8").tobytes())
    except OSError as e:
        raise DataIOError(f"cannot write checkpoint {path}: {e}") from e
    logger.info("saved %s checkpoint (%d parameters) to %s", model.kind, len(params), path)
    return path


def _read_line(handle: BinaryIO, path: Path) -> str:
    line = handle.readline()
    if not line.endswith(b"\n"):
        raise DataIOError(f"{path}: checkpoint is truncated")
    return line.decode("utf-8").rstrip("\n")


def read_checkpoint(path: PathLike) -> Dict[str, Any]:
    """Header plus ``values`` and ``frozen`` dicts keyed by parameter name."""
    path = Path(path)
    try:
        handle = path.open("rb")
    except OSError as e:
        raise DataIOError(f"cannot read checkpoint {path}: {e}") from e
    with handle:
        magic = _read_line(handle, path)
        if magic != f"{MAGIC} v{FORMAT_VERSION}":
            raise UnsupportedFormatError(f"{path}: not a v{FORMAT_VERSION} checkpoint ({magic!r})")
        try:
            header = json.loads(_read_line(handle, path))
        except json.JSONDecodeError as e:
            raise DataIOError(f"{path}: damaged checkpoint header ({e})") from e
        values: Dict[str, np.ndarray] = {}
        frozen: Dict[str, bool] = {}
        for _ in range(header.get("parameters", 0)):
            name, shape_text, flag = _read_line(handle, path).split("\t")
            shape = () if shape_text == "scalar" else tuple(int(d) for d in shape_text.split("x"))
            count = int(np.prod(shape)) if shape else 1
            raw = handle.read(8 * count)
            if len(raw) != 8 * count:
                raise DataIOError(f"{path}: checkpoint is truncated in {name}")
            values[name] = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)
            frozen[name] = flag == "1"
    header["values"] = values
    header["frozen"] = frozen
    return header


def build_model(header: Dict[str, Any], table: Optional[EmbeddingTable] = None) -> Module:
    """Construct an (untrained) model of the kind and configuration a header describes."""
    try:
        kind = ModelKind(header["kind"])
    except (KeyError, ValueError):
        raise DataError(f"checkpoint has unknown model kind {header.get('kind')!r}") from None
    configs = header["configs"]

    def text_channel() -> TextChannel:
        config = config_from_dict(TextChannelConfig, configs["text"])
        source = table or resolve_embeddings(header.get("embeddings", "hashed:0"),
                                             config.embedding_dim)
        return TextChannel(config, source)

    if kind is ModelKind.AUDIO:
        return AudioChannel(config_from_dict(AudioChannelConfig, configs["audio"]))
    if kind is ModelKind.TEXT:
        return text_channel()
    if kind is ModelKind.VIDEO:
        return VideoChannel(config_from_dict(VideoChannelConfig, configs["video"]))
    return FusedNetwork(
        AudioChannel(config_from_dict(AudioChannelConfig, configs["audio"])),
        text_channel(),
        VideoChannel(config_from_dict(VideoChannelConfig, configs["video"])),
        kind,
        config_from_dict(FusionConfig, configs["fusion"]),
    )


def load_checkpoint(path: PathLike, table: Optional[EmbeddingTable] = None) -> Module:
    """Rebuild a model from a checkpoint, restoring values and frozen flags."""
    header = read_checkpoint(path)
    model = build_model(header, table)
    model.restore(header["values"])
    model.apply_frozen_flags(header["frozen"])
    logger.info("loaded %s checkpoint from %s", model.kind, path)
    return model


# ============================================================================
# HISTORY
# ============================================================================


def format_history(history: TrainHistory) -> str:
    lines = ["\t".join(HISTORY_HEADER)]
    for record in history.epochs:
        lines.append(f"{record.epoch}\t{float(record.train_mse)!r}\t{float(record.val_mse)!r}\t"
                     f"{int(record.best)}")
    return "\n".join(lines) + "\n"


def write_history(path: PathLike, history: TrainHistory) -> Path:
    """Tab-separated epochs with a header row."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(format_history(history), encoding="utf-8")
    except OSError as e:
        raise DataIOError(f"cannot write history {path}: {e}") from e
    return path
