"""Media I/O: PCM WAV audio, frame images, feature files and embedding tables.

WAV decoding goes through ``scipy.io.wavfile`` and accepts 16-bit PCM only;
frames are read with Pillow and stored channel-first in blue, red, green
order. All readers are pure functions of file content.
"""

import logging
import struct
import warnings
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np
from PIL import Image, UnidentifiedImageError
from scipy.io import wavfile

from .audio import resample_to_8khz
from .errors import (
    DataIOError,
    DimensionError,
    EmbeddingParseError,
    NoFramesError,
    UnsupportedFormatError,
)
from .models import AudioClip, ClipInputs, ClipRecord, FrameImage
from .text import EmbeddingTable, normalize_text

logger = logging.getLogger(__name__)

PCM16_SCALE = 32768.0
IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp")
FEATURE_SUFFIX = ".txt"

# RGB -> blue, red, green
_RGB_TO_BRG = [2, 0, 1]
_BRG_TO_RGB = [1, 2, 0]

PathLike = Union[str, Path]


# ============================================================================
# AUDIO
# ============================================================================


def read_wav(path: PathLike) -> AudioClip:
    """Decode a 16-bit PCM WAV file into a mono clip in [-1, 1).

    Samples are divided by 32768; multi-channel audio is averaged.
    """
    path = Path(path)
    with warnings.catch_warnings():
        warnings.simplefilter("error", wavfile.WavFileWarning)
        try:
            rate, data = wavfile.read(str(path))
        except wavfile.WavFileWarning as e:
            raise DataIOError(f"{path}: damaged WAV file ({e})") from e
        except (EOFError, struct.error) as e:
            raise DataIOError(f"{path}: truncated WAV file ({e})") from e
        except OSError as e:
            raise DataIOError(f"cannot read {path}: {e}") from e
        except ValueError as e:
            message = str(e).lower()
            if "end of file" in message or "eof" in message or "truncat" in message:
                raise DataIOError(f"{path}: truncated WAV file ({e})") from e
            raise UnsupportedFormatError(f"{path}: unsupported WAV encoding ({e})") from e
    if data.dtype != np.int16:
        raise UnsupportedFormatError(
            f"{path}: only 16-bit PCM WAV is supported, got sample type {data.dtype}"
        )
    samples = data.astype(np.float64) / PCM16_SCALE
    if samples.ndim == 2:
        samples = samples.mean(axis=1)
    if samples.size == 0:
        raise DataIOError(f"{path}: WAV file contains no samples")
    return AudioClip(samples, int(rate))


def write_wav(path: PathLike, clip: AudioClip) -> Path:
    """Encode as mono 16-bit PCM; values are clipped to the representable range."""
    path = Path(path)
    quantized = np.clip(np.round(clip.samples * PCM16_SCALE), -32768, 32767).astype(np.int16)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        wavfile.write(str(path), clip.sample_rate, quantized)
    except OSError as e:
        raise DataIOError(f"cannot write {path}: {e}") from e
    return path


# ============================================================================
# FRAMES AND FEATURES
# ============================================================================


def read_frame(path: PathLike) -> FrameImage:
    path = Path(path)
    try:
        with Image.open(path) as image:
            rgb = np.asarray(image.convert("RGB"), dtype=np.float64) / 255.0
    except UnidentifiedImageError as e:
        raise UnsupportedFormatError(f"{path}: not a readable image") from e
    except OSError as e:
        raise DataIOError(f"cannot read {path}: {e}") from e
    return FrameImage(rgb.transpose(2, 0, 1)[_RGB_TO_BRG])


def write_frame(path: PathLike, frame: FrameImage) -> Path:
    path = Path(path)
    rgb = frame.pixels[_BRG_TO_RGB].transpose(1, 2, 0)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(np.round(rgb * 255.0).astype(np.uint8)).save(path)
    except OSError as e:
        raise DataIOError(f"cannot write {path}: {e}") from e
    return path


def list_frame_files(path: PathLike) -> List[Path]:
    """Image files of a frame directory (sorted by name), or the single image given."""
    path = Path(path)
    if path.is_dir():
        return sorted(p for p in path.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    return [path]


def read_frames(path: PathLike) -> List[FrameImage]:
    files = list_frame_files(path)
    if not files:
        raise NoFramesError(f"{path}: no frame images found")
    return [read_frame(f) for f in files]


def is_feature_file(path: PathLike) -> bool:
    return Path(path).suffix.lower() == FEATURE_SUFFIX


def read_feature_file(path: PathLike, dim: Optional[int] = None) -> Dict[str, List[np.ndarray]]:
    """Parse ``clip_id f1 ... fF`` lines; repeated ids add candidate frames for that clip."""
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise DataIOError(f"cannot read feature file {path}: {e}") from e
    features: Dict[str, List[np.ndarray]] = {}
    for number, line in enumerate(lines, start=1):
        fields = line.split()
        if not fields:
            continue
        try:
            vector = np.array([float(v) for v in fields[1:]])
        except ValueError:
            raise DimensionError(f"{path} line {number}: non-numeric feature value") from None
        if vector.size == 0 or (dim is not None and vector.size != dim):
            raise DimensionError(
                f"{path} line {number}: expected {dim} features, got {vector.size}"
            )
        features.setdefault(fields[0], []).append(vector)
    return features


def write_feature_file(path: PathLike, features: Dict[str, List[np.ndarray]]) -> Path:
    path = Path(path)
    lines = [
        " ".join([clip_id] + [repr(float(v)) for v in vector])
        for clip_id, vectors in features.items()
        for vector in vectors
    ]
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as e:
        raise DataIOError(f"cannot write feature file {path}: {e}") from e
    logger.info("wrote %d feature vectors to %s", len(lines), path)
    return path


# ============================================================================
# EMBEDDINGS
# ============================================================================


def load_embeddings(path: PathLike) -> EmbeddingTable:
    """Read a text embedding table: header ``"<vocab_size> <dim>"`` then one token per line.

    A repeated token keeps its last vector (with a warning).
    """
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise DataIOError(f"cannot read embedding file {path}: {e}") from e
    if not lines:
        raise EmbeddingParseError(1, "missing '<vocab_size> <dim>' header")
    header = lines[0].split()
    try:
        vocab_size, dim = (int(v) for v in header)
    except ValueError:
        raise EmbeddingParseError(1, f"expected '<vocab_size> <dim>', got {lines[0]!r}") from None
    if vocab_size < 0 or dim <= 0:
        raise EmbeddingParseError(1, f"invalid header values {vocab_size} {dim}")

    body = lines[1:]
    if len(body) < vocab_size or any(line.strip() for line in body[vocab_size:]):
        raise EmbeddingParseError(
            len(lines), f"header declares {vocab_size} entries, file has "
            f"{sum(1 for line in body if line.strip())}"
        )
    vocab: Dict[str, np.ndarray] = {}
    for number, line in enumerate(body[:vocab_size], start=2):
        fields = line.split()
        if len(fields) != dim + 1 or not fields[0]:
            raise EmbeddingParseError(
                number, f"expected a token and {dim} values, got {len(fields) - 1} values"
            )
        try:
            vector = np.array([float(v) for v in fields[1:]])
        except ValueError:
            raise EmbeddingParseError(number, "non-numeric embedding value") from None
        if fields[0] in vocab:
            logger.warning("%s line %d: duplicate token %r, keeping the last vector",
                           path, number, fields[0])
        vocab[fields[0]] = vector
    return EmbeddingTable(dim, vocab, source=str(path))


def write_embeddings(path: PathLike, vocab: Dict[str, np.ndarray]) -> Path:
    path = Path(path)
    dim = len(next(iter(vocab.values()))) if vocab else 0
    lines = [f"{len(vocab)} {dim}"] + [
        " ".join([token] + [repr(float(v)) for v in vector]) for token, vector in vocab.items()
    ]
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as e:
        raise DataIOError(f"cannot write embedding file {path}: {e}") from e
    return path


# ============================================================================
# CLIP ASSEMBLY
# ============================================================================


class ClipLoader:
    """Decodes ``ClipRecord``s into ``ClipInputs`` on demand, caching the results.

    Feature files are parsed once and shared by every clip that references them.
    """

    def __init__(self, feature_dim: Optional[int] = None):
        self.feature_dim = feature_dim
        self._clips: Dict[str, ClipInputs] = {}
        self._feature_files: Dict[Path, Dict[str, List[np.ndarray]]] = {}

    def _features(self, record: ClipRecord) -> List[np.ndarray]:
        path = Path(record.visual_path)
        if path not in self._feature_files:
            self._feature_files[path] = read_feature_file(path, self.feature_dim)
        vectors = self._feature_files[path].get(record.clip_id)
        if not vectors:
            raise NoFramesError(f"{path}: no feature vector for clip {record.clip_id}")
        return vectors

    def load(self, record: ClipRecord) -> ClipInputs:
        if record.clip_id in self._clips:
            return self._clips[record.clip_id]
        inputs = ClipInputs(
            clip_id=record.clip_id,
            labels=record.label_array,
            audio=resample_to_8khz(read_wav(record.audio_path)),
            transcript=normalize_text(record.transcript),
        )
        if is_feature_file(record.visual_path):
            inputs.features = self._features(record)
        else:
            inputs.frames = read_frames(record.visual_path)
        self._clips[record.clip_id] = inputs
        return inputs

    def load_all(self, records: List[ClipRecord]) -> List[ClipInputs]:
        return [self.load(record) for record in records]


def load_clip_inputs(record: ClipRecord, feature_dim: Optional[int] = None) -> ClipInputs:
    return ClipLoader(feature_dim).load(record)
