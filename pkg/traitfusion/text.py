"""
Text channel: transcript normalisation, word-embedding lookup and a sentence CNN.

Each sentence is embedded word by word, convolved with windows of 3, 4 and
5 words (ReLU, max over time) and the per-width pools are concatenated.
Sentence encodings are averaged into one clip encoding, which goes through
dropout, a 64-d dense layer and a five-way sigmoid head.
"""

import hashlib
import logging
import re
from functools import lru_cache
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .autograd import (
    Parameter,
    Tensor,
    average,
    concat,
    conv1d,
    dropout,
    fully_connected,
    max_over_time,
    relu,
    sigmoid,
    transpose,
)
from .config import TextChannelConfig
from .errors import DimensionError, EmptyTranscriptError, MissingModalityError
from .models import NUM_TRAITS, ClipInputs, Transcript
from .nn import Module

logger = logging.getLogger(__name__)

_SENTENCE_END = re.compile(r"[.!?]+")
_NON_WORD = re.compile(r"[^\w']+|_")
_STRAY_APOSTROPHE = re.compile(r"(?<!\w)'|'(?!\w)")


def normalize_text(raw: str) -> Transcript:
    """Split on ``. ! ?``, lowercase, and keep only word characters.

    Apostrophes survive only inside a word (``don't``); empty sentences are
    dropped.
    """
    sentences: List[List[str]] = []
    for chunk in _SENTENCE_END.split(raw or ""):
        cleaned = _NON_WORD.sub(" ", chunk.lower())
        cleaned = _STRAY_APOSTROPHE.sub(" ", cleaned)
        tokens = cleaned.split()
        if tokens:
            sentences.append(tokens)
    if not sentences:
        raise EmptyTranscriptError(f"transcript has no words: {raw!r}")
    return Transcript(sentences)


# ============================================================================
# EMBEDDINGS
# ============================================================================


@lru_cache(maxsize=65536)
def _hashed_vector(token: str, dim: int, seed: int) -> np.ndarray:
    digest = hashlib.blake2b(f"{seed}:{token}".encode("utf-8"), digest_size=8).digest()
    vector = np.random.default_rng(int.from_bytes(digest, "little")).uniform(-0.25, 0.25, dim)
    vector.setflags(write=False)
    return vector


class EmbeddingTable:
    """Read-only token-to-vector map.

    A table built with ``EmbeddingTable.hashed`` has no stored vocabulary:
    every token maps to a deterministic pseudo-random vector derived from a
    hash of the token, so no embedding file is needed.

    Attributes:
        dim: Vector length.
        vocab: Stored vectors (read-only arrays).
        oov_vector: Returned for tokens not in ``vocab`` (zeros by default).
        source: File the table was loaded from, if any.
    """

    def __init__(self, dim: int, vocab: Optional[Mapping[str, Sequence[float]]] = None,
                 oov_vector: Optional[np.ndarray] = None, hash_seed: Optional[int] = None,
                 source: Optional[str] = None):
        self.dim = dim
        self.source = source
        self.vocab: Dict[str, np.ndarray] = {}
        for token, values in (vocab or {}).items():
            vector = np.array(values, dtype=np.float64)
            if vector.shape != (dim,):
                raise DimensionError(
                    f"embedding for {token!r} has length {vector.size}, table dim is {dim}"
                )
            vector.setflags(write=False)
            self.vocab[token] = vector
        oov = np.zeros(dim) if oov_vector is None else np.array(oov_vector, dtype=np.float64)
        if oov.shape != (dim,):
            raise DimensionError(f"oov vector has length {oov.size}, table dim is {dim}")
        oov.setflags(write=False)
        self.oov_vector = oov
        self.hash_seed = hash_seed

    @classmethod
    def hashed(cls, dim: int, seed: int = 0) -> "EmbeddingTable":
        return cls(dim, hash_seed=seed)

    @property
    def is_hashed(self) -> bool:
        return self.hash_seed is not None

    def lookup(self, token: str) -> np.ndarray:
        vector = self.vocab.get(token)
        if vector is not None:
            return vector
        if self.hash_seed is not None:
            return _hashed_vector(token, self.dim, self.hash_seed)
        return self.oov_vector

    def __deepcopy__(self, memo: dict) -> "EmbeddingTable":
        # read-only, so copies of a channel share one table
        return self

    def __contains__(self, token: str) -> bool:
        return token in self.vocab

    def __len__(self) -> int:
        return len(self.vocab)

    def describe(self) -> str:
        if self.is_hashed:
            return f"hashed:{self.hash_seed}"
        if self.source:
            return f"file:{self.source}"
        return f"table:{len(self.vocab)}x{self.dim}"


def embed_sentence(tokens: Sequence[str], table: EmbeddingTable) -> Tensor:
    """``[n x dim]`` matrix, one row per token in sentence order."""
    if not tokens:
        raise EmptyTranscriptError("cannot embed an empty sentence")
    return Tensor(np.stack([table.lookup(token) for token in tokens]))


# ============================================================================
# NETWORK
# ============================================================================


def sentence_forward(
    matrix: Tensor,
    params: Mapping[str, Parameter],
    config: TextChannelConfig,
    training: bool = False,
) -> Tensor:
    """Encode one embedded sentence as ``[filters_per_width * len(window_widths)]``.

    Sentences shorter than the widest window are zero-padded at the end. The
    embedding matrix is treated as a constant.
    """
    if matrix.ndim != 2 or matrix.shape[1] != config.embedding_dim:
        raise DimensionError(
            f"sentence matrix must be [n x {config.embedding_dim}], got {matrix.shape}"
        )
    rows = matrix.data
    if rows.shape[0] < config.max_width:
        rows = np.vstack([rows, np.zeros((config.max_width - rows.shape[0], rows.shape[1]))])
        matrix = Tensor(rows)
    columns = transpose(matrix)
    pools = [
        max_over_time(relu(conv1d(columns, params[f"text.conv{width}.kernels"],
                                  params[f"text.conv{width}.bias"])))
        for width in config.window_widths
    ]
    return concat(pools)


def encode_clip(
    transcript: Transcript,
    table: EmbeddingTable,
    params: Mapping[str, Parameter],
    config: TextChannelConfig,
    training: bool = False,
) -> Tensor:
    """Mean of the sentence encodings, before dropout."""
    if table.dim != config.embedding_dim:
        raise DimensionError(
            f"embedding table dim {table.dim} does not match text.embedding_dim "
            f"{config.embedding_dim}"
        )
    return average([
        sentence_forward(embed_sentence(sentence, table), params, config, training)
        for sentence in transcript.sentences
    ])


def text_penultimate(
    transcript: Transcript,
    table: EmbeddingTable,
    params: Mapping[str, Parameter],
    config: TextChannelConfig,
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> Tensor:
    encoding = encode_clip(transcript, table, params, config, training)
    encoding = dropout(encoding, config.dropout_p, training, rng)
    return relu(fully_connected(encoding, params["text.fc1.weights"], params["text.fc1.bias"]))


def text_forward(
    transcript: Transcript,
    table: EmbeddingTable,
    params: Mapping[str, Parameter],
    config: TextChannelConfig,
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[Tensor, Tensor]:
    """Returns ``(penultimate [penultimate_dim], traits [5])``."""
    penultimate = text_penultimate(transcript, table, params, config, training, rng)
    traits = sigmoid(fully_connected(penultimate, params["text.head.weights"],
                                     params["text.head.bias"]))
    return penultimate, traits


class TextChannel(Module):
    """Trainable text channel over a fixed embedding table.

    Parameters: ``text.conv<w>.{kernels,bias}`` per window width,
    ``text.fc1.{weights,bias}`` and ``text.head.{weights,bias}``.
    """

    kind = "text"
    head_names = ("text.head.weights", "text.head.bias")

    def __init__(self, config: Optional[TextChannelConfig] = None,
                 table: Optional[EmbeddingTable] = None, seed: int = 0):
        super().__init__("text")
        self.config = config or TextChannelConfig()
        self.table = table or EmbeddingTable.hashed(self.config.embedding_dim)
        if self.table.dim != self.config.embedding_dim:
            raise DimensionError(
                f"embedding table dim {self.table.dim} does not match text.embedding_dim "
                f"{self.config.embedding_dim}"
            )
        rng = np.random.default_rng(seed)
        for width in self.config.window_widths:
            self.conv(f"conv{width}",
                      (self.config.filters_per_width, self.config.embedding_dim, width), rng)
        self.dense("fc1", self.config.encoding_dim, self.config.penultimate_dim, rng)
        self.dense("head", self.config.penultimate_dim, NUM_TRAITS, rng)

    @property
    def penultimate_dim(self) -> int:
        return self.config.penultimate_dim

    def _transcript(self, inputs: ClipInputs) -> Transcript:
        if inputs.transcript is None:
            raise MissingModalityError(f"clip {inputs.clip_id} has no transcript")
        return inputs.transcript

    def forward(self, inputs: ClipInputs, training: bool = False,
                rng: Optional[np.random.Generator] = None) -> Tuple[Tensor, Tensor]:
        return text_forward(self._transcript(inputs), self.table, self.named_parameters(),
                            self.config, training, rng)

    def encode(self, inputs: ClipInputs, training: bool = False,
               rng: Optional[np.random.Generator] = None) -> Tensor:
        return text_penultimate(self._transcript(inputs), self.table, self.named_parameters(),
                                self.config, training, rng)
