"""
Synthetic corpus with planted, complementary trait signals.

Every clip gets uniform labels in [0.1, 0.9] and three modalities that each
encode some traits strongly and one more trait weakly:

- audio: sinusoid amplitude ``0.1 + 0.8 * E``; noise level from N; the
  sinusoid's frequency leaks O.
- text: rate of a positive lexicon from A; sentence count ``1 + round(4 * C)``
  and the rate of an "order" lexicon from C; an energetic lexicon leaks E.
- video: red-channel mean ``0.1 + 0.8 * O``; the green channel leaks N.

No single modality sees all five traits, so fusion has something to gain.
The exact encodings are written to ``synth_meta.json`` next to the manifest.
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np

from .config import SynthConfig
from .errors import DataIOError, ParameterError
from .media import write_embeddings, write_frame, write_wav
from .models import NUM_TRAITS, AudioClip, ClipInputs, ClipRecord, DatasetSplit, FrameImage, Trait
from .parser import write_manifest
from .text import EmbeddingTable, normalize_text

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.tsv"
EMBEDDINGS_NAME = "embeddings.txt"
META_NAME = "synth_meta.json"

LABEL_LOW, LABEL_HIGH = 0.1, 0.9

POSITIVE_LEXICON = ("kind", "warm", "friendly", "gentle", "caring", "thanks", "happy", "nice")
ORDER_LEXICON = ("plan", "schedule", "careful", "organized", "precise", "list", "finish", "tidy")
ENERGETIC_LEXICON = ("wow", "great", "party", "exciting", "loud", "fun", "go", "yeah")

POSITIVE_RATE = 0.4
ORDER_RATE = 0.3
ENERGETIC_RATE = 0.4
BASE_FREQUENCY = 200.0
NOISE_PER_N = 0.05
GREEN_BASE = 0.5
BLUE_MEAN = 0.5

_E, _A, _C, _N, _O = (t.index for t in (Trait.EXTRAVERSION, Trait.AGREEABLENESS,
                                         Trait.CONSCIENTIOUSNESS, Trait.NEUROTICISM,
                                         Trait.OPENNESS))


def planted_amplitude(extraversion: float) -> float:
    return 0.1 + 0.8 * extraversion


def planted_red_mean(openness: float) -> float:
    return 0.1 + 0.8 * openness


def planted_sentence_count(conscientiousness: float, sentences_max: int = 5) -> int:
    return int(min(sentences_max, 1 + round(4 * conscientiousness)))


def split_sizes(n_clips: int) -> Dict[str, int]:
    """60/20/20 with at least one clip in each split."""
    if n_clips < 3:
        raise ParameterError(f"need at least 3 clips to fill train/val/test, got {n_clips}")
    held_out = max(1, int(round(0.2 * n_clips)))
    return {"train": n_clips - 2 * held_out, "val": held_out, "test": held_out}


@dataclass
class SynthClip:
    """One generated clip, before anything touches the disk."""
    clip_id: str
    split: str
    labels: np.ndarray
    audio: AudioClip
    transcript: str
    frames: List[FrameImage]

    def to_inputs(self) -> ClipInputs:
        return ClipInputs(self.clip_id, self.labels.copy(), self.audio,
                          normalize_text(self.transcript), self.frames)


class SyntheticCorpusGenerator:
    """Deterministic generator; each concern draws from its own seeded stream."""

    def __init__(self, config: Optional[SynthConfig] = None):
        self.config = config or SynthConfig()
        streams = np.random.SeedSequence(self.config.seed).spawn(5)
        self._label_seed, self._split_seed, self._audio_seed, self._text_seed, \
            self._video_seed = streams
        n_filler = max(1, self.config.vocab_size - 3 * len(POSITIVE_LEXICON))
        self.filler = tuple(f"w{i:03d}" for i in range(n_filler))

    @property
    def vocabulary(self) -> List[str]:
        return list(self.filler + POSITIVE_LEXICON + ORDER_LEXICON + ENERGETIC_LEXICON)

    def labels(self) -> np.ndarray:
        rng = np.random.default_rng(self._label_seed)
        return rng.uniform(LABEL_LOW, LABEL_HIGH, size=(self.config.n_clips, NUM_TRAITS))

    def splits(self) -> List[str]:
        sizes = split_sizes(self.config.n_clips)
        order = np.random.default_rng(self._split_seed).permutation(self.config.n_clips)
        assignment = [""] * self.config.n_clips
        names = ["train"] * sizes["train"] + ["val"] * sizes["val"] + ["test"] * sizes["test"]
        for index, name in zip(order, names):
            assignment[index] = name
        return assignment

    # ------------------------------------------------------------------
    # Modalities
    # ------------------------------------------------------------------

    def make_audio(self, labels: np.ndarray, rng: np.random.Generator) -> AudioClip:
        cfg = self.config
        n = int(round(cfg.clip_seconds * cfg.sample_rate))
        t = np.arange(n) / cfg.sample_rate
        frequency = BASE_FREQUENCY * (1.0 + cfg.leak * labels[_O])
        phase = rng.uniform(0.0, 2.0 * np.pi)
        tone = planted_amplitude(labels[_E]) * np.sin(2.0 * np.pi * frequency * t + phase)
        noise = rng.normal(0.0, cfg.audio_noise + NOISE_PER_N * labels[_N], n)
        samples = np.clip(tone + noise, -1.0, 32767.0 / 32768.0)
        return AudioClip(np.round(samples * 32768.0) / 32768.0, cfg.sample_rate)

    def make_transcript(self, labels: np.ndarray, rng: np.random.Generator) -> str:
        cfg = self.config
        rates = np.array([
            POSITIVE_RATE * labels[_A],
            ORDER_RATE * labels[_C],
            ENERGETIC_RATE * cfg.leak * labels[_E],
        ])
        rates = np.clip(rates + rng.normal(0.0, cfg.text_noise, 3), 0.0, None)
        probabilities = np.append(rates, max(0.0, 1.0 - rates.sum()))
        probabilities /= probabilities.sum()
        pools = (POSITIVE_LEXICON, ORDER_LEXICON, ENERGETIC_LEXICON, self.filler)
        sentences = []
        for _ in range(planted_sentence_count(labels[_C], cfg.sentences_max)):
            kinds = rng.choice(len(pools), size=cfg.words_per_sentence, p=probabilities)
            words = [pools[k][rng.integers(len(pools[k]))] for k in kinds]
            sentences.append(" ".join([words[0].capitalize()] + words[1:]) + ".")
        return " ".join(sentences)

    def make_frames(self, labels: np.ndarray, rng: np.random.Generator) -> List[FrameImage]:
        cfg = self.config
        size = cfg.frame_size
        means = np.array([
            BLUE_MEAN,
            planted_red_mean(labels[_O]),
            GREEN_BASE + 0.8 * cfg.leak * (labels[_N] - 0.5),
        ])
        frames = []
        for _ in range(cfg.frames_per_clip):
            pixels = means[:, None, None] + rng.normal(0.0, cfg.video_noise, (3, size, size))
            pixels = np.round(np.clip(pixels, 0.0, 1.0) * 255.0) / 255.0
            frames.append(FrameImage(pixels))
        return frames

    # ------------------------------------------------------------------
    # Corpus
    # ------------------------------------------------------------------

    def clips(self) -> List[SynthClip]:
        """All clips in id order, generated in memory."""
        labels, splits = self.labels(), self.splits()
        audio_rng = np.random.default_rng(self._audio_seed)
        text_rng = np.random.default_rng(self._text_seed)
        video_rng = np.random.default_rng(self._video_seed)
        width = len(str(self.config.n_clips - 1))
        return [
            SynthClip(
                clip_id=f"clip{i:0{width}d}",
                split=splits[i],
                labels=labels[i],
                audio=self.make_audio(labels[i], audio_rng),
                transcript=self.make_transcript(labels[i], text_rng),
                frames=self.make_frames(labels[i], video_rng),
            )
            for i in range(self.config.n_clips)
        ]

    def embedding_vectors(self) -> Dict[str, np.ndarray]:
        table = EmbeddingTable.hashed(self.config.embedding_dim, self.config.seed)
        return {token: table.lookup(token) for token in self.vocabulary}

    def metadata(self) -> Dict[str, object]:
        cfg = self.config
        return {
            "seed": cfg.seed,
            "n_clips": cfg.n_clips,
            "sample_rate": cfg.sample_rate,
            "clip_seconds": cfg.clip_seconds,
            "frame_size": cfg.frame_size,
            "splits": split_sizes(cfg.n_clips),
            "label_range": [LABEL_LOW, LABEL_HIGH],
            "encodings": [
                {"modality": "audio", "trait": "E", "cue": "sinusoid amplitude",
                 "rule": "0.1 + 0.8 * E"},
                {"modality": "audio", "trait": "N", "cue": "gaussian noise std",
                 "rule": f"{cfg.audio_noise} + {NOISE_PER_N} * N"},
                {"modality": "audio", "trait": "O", "cue": "sinusoid frequency (leak)",
                 "rule": f"{BASE_FREQUENCY} * (1 + {cfg.leak} * O) Hz"},
                {"modality": "text", "trait": "A", "cue": "positive-lexicon token rate",
                 "rule": f"{POSITIVE_RATE} * A"},
                {"modality": "text", "trait": "C", "cue": "sentence count",
                 "rule": f"min({cfg.sentences_max}, 1 + round(4 * C))"},
                {"modality": "text", "trait": "C", "cue": "order-lexicon token rate",
                 "rule": f"{ORDER_RATE} * C"},
                {"modality": "text", "trait": "E", "cue": "energetic-lexicon token rate (leak)",
                 "rule": f"{ENERGETIC_RATE} * {cfg.leak} * E"},
                {"modality": "video", "trait": "O", "cue": "red channel mean",
                 "rule": "0.1 + 0.8 * O"},
                {"modality": "video", "trait": "N", "cue": "green channel mean (leak)",
                 "rule": f"{GREEN_BASE} + 0.8 * {cfg.leak} * (N - 0.5)"},
            ],
            "lexicons": {
                "positive": list(POSITIVE_LEXICON),
                "order": list(ORDER_LEXICON),
                "energetic": list(ENERGETIC_LEXICON),
            },
            "noise": {"audio": cfg.audio_noise, "text": cfg.text_noise,
                      "video": cfg.video_noise},
        }

    def generate(self, out_dir: Union[str, Path]) -> DatasetSplit:
        """Write WAVs, frame PNGs, manifest, embeddings and metadata under ``out_dir``."""
        out = Path(out_dir)
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise DataIOError(f"cannot create output directory {out}: {e}") from e

        records = []
        for clip in self.clips():
            audio_path = write_wav(out / "audio" / f"{clip.clip_id}.wav", clip.audio)
            frame_dir = out / "frames" / clip.clip_id
            for k, frame in enumerate(clip.frames):
                write_frame(frame_dir / f"frame{k}.png", frame)
            records.append(ClipRecord(clip.clip_id, clip.split, str(audio_path), str(frame_dir),
                                      clip.transcript, tuple(float(v) for v in clip.labels)))

        write_manifest(out / MANIFEST_NAME, records)
        write_embeddings(out / EMBEDDINGS_NAME, self.embedding_vectors())
        try:
            (out / META_NAME).write_text(json.dumps(self.metadata(), indent=2) + "\n",
                                         encoding="utf-8")
        except OSError as e:
            raise DataIOError(f"cannot write {out / META_NAME}: {e}") from e

        split = DatasetSplit(
            [r for r in records if r.split == "train"],
            [r for r in records if r.split == "val"],
            [r for r in records if r.split == "test"],
        )
        logger.info("generated %d clips in %s (%d train, %d val, %d test)", len(records), out,
                    len(split.train), len(split.validation), len(split.test))
        return split


def synth_generate(config: SynthConfig, out_dir: Union[str, Path]) -> DatasetSplit:
    """Generate a corpus on disk and return its splits."""
    return SyntheticCorpusGenerator(config).generate(out_dir)
