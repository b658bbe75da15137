"""
Manifest Parser - Reads dataset manifests into train/validation/test splits.

One record per line, tab-separated::

    clip_id  split  audio_path  frame_or_feature_path  "transcript"  E  A  C  N  O

Relative paths resolve against the manifest's directory. Blank lines and
lines starting with ``#`` are ignored.
"""

import csv
import io
import logging
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Union

from .errors import (
    DataIOError,
    DuplicateClipError,
    EmptyDatasetError,
    LabelRangeError,
    ManifestParseError,
)
from .models import NUM_TRAITS, SPLIT_NAMES, ClipRecord, DatasetSplit

logger = logging.getLogger(__name__)

MANIFEST_FIELDS = 5 + NUM_TRAITS


class ManifestParser:
    """Parser for tab-separated clip manifests.

    Attributes:
        check_files: Verify that every referenced audio and visual path exists.
    """

    def __init__(self, check_files: bool = True):
        self.check_files = check_files

    def parse_file(self, filepath: Union[str, Path]) -> DatasetSplit:
        path = Path(filepath)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as e:
            raise DataIOError(f"cannot read manifest {path}: {e}") from e
        return self.parse_string(text, path.parent)

    def parse_string(self, text: str, base_dir: Union[str, Path] = ".") -> DatasetSplit:
        base = Path(base_dir)
        partitions: Dict[str, List[ClipRecord]] = {name: [] for name in SPLIT_NAMES}
        seen: Dict[str, int] = {}
        for number, line in enumerate(text.splitlines(), start=1):
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            record = self._parse_line(line, number, base)
            if record.clip_id in seen:
                raise DuplicateClipError(
                    f"manifest line {number}: clip id {record.clip_id!r} already used on "
                    f"line {seen[record.clip_id]}"
                )
            seen[record.clip_id] = number
            partitions[record.split].append(record)
        if not seen:
            raise EmptyDatasetError("manifest contains no records")
        split = DatasetSplit(partitions["train"], partitions["val"], partitions["test"])
        logger.info("parsed manifest: %d train, %d val, %d test", len(split.train),
                    len(split.validation), len(split.test))
        return split

    def _parse_line(self, line: str, number: int, base: Path) -> ClipRecord:
        try:
            fields = next(csv.reader([line], delimiter="\t", quotechar='"', strict=True))
        except csv.Error as e:
            raise ManifestParseError(number, f"malformed quoting ({e})") from e
        if len(fields) != MANIFEST_FIELDS:
            raise ManifestParseError(
                number, f"expected {MANIFEST_FIELDS} tab-separated fields, got {len(fields)}"
            )
        clip_id, split, audio, visual, transcript = (f.strip() if i < 4 else f
                                                     for i, f in enumerate(fields[:5]))
        if not clip_id:
            raise ManifestParseError(number, "empty clip id")
        if split not in SPLIT_NAMES:
            raise ManifestParseError(
                number, f"split must be one of {', '.join(SPLIT_NAMES)}, got {split!r}"
            )
        try:
            labels = tuple(float(v) for v in fields[5:])
        except ValueError:
            raise ManifestParseError(number, f"non-numeric label in {fields[5:]}") from None

        audio_path, visual_path = str(base / audio), str(base / visual)
        if self.check_files:
            for kind, path in (("audio", audio_path), ("frame/feature", visual_path)):
                if not Path(path).exists():
                    raise DataIOError(
                        f"manifest line {number}: {kind} file not found: {path}"
                    )
        try:
            return ClipRecord(clip_id, split, audio_path, visual_path, transcript, labels)
        except LabelRangeError as e:
            raise LabelRangeError(e.trait, e.value, f"manifest line {number}") from None


def parse_manifest(filepath: Union[str, Path], check_files: bool = True) -> DatasetSplit:
    """Convenience function to parse a manifest file."""
    return ManifestParser(check_files).parse_file(filepath)


def _relative(path: str, base: Path) -> str:
    try:
        return Path(path).relative_to(base).as_posix()
    except ValueError:
        return path


def format_manifest(records: Iterable[ClipRecord], base_dir: Optional[Path] = None) -> str:
    """Render records in manifest format; paths under ``base_dir`` are written relative."""
    buffer = io.StringIO()
    for record in records:
        audio, visual = record.audio_path, record.visual_path
        if base_dir is not None:
            audio, visual = _relative(audio, base_dir), _relative(visual, base_dir)
        flat = " ".join(record.transcript.split())
        transcript = '"' + flat.replace('"', '""') + '"'
        fields = [record.clip_id, record.split, audio, visual, transcript]
        fields += [repr(float(v)) for v in record.labels]
        buffer.write("\t".join(fields) + "\n")
    return buffer.getvalue()


def write_manifest(path: Union[str, Path], records: Iterable[ClipRecord]) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(format_manifest(records, path.parent), encoding="utf-8")
    except OSError as e:
        raise DataIOError(f"cannot write manifest {path}: {e}") from e
    logger.info("wrote manifest %s", path)
    return path
