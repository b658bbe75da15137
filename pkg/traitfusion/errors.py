"""
Exception hierarchy for traitfusion.

Every library error derives from ``TraitFusionError`` and, where one fits,
from the matching builtin (``ValueError``, ``OSError``, ``ArithmeticError``)
so callers can catch either. ``exit_code_for`` is the single mapping the
command line uses to turn an exception into a process exit status.
"""

from typing import Iterable, Optional

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class TraitFusionError(Exception):
    """Base class for all traitfusion errors."""


class UsageError(TraitFusionError):
    """Command-line misuse (bad flag combination, missing argument)."""


# ============================================================================
# SHAPES AND PARAMETERS
# ============================================================================

class DimensionError(TraitFusionError, ValueError):
    """Tensor shapes do not agree with what an operation or model expects."""


class InputTooShortError(DimensionError):
    """Input is shorter than a convolution (or a cascade of them) can consume.

    Attributes:
        length: The length that was supplied.
        minimum_length: The smallest admissible length.
    """

    def __init__(self, length: int, minimum_length: int, what: str = "input"):
        self.length = length
        self.minimum_length = minimum_length
        super().__init__(
            f"{what} too short: length {length} < minimum admissible length {minimum_length}"
        )


class ParameterError(TraitFusionError, ValueError):
    """A hyperparameter or configuration value is out of range."""


# ============================================================================
# DATA
# ============================================================================

class DataError(TraitFusionError, ValueError):
    """Base class for problems with input data."""


class ManifestParseError(DataError):
    """A manifest line could not be parsed."""

    def __init__(self, line_number: int, message: str):
        self.line_number = line_number
        super().__init__(f"manifest line {line_number}: {message}")


class LabelRangeError(DataError):
    """A trait label lies outside [0, 1]."""

    def __init__(self, trait: str, value: float, where: str = ""):
        self.trait = trait
        self.value = value
        prefix = f"{where}: " if where else ""
        super().__init__(f"{prefix}label for trait {trait} must be in [0, 1], got {value}")


class DuplicateClipError(DataError):
    """The same clip id appears more than once in a dataset."""


class EmptyDatasetError(DataError):
    """A dataset, split or record list required to be non-empty is empty."""


class EmptyTranscriptError(DataError):
    """A transcript contains no usable tokens."""


class NoFramesError(DataError):
    """A clip has no frames to choose from."""


class UnsupportedFormatError(DataError):
    """A media file uses an encoding this package does not decode."""


class UpsamplingUnsupportedError(DataError):
    """Audio sampled below the model rate cannot be resampled up."""


class EmbeddingParseError(DataError):
    """An embedding table file is malformed."""

    def __init__(self, line_number: int, message: str):
        self.line_number = line_number
        super().__init__(f"embedding file line {line_number}: {message}")


class InvalidWeightsError(DataError):
    """Decision-level fusion weights violate the sum-to-one constraint."""


class MissingModalityError(DataError):
    """A model needs a modality input that the clip does not provide."""


class MissingPrerequisiteError(DataError):
    """Fusion training was requested without the uni-modal checkpoints it needs."""

    def __init__(self, missing: Iterable[str]):
        self.missing = list(missing)
        super().__init__(
            "fusion training needs trained uni-modal checkpoints; train these first: "
            + ", ".join(self.missing)
        )


class DataIOError(TraitFusionError, OSError):
    """A referenced file is missing, unreadable or truncated."""


# ============================================================================
# NUMERICS
# ============================================================================

class NumericError(TraitFusionError, ArithmeticError):
    """Training diverged or a numerical verification failed."""

    def __init__(self, message: str, clip_ids: Optional[Iterable[str]] = None):
        self.clip_ids = list(clip_ids) if clip_ids is not None else []
        if self.clip_ids:
            message = f"{message} (clips: {', '.join(self.clip_ids)})"
        super().__init__(message)


def exit_code_for(exc: BaseException) -> int:
    """Map an exception to the command-line exit status."""
    if isinstance(exc, UsageError):
        return EXIT_USAGE
    if isinstance(exc, NumericError):
        return EXIT_NUMERIC
    if isinstance(exc, (DataError, DataIOError, DimensionError, ParameterError)):
        return EXIT_DATA
    if isinstance(exc, (FileNotFoundError, PermissionError)):
        return EXIT_DATA
    return EXIT_NUMERIC if isinstance(exc, ArithmeticError) else EXIT_DATA
