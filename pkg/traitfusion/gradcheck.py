"""
Finite-difference verification of the reverse-mode gradients.

``finite_diff_check`` compares ``Tensor.backward`` against central
differences ``(f(x + h) - f(x - h)) / 2h`` coordinate by coordinate.
``check_parameters`` does the same for the parameters of a model through a
loss closure. Named suites (``ops``, ``audio``, ``text``, ``video``,
``fused``) build small randomized cases over many seeds and report the worst
relative error per op.

Coordinates where the function is not smooth within ``h`` (a ReLU crossing
zero, a max changing its winner) are detected from the second difference
and skipped. A kink sitting exactly on the point (a zero pre-activation
that a max still selects) is recognised by a slope jump that does not
shrink with the step; there the reverse pass only has to match one of the
one-sided derivatives.
"""

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from . import autograd as ag
from .audio import AudioChannel
from .autograd import Parameter, Tensor
from .config import (
    AudioChannelConfig,
    FusionConfig,
    TextChannelConfig,
    VideoChannelConfig,
)
from .errors import NumericError, ParameterError
from .fusion import build_fused
from .models import NUM_TRAITS, AudioClip, ClipInputs, ModelKind
from .nn import Module
from .text import EmbeddingTable, TextChannel, normalize_text
from .trainer import batch_loss
from .video import VideoChannel

logger = logging.getLogger(__name__)

DEFAULT_STEP = 1e-5
DEFAULT_TOLERANCE = 1e-4
DEFAULT_SEEDS = 20
SCOPES = ("ops", "audio", "text", "video", "fused")

# relative error denominators never drop below this
_ERROR_FLOOR = 1e-5
# second difference above this share of the first-order change marks a kink
_KINK_RATIO = 1e-2
_KINK_FLOOR = 1e-12
# central errors below this are accepted without the half-step evaluations
_SUSPECT_ERROR = 1e-6
# a smooth slope jump halves with the step; one at the point stays put
_EXACT_KINK_RATIO = 0.75


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), _ERROR_FLOOR)


def _is_kink(f_plus: float, f_zero: float, f_minus: float) -> bool:
    second = abs(f_plus - 2.0 * f_zero + f_minus)
    first = abs(f_plus - f_zero) + abs(f_zero - f_minus)
    return second > max(_KINK_RATIO * first, _KINK_FLOOR)


def coordinate_error(
    evaluate: Callable[[float], float], analytic: float, f_zero: float, h: float = DEFAULT_STEP
) -> Tuple[float, Optional[float]]:
    """Central difference and relative error for one coordinate.

    ``evaluate(delta)`` returns the function with the coordinate shifted by
    ``delta``. The error is ``None`` when a kink inside the step makes the
    coordinate uncheckable.
    """
    f_plus, f_minus = evaluate(h), evaluate(-h)
    numeric = (f_plus - f_minus) / (2.0 * h)
    if _is_kink(f_plus, f_zero, f_minus):
        return numeric, None
    error = relative_error(analytic, numeric)
    if error <= _SUSPECT_ERROR:
        return numeric, error

    half = 0.5 * h
    f_half_plus, f_half_minus = evaluate(half), evaluate(-half)
    jump = abs(f_plus - 2.0 * f_zero + f_minus) / h
    half_jump = abs(f_half_plus - 2.0 * f_zero + f_half_minus) / half
    if half_jump > _EXACT_KINK_RATIO * jump:
        # second-order one-sided differences from the step and the half step
        right = (4.0 * f_half_plus - f_plus - 3.0 * f_zero) / h
        left = (3.0 * f_zero - 4.0 * f_half_minus + f_minus) / h
        error = min(error, relative_error(analytic, right), relative_error(analytic, left))
    return numeric, error


@dataclass
class GradientComparison:
    """Per-coordinate analytic and numeric gradients of one check."""
    analytic: np.ndarray
    numeric: np.ndarray
    skipped: np.ndarray
    errors: np.ndarray

    @property
    def max_relative_error(self) -> float:
        return float(self.errors[~self.skipped].max(initial=0.0))


def compare_gradients(
    f: Callable[[Tensor], Tensor], point: np.ndarray, h: float = DEFAULT_STEP
) -> GradientComparison:
    """Reverse-mode and central-difference gradients of scalar ``f`` at ``point``."""
    point = np.array(point, dtype=np.float64)
    x = Tensor(point, requires_grad=True)
    y = f(x)
    if y.size != 1:
        raise ParameterError(f"finite_diff_check needs a scalar function, got shape {y.shape}")
    y.backward()
    analytic = x.grad if x.grad is not None else np.zeros_like(point)
    f_zero = y.item()

    numeric = np.zeros_like(point)
    skipped = np.zeros(point.shape, dtype=bool)
    errors = np.zeros_like(point)
    for index in np.ndindex(point.shape):

        def evaluate(delta: float) -> float:
            shifted = point.copy()
            shifted[index] += delta
            return f(Tensor(shifted)).item()

        numeric[index], error = coordinate_error(evaluate, analytic[index], f_zero, h)
        skipped[index] = error is None
        errors[index] = 0.0 if error is None else error
    return GradientComparison(analytic, numeric, skipped, errors)


def finite_diff_check(
    f: Callable[[Tensor], Tensor], point: np.ndarray, h: float = DEFAULT_STEP
) -> float:
    """Max relative error between the reverse-mode gradient and central differences."""
    return compare_gradients(f, point, h).max_relative_error


def check_parameters(
    loss_fn: Callable[[], Tensor],
    params: Sequence[Parameter],
    h: float = DEFAULT_STEP,
    coords_per_param: Optional[int] = 4,
    rng: Optional[np.random.Generator] = None,
) -> Dict[str, float]:
    """Worst relative error per parameter for a deterministic scalar ``loss_fn``.

    Each parameter's values are perturbed in place and restored. With
    ``coords_per_param`` set, that many coordinates are sampled per parameter.
    """
    rng = rng or np.random.default_rng(0)
    for param in params:
        param.zero_grad()
    loss = loss_fn()
    loss.backward()
    f_zero = loss.item()

    worst: Dict[str, float] = {}
    for param in params:
        grad = param.grad if param.grad is not None else np.zeros_like(param.data)
        flat = param.data.reshape(-1)
        if coords_per_param is None or coords_per_param >= flat.size:
            coords = np.arange(flat.size)
        else:
            coords = rng.choice(flat.size, size=coords_per_param, replace=False)
        errors = []
        for i in coords:
            original = flat[i]

            def evaluate(delta: float) -> float:
                flat[i] = original + delta
                try:
                    return loss_fn().item()
                finally:
                    flat[i] = original

            _, error = coordinate_error(evaluate, grad.reshape(-1)[i], f_zero, h)
            if error is not None:
                errors.append(error)
        worst[param.name] = max(errors, default=0.0)
    return worst


# ============================================================================
# SUITES
# ============================================================================


@dataclass
class Check:
    """A named check; ``run(seed)`` returns the worst relative error for that seed."""
    name: str
    run: Callable[[int], float]


@dataclass
class CheckResult:
    name: str
    max_relative_error: float
    seeds: int
    tolerance: float
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.max_relative_error)) and \
            self.max_relative_error < self.tolerance


@dataclass
class GradcheckReport:
    scope: str
    results: List[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    @property
    def failures(self) -> List[CheckResult]:
        return [r for r in self.results if not r.passed]

    @property
    def worst(self) -> float:
        return max((r.max_relative_error for r in self.results), default=0.0)

    def raise_on_failure(self) -> None:
        if not self.passed:
            names = ", ".join(
                f"{r.name} ({r.max_relative_error:.3g})" for r in self.failures
            )
            raise NumericError(f"gradient check failed for: {names}")


def _projected(op: Callable[[Tensor], Tensor], shape_out_seed: int) -> Callable[[Tensor], Tensor]:
    """Reduce a tensor-valued op to a scalar with fixed random weights."""
    cache: Dict[tuple, Tensor] = {}

    def f(x: Tensor) -> Tensor:
        out = op(x)
        if out.shape not in cache:
            cache[out.shape] = Tensor(
                np.random.default_rng(shape_out_seed).normal(size=out.shape)
            )
        return (out * cache[out.shape]).sum()

    return f


def op_check(name: str, shape: tuple, op: Callable[[Tensor, np.random.Generator], Tensor],
             point: Optional[Callable[[np.random.Generator], np.ndarray]] = None) -> Check:
    def run(seed: int) -> float:
        rng = np.random.default_rng(seed)
        x0 = point(rng) if point is not None else rng.normal(size=shape)
        fixed = np.random.default_rng(seed + 10_000)
        state = fixed.bit_generator.state

        def apply(x: Tensor) -> Tensor:
            fixed.bit_generator.state = state
            return op(x, fixed)

        return finite_diff_check(_projected(apply, seed + 20_000), x0)

    return Check(name, run)


def _const(rng: np.random.Generator, *shape: int) -> Tensor:
    return Tensor(rng.normal(size=shape))


def ops_checks() -> List[Check]:
    """One check per differentiable op, each differentiating w.r.t. its main input."""
    return [
        op_check("conv1d.input", (2, 32),
                  lambda x, r: ag.conv1d(x, _const(r, 3, 2, 4), _const(r, 3), stride=2)),
        op_check("conv1d.kernels", (3, 2, 4),
                  lambda x, r: ag.conv1d(_const(r, 2, 32), x, _const(r, 3), stride=2)),
        op_check("conv1d.bias", (3,),
                  lambda x, r: ag.conv1d(_const(r, 2, 32), _const(r, 3, 2, 4), x, stride=2)),
        op_check("conv2d.input", (2, 6, 6),
                  lambda x, r: ag.conv2d(x, _const(r, 3, 2, 3, 3), _const(r, 3), 1, 1)),
        op_check("conv2d.kernels", (3, 2, 3, 3),
                  lambda x, r: ag.conv2d(_const(r, 2, 7, 7), x, _const(r, 3), 2, 1)),
        op_check("fully_connected.input", (3,),
                  lambda x, r: ag.fully_connected(x, _const(r, 4, 3), _const(r, 4))),
        op_check("fully_connected.weights", (4, 3),
                  lambda x, r: ag.fully_connected(_const(r, 3), x, _const(r, 4))),
        op_check("sigmoid", (7,), lambda x, r: ag.sigmoid(x)),
        op_check("relu", (7,), lambda x, r: ag.relu(x)),
        op_check("softmax", (5,), lambda x, r: ag.softmax(x)),
        op_check("global_avg_pool", (3, 9), lambda x, r: ag.global_avg_pool(x)),
        op_check("max_over_time", (3, 9), lambda x, r: ag.max_over_time(x)),
        op_check("max_pool2d", (2, 6, 6), lambda x, r: ag.max_pool2d(x, 2)),
        op_check("dropout", (8,), lambda x, r: ag.dropout(x, 0.5, True, r)),
        op_check("transpose", (3, 4), lambda x, r: ag.transpose(x)),
        op_check("concat", (6,),
                  lambda x, r: ag.concat([ag.segment(x, 0, 2), _const(r, 3),
                                          ag.segment(x, 2, 6)])),
        op_check("split", (6,), lambda x, r: ag.split(x, [1, 2, 3])[1] * 2.0),
        op_check("weighted_sum", (3,),
                  lambda x, r: ag.weighted_sum(ag.softmax(x), [_const(r, 4) for _ in range(3)])),
        op_check("average", (4,), lambda x, r: ag.average([x, x * x, _const(r, 4)])),
        op_check("mse_over_traits", (NUM_TRAITS,),
                  lambda x, r: ag.mse_over_traits(ag.sigmoid(x), r.uniform(size=NUM_TRAITS))),
        op_check("arithmetic", (4,),
                  lambda x, r: (x * x - x * 3.0 + 1.5) ** 2 / 4.0),
    ]


def _small_audio_config() -> AudioChannelConfig:
    return AudioChannelConfig(first_window=20, first_stride=10, later_window=4, later_stride=2,
                              filters=4, penultimate_dim=6, amplitude_randomization=False)


def _small_text_config() -> TextChannelConfig:
    return TextChannelConfig(window_widths=(2, 3), filters_per_width=3, dropout_p=0.5,
                             penultimate_dim=4, embedding_dim=6)


def _small_video_config() -> VideoChannelConfig:
    return VideoChannelConfig(backbone_spec="conv4,pool2,conv6", head_hidden_dim=5,
                              frame_size=8, source="precomputed", feature_dim=6)


_SENTENCES = ("We plan the day. Great fun!", "A careful list is nice. Go.")


def _micro_batch(seed: int, audio_length: int = 300) -> List[ClipInputs]:
    """Two clips carrying every modality (video as precomputed features)."""
    rng = np.random.default_rng(seed)
    return [
        ClipInputs(
            clip_id=f"check{k}",
            labels=rng.uniform(0.1, 0.9, NUM_TRAITS),
            audio=AudioClip(rng.uniform(-1.0, 1.0, audio_length), 8000),
            transcript=normalize_text(_SENTENCES[k]),
            features=[rng.normal(size=6)],
        )
        for k in range(2)
    ]


def _model_check(name: str, build: Callable[[int], Module]) -> Check:
    def run(seed: int) -> float:
        model = build(seed)
        clips = _micro_batch(seed)
        errors = check_parameters(lambda: batch_loss(model, clips), model.trainable_parameters(),
                                  rng=np.random.default_rng(seed))
        return max(errors.values(), default=0.0)

    return Check(name, run)


def _text_channel(seed: int) -> TextChannel:
    config = _small_text_config()
    return TextChannel(config, EmbeddingTable.hashed(config.embedding_dim, seed), seed=seed)


def _fused(mode: ModelKind) -> Callable[[int], Module]:
    def build(seed: int) -> Module:
        audio = AudioChannel(_small_audio_config(), seed=seed)
        text = _text_channel(seed)
        video = VideoChannel(_small_video_config(), seed=seed)
        config = FusionConfig(hidden_dim=4, penultimate_dims=(6, 4, 5))
        return build_fused(audio, text, video, mode, config, seed=seed)

    return build


SUITES: Dict[str, Callable[[], List[Check]]] = {
    "ops": ops_checks,
    "audio": lambda: [_model_check("audio.loss",
                                   lambda s: AudioChannel(_small_audio_config(), seed=s))],
    "text": lambda: [_model_check("text.loss", _text_channel)],
    "video": lambda: [_model_check("video.loss",
                                   lambda s: VideoChannel(_small_video_config(), seed=s))],
    "fused": lambda: [_model_check("nnlb.loss", _fused(ModelKind.NNLB)),
                      _model_check("nnfb.loss", _fused(ModelKind.NNFB))],
}


def run_checks(checks: Iterable[Check], seeds: int = DEFAULT_SEEDS,
               tolerance: float = DEFAULT_TOLERANCE, scope: str = "custom") -> GradcheckReport:
    """Run every check over seeds ``0..seeds-1`` and keep the worst error of each."""
    report = GradcheckReport(scope)
    for check in checks:
        started = time.perf_counter()
        worst = 0.0
        for seed in range(seeds):
            error = check.run(seed)
            worst = error if not np.isfinite(error) else max(worst, error)
            if not np.isfinite(worst):
                break
        result = CheckResult(check.name, worst, seeds, tolerance,
                             time.perf_counter() - started)
        report.results.append(result)
        log = logger.info if result.passed else logger.warning
        log("gradcheck %s: worst relative error %.3g over %d seeds", check.name, worst, seeds)
    return report


def run_suite(scope: str, seeds: int = DEFAULT_SEEDS,
              tolerance: float = DEFAULT_TOLERANCE) -> GradcheckReport:
    if scope not in SUITES:
        raise ParameterError(f"unknown gradcheck scope {scope!r}; expected one of "
                             f"{', '.join(SCOPES)}")
    return run_checks(SUITES[scope](), seeds, tolerance, scope)
