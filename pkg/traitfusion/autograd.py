"""
Reverse-mode automatic differentiation over numpy float64 arrays.

A ``Tensor`` records the op that produced it, its parent tensors and a
closure that pushes an upstream gradient back to those parents.
``Tensor.backward`` walks the graph in reverse topological order. Only the
operations the audio, text and video channels and the fusion heads need are
provided; broadcasting is limited to tensor-with-scalar arithmetic.

Gradients are only propagated into tensors with ``requires_grad`` set, so a
frozen ``Parameter`` (or plain input data) costs nothing on the backward pass.
"""

from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from .errors import DimensionError, InputTooShortError, ParameterError

Number = Union[int, float]
ArrayLike = Union[np.ndarray, Sequence[float], Number]


class Tensor:
    """An n-dimensional float64 array participating in a differentiation graph.

    Attributes:
        data: The values, always ``float64``.
        grad: Accumulated gradient (same shape as ``data``) or ``None``.
        requires_grad: Whether gradients flow into this tensor.
    """

    def __init__(self, data: ArrayLike, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self._prev: Tuple["Tensor", ...] = ()
        self._backward: Optional[Callable[[np.ndarray], None]] = None
        self._op = ""

    # ------------------------------------------------------------------
    # Introspection
    # ------------------------------------------------------------------

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise DimensionError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        op = f", op={self._op}" if self._op else ""
        return f"Tensor(shape={self.shape}{op})"

    # ------------------------------------------------------------------
    # Gradient plumbing
    # ------------------------------------------------------------------

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, grad: np.ndarray) -> None:
        if grad.shape != self.data.shape:
            raise DimensionError(
                f"gradient shape {grad.shape} does not match tensor shape {self.data.shape}"
            )
        if self.grad is None:
            self.grad = np.array(grad, dtype=np.float64)
        else:
            self.grad += grad

    def _topological_order(self) -> List["Tensor"]:
        order: List[Tensor] = []
        visited = set()
        stack: List[Tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._prev:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))
        return order

    def backward(self, grad: Optional[np.ndarray] = None) -> None:
        """Accumulate d(self)/d(leaf) into every reachable ``requires_grad`` tensor.

        Without an explicit ``grad`` the tensor must hold a single value.
        """
        if not self.requires_grad:
            return
        if grad is None:
            if self.data.size != 1:
                raise DimensionError(
                    f"backward() without a seed gradient needs a scalar, got shape {self.shape}"
                )
            grad = np.ones_like(self.data)
        self._accumulate(np.asarray(grad, dtype=np.float64))
        for node in reversed(self._topological_order()):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # ------------------------------------------------------------------
    # Arithmetic (same-shape tensors, or tensor with scalar)
    # ------------------------------------------------------------------

    def __add__(self, other: Union["Tensor", Number]) -> "Tensor":
        if not isinstance(other, Tensor):
            return _result(self.data + float(other), (self,), "add", lambda g: self._accumulate(g))
        _require_same_shape(self, other, "add")

        def backward(g: np.ndarray) -> None:
            if self.requires_grad:
                self._accumulate(g)
            if other.requires_grad:
                other._accumulate(g)

        return _result(self.data + other.data, (self, other), "add", backward)

    __radd__ = __add__

    def __neg__(self) -> "Tensor":
        return self * -1.0

    def __sub__(self, other: Union["Tensor", Number]) -> "Tensor":
        if isinstance(other, Tensor):
            return self + (-other)
        return self + (-float(other))

    def __rsub__(self, other: Number) -> "Tensor":
        return (-self) + float(other)

    def __mul__(self, other: Union["Tensor", Number]) -> "Tensor":
        if not isinstance(other, Tensor):
            factor = float(other)
            return _result(self.data * factor, (self,), "mul",
                           lambda g: self._accumulate(g * factor))
        _require_same_shape(self, other, "mul")

        def backward(g: np.ndarray) -> None:
            if self.requires_grad:
                self._accumulate(g * other.data)
            if other.requires_grad:
                other._accumulate(g * self.data)

        return _result(self.data * other.data, (self, other), "mul", backward)

    __rmul__ = __mul__

    def __truediv__(self, other: Number) -> "Tensor":
        return self * (1.0 / float(other))

    def __pow__(self, exponent: Number) -> "Tensor":
        exponent = float(exponent)
        return _result(
            self.data ** exponent, (self,), "pow",
            lambda g: self._accumulate(g * exponent * self.data ** (exponent - 1.0)),
        )

    def sum(self) -> "Tensor":
        return _result(self.data.sum(), (self,), "sum",
                       lambda g: self._accumulate(np.full(self.shape, float(g))))

    def mean(self) -> "Tensor":
        n = self.data.size
        return _result(self.data.mean(), (self,), "mean",
                       lambda g: self._accumulate(np.full(self.shape, float(g) / n)))

    def reshape(self, *shape: int) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        original = self.shape
        return _result(self.data.reshape(shape), (self,), "reshape",
                       lambda g: self._accumulate(g.reshape(original)))

    @property
    def T(self) -> "Tensor":  # noqa: N802
        return transpose(self)


class Parameter(Tensor):
    """A named, optionally frozen, trainable tensor.

    Frozen parameters do not take part in the backward pass and are skipped
    by the optimizer, so their values stay bit-identical across training.
    """

    def __init__(self, data: ArrayLike, name: str, frozen: bool = False):
        super().__init__(np.array(data, dtype=np.float64, copy=True), requires_grad=not frozen)
        self.name = name

    @property
    def frozen(self) -> bool:
        return not self.requires_grad

    @frozen.setter
    def frozen(self, value: bool) -> None:
        self.requires_grad = not value
        if value:
            self.grad = None

    def __repr__(self) -> str:
        state = "frozen" if self.frozen else "trainable"
        return f"Parameter({self.name!r}, shape={self.shape}, {state})"


def _result(
    data: np.ndarray,
    parents: Tuple[Tensor, ...],
    op: str,
    backward: Callable[[np.ndarray], None],
) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._prev = parents
        out._backward = backward
        out._op = op
    return out


def _require_same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} differ")


def as_tensor(value: Union[Tensor, ArrayLike]) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


# ============================================================================
# CONVOLUTION AND POOLING
# ============================================================================

def conv1d_output_length(length: int, window: int, stride: int) -> int:
    """Number of valid window positions: ``floor((length - window) / stride) + 1``."""
    if length < window:
        return 0
    return (length - window) // stride + 1


def conv1d(x: Tensor, kernels: Tensor, bias: Tensor, stride: int = 1) -> Tensor:
    """Valid 1-D cross-correlation: ``[C_in x L] * [C_out x C_in x W] -> [C_out x L_out]``."""
    if stride < 1:
        raise ParameterError(f"conv1d stride must be >= 1, got {stride}")
    if x.ndim != 2 or kernels.ndim != 3:
        raise DimensionError(
            f"conv1d expects input [C_in x L] and kernels [C_out x C_in x W], "
            f"got {x.shape} and {kernels.shape}"
        )
    c_in, length = x.shape
    c_out, k_in, width = kernels.shape
    if k_in != c_in:
        raise DimensionError(f"conv1d kernels expect {k_in} input channels, input has {c_in}")
    if bias.shape != (c_out,):
        raise DimensionError(f"conv1d bias must have shape ({c_out},), got {bias.shape}")
    if length < width:
        raise InputTooShortError(length, width, "conv1d input")

    l_out = conv1d_output_length(length, width, stride)
    windows = sliding_window_view(x.data, width, axis=1)[:, ::stride, :][:, :l_out]
    out = np.tensordot(kernels.data, windows, axes=([1, 2], [0, 2])) + bias.data[:, None]

    def backward(g: np.ndarray) -> None:
        if bias.requires_grad:
            bias._accumulate(g.sum(axis=1))
        if kernels.requires_grad:
            kernels._accumulate(np.tensordot(g, windows, axes=([1], [1])))
        if x.requires_grad:
            dcols = np.tensordot(kernels.data, g, axes=([0], [0]))  # [C_in, W, L_out]
            dx = np.zeros_like(x.data)
            span = stride * (l_out - 1) + 1
            for k in range(width):
                dx[:, k:k + span:stride] += dcols[:, k, :]
            x._accumulate(dx)

    return _result(out, (x, kernels, bias), "conv1d", backward)


def conv2d(
    x: Tensor, kernels: Tensor, bias: Tensor, stride: int = 1, padding: int = 0
) -> Tensor:
    """2-D cross-correlation with zero padding: ``[C_in x H x W] -> [C_out x H_out x W_out]``."""
    if stride < 1 or padding < 0:
        raise ParameterError(f"conv2d needs stride >= 1 and padding >= 0, got {stride}, {padding}")
    if x.ndim != 3 or kernels.ndim != 4:
        raise DimensionError(
            f"conv2d expects input [C_in x H x W] and kernels [C_out x C_in x KH x KW], "
            f"got {x.shape} and {kernels.shape}"
        )
    c_in, height, width = x.shape
    c_out, k_in, kh, kw = kernels.shape
    if k_in != c_in:
        raise DimensionError(f"conv2d kernels expect {k_in} input channels, input has {c_in}")
    if bias.shape != (c_out,):
        raise DimensionError(f"conv2d bias must have shape ({c_out},), got {bias.shape}")
    h_out = (height + 2 * padding - kh) // stride + 1
    w_out = (width + 2 * padding - kw) // stride + 1
    if height + 2 * padding < kh or width + 2 * padding < kw or h_out <= 0 or w_out <= 0:
        raise DimensionError(
            f"conv2d output would be empty for input {height}x{width}, kernel {kh}x{kw}, "
            f"stride {stride}, padding {padding}"
        )

    padded = np.pad(x.data, ((0, 0), (padding, padding), (padding, padding)))
    windows = sliding_window_view(padded, (kh, kw), axis=(1, 2))
    windows = windows[:, ::stride, ::stride][:, :h_out, :w_out]  # [C_in, Ho, Wo, KH, KW]
    out = np.tensordot(kernels.data, windows, axes=([1, 2, 3], [0, 3, 4]))
    out += bias.data[:, None, None]

    def backward(g: np.ndarray) -> None:
        if bias.requires_grad:
            bias._accumulate(g.sum(axis=(1, 2)))
        if kernels.requires_grad:
            kernels._accumulate(np.tensordot(g, windows, axes=([1, 2], [1, 2])))
        if x.requires_grad:
            dcols = np.tensordot(kernels.data, g, axes=([0], [0]))  # [C_in, KH, KW, Ho, Wo]
            dpad = np.zeros_like(padded)
            h_span = stride * (h_out - 1) + 1
            w_span = stride * (w_out - 1) + 1
            for i in range(kh):
                for j in range(kw):
                    dpad[:, i:i + h_span:stride, j:j + w_span:stride] += dcols[:, i, j]
            x._accumulate(dpad[:, padding:padding + height, padding:padding + width])

    return _result(out, (x, kernels, bias), "conv2d", backward)


def max_pool2d(x: Tensor, size: int = 2) -> Tensor:
    """Non-overlapping ``size x size`` max pooling; trailing rows/columns are dropped.

    Ties send the gradient to the first (row-major) position of the block.
    """
    if x.ndim != 3:
        raise DimensionError(f"max_pool2d expects [C x H x W], got {x.shape}")
    channels, height, width = x.shape
    h_out, w_out = height // size, width // size
    if size < 1 or h_out == 0 or w_out == 0:
        raise DimensionError(f"max_pool2d size {size} does not fit input {height}x{width}")
    blocks = (
        x.data[:, :h_out * size, :w_out * size]
        .reshape(channels, h_out, size, w_out, size)
        .transpose(0, 1, 3, 2, 4)
        .reshape(channels, h_out, w_out, size * size)
    )
    idx = blocks.argmax(axis=-1)[..., None]
    out = np.take_along_axis(blocks, idx, axis=-1)[..., 0]

    def backward(g: np.ndarray) -> None:
        dblocks = np.zeros_like(blocks)
        np.put_along_axis(dblocks, idx, g[..., None], axis=-1)
        dx = np.zeros_like(x.data)
        dx[:, :h_out * size, :w_out * size] = (
            dblocks.reshape(channels, h_out, w_out, size, size)
            .transpose(0, 1, 3, 2, 4)
            .reshape(channels, h_out * size, w_out * size)
        )
        x._accumulate(dx)

    return _result(out, (x,), "max_pool2d", backward)


def global_avg_pool(x: Tensor) -> Tensor:
    """Per-channel mean over the trailing axis: ``[C x L] -> [C]``."""
    if x.ndim != 2:
        raise DimensionError(f"global_avg_pool expects [C x L], got {x.shape}")
    length = x.shape[1]
    return _result(
        x.data.mean(axis=1), (x,), "global_avg_pool",
        lambda g: x._accumulate(np.repeat(g[:, None] / length, length, axis=1)),
    )


def max_over_time(x: Tensor) -> Tensor:
    """Per-channel maximum over the trailing axis: ``[C x L] -> [C]``.

    The gradient flows to the arg-max only; ties go to the lowest index.
    """
    if x.ndim != 2:
        raise DimensionError(f"max_over_time expects [C x L], got {x.shape}")
    idx = x.data.argmax(axis=1)
    rows = np.arange(x.shape[0])

    def backward(g: np.ndarray) -> None:
        dx = np.zeros_like(x.data)
        dx[rows, idx] = g
        x._accumulate(dx)

    return _result(x.data[rows, idx], (x,), "max_over_time", backward)


# ============================================================================
# DENSE LAYERS AND ACTIVATIONS
# ============================================================================

def fully_connected(x: Tensor, weights: Tensor, bias: Tensor) -> Tensor:
    """``weights . x + bias`` for ``x [n]``, ``weights [m x n]``, ``bias [m]``."""
    if x.ndim != 1 or weights.ndim != 2 or weights.shape[1] != x.shape[0]:
        raise DimensionError(
            f"fully_connected: weights {weights.shape} cannot multiply input {x.shape}"
        )
    if bias.shape != (weights.shape[0],):
        raise DimensionError(
            f"fully_connected: bias must have shape ({weights.shape[0]},), got {bias.shape}"
        )

    def backward(g: np.ndarray) -> None:
        if bias.requires_grad:
            bias._accumulate(g)
        if weights.requires_grad:
            weights._accumulate(np.outer(g, x.data))
        if x.requires_grad:
            x._accumulate(weights.data.T @ g)

    return _result(weights.data @ x.data + bias.data, (x, weights, bias), "fully_connected",
                   backward)


matmul = fully_connected


def sigmoid(x: Tensor) -> Tensor:
    out = expit(x.data)
    return _result(out, (x,), "sigmoid", lambda g: x._accumulate(g * out * (1.0 - out)))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0.0
    return _result(np.where(mask, x.data, 0.0), (x,), "relu",
                   lambda g: x._accumulate(g * mask))


def softmax(x: Tensor) -> Tensor:
    """Softmax of a 1-D tensor."""
    if x.ndim != 1:
        raise DimensionError(f"softmax expects a 1-D tensor, got {x.shape}")
    shifted = np.exp(x.data - x.data.max())
    out = shifted / shifted.sum()
    return _result(out, (x,), "softmax",
                   lambda g: x._accumulate(out * (g - float(g @ out))))


def dropout(
    x: Tensor, p: float, training: bool, rng: Optional[np.random.Generator] = None
) -> Tensor:
    """Inverted dropout: survivors are scaled by ``1/(1-p)``; identity when not training."""
    if not 0.0 <= p < 1.0:
        raise ParameterError(f"dropout p must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    if rng is None:
        raise ParameterError("dropout in training mode needs a seeded generator")
    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    return _result(x.data * mask, (x,), "dropout", lambda g: x._accumulate(g * mask))


# ============================================================================
# STRUCTURAL OPS
# ============================================================================

def transpose(x: Tensor) -> Tensor:
    if x.ndim != 2:
        raise DimensionError(f"transpose expects a 2-D tensor, got {x.shape}")
    return _result(x.data.T.copy(), (x,), "transpose", lambda g: x._accumulate(g.T))


def concat(parts: Sequence[Tensor]) -> Tensor:
    """Order-preserving concatenation of 1-D tensors."""
    if not parts:
        raise DimensionError("concat needs at least one part")
    if any(p.ndim != 1 for p in parts):
        raise DimensionError(f"concat expects 1-D parts, got {[p.shape for p in parts]}")
    bounds = np.cumsum([0] + [p.shape[0] for p in parts])

    def backward(g: np.ndarray) -> None:
        for part, start, stop in zip(parts, bounds[:-1], bounds[1:]):
            if part.requires_grad:
                part._accumulate(g[start:stop])

    return _result(np.concatenate([p.data for p in parts]), tuple(parts), "concat", backward)


def segment(x: Tensor, start: int, stop: int) -> Tensor:
    """The slice ``x[start:stop]`` of a 1-D tensor."""
    if x.ndim != 1 or not 0 <= start <= stop <= x.shape[0]:
        raise DimensionError(f"segment [{start}:{stop}] out of range for shape {x.shape}")

    def backward(g: np.ndarray) -> None:
        dx = np.zeros_like(x.data)
        dx[start:stop] = g
        x._accumulate(dx)

    return _result(x.data[start:stop].copy(), (x,), "segment", backward)


def split(x: Tensor, sizes: Sequence[int]) -> List[Tensor]:
    """Inverse of ``concat``: cut a 1-D tensor into consecutive segments."""
    if sum(sizes) != x.shape[0]:
        raise DimensionError(f"split sizes {list(sizes)} do not add up to {x.shape[0]}")
    bounds = np.cumsum([0] + list(sizes))
    return [segment(x, int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:])]


def weighted_sum(coeffs: Tensor, parts: Sequence[Tensor]) -> Tensor:
    """``sum_k coeffs[k] * parts[k]`` for a 1-D coefficient tensor and same-shape parts."""
    if coeffs.ndim != 1 or coeffs.shape[0] != len(parts):
        raise DimensionError(
            f"weighted_sum: {coeffs.shape} coefficients for {len(parts)} parts"
        )
    shape = parts[0].shape
    if any(p.shape != shape for p in parts):
        raise DimensionError(f"weighted_sum parts differ in shape: {[p.shape for p in parts]}")
    stacked = np.stack([p.data for p in parts])
    out = np.tensordot(coeffs.data, stacked, axes=1)

    def backward(g: np.ndarray) -> None:
        if coeffs.requires_grad:
            coeffs._accumulate(np.array([float(np.sum(g * s)) for s in stacked]))
        for c, part in zip(coeffs.data, parts):
            if part.requires_grad:
                part._accumulate(g * c)

    return _result(out, (coeffs, *parts), "weighted_sum", backward)


def average(parts: Sequence[Tensor]) -> Tensor:
    """Elementwise mean of same-shape tensors."""
    if not parts:
        raise DimensionError("average needs at least one tensor")
    shape = parts[0].shape
    if any(p.shape != shape for p in parts):
        raise DimensionError(f"average: parts differ in shape: {[p.shape for p in parts]}")
    n = len(parts)

    def backward(g: np.ndarray) -> None:
        for part in parts:
            if part.requires_grad:
                part._accumulate(g / n)

    return _result(np.mean([p.data for p in parts], axis=0), tuple(parts), "average", backward)


# ============================================================================
# LOSSES
# ============================================================================

def mse_over_traits(pred: Tensor, label: Union[Tensor, ArrayLike]) -> Tensor:
    """Mean over the trait axis of the squared error: ``(1/5) * sum_i (pred_i - label_i)^2``."""
    target = label.data if isinstance(label, Tensor) else np.asarray(label, dtype=np.float64)
    if pred.shape != target.shape:
        raise DimensionError(f"mse_over_traits: prediction {pred.shape} vs label {target.shape}")
    diff = pred.data - target
    n = diff.size

    def backward(g: np.ndarray) -> None:
        if pred.requires_grad:
            pred._accumulate(float(g) * 2.0 * diff / n)
        if isinstance(label, Tensor) and label.requires_grad:
            label._accumulate(-float(g) * 2.0 * diff / n)

    parents = (pred, label) if isinstance(label, Tensor) else (pred,)
    return _result(np.asarray(np.mean(diff * diff)), parents, "mse", backward)


def mean_of(values: Sequence[Tensor]) -> Tensor:
    """Mean of scalar tensors (batch loss)."""
    if not values:
        raise DimensionError("mean_of needs at least one value")
    total = values[0]
    for v in values[1:]:
        total = total + v
    return total * (1.0 / len(values))
