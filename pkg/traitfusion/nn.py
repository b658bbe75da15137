"""
Parameter containers shared by the channel networks and the fusion head.

``Module`` keeps an ordered, name-unique registry of ``Parameter`` objects
(its own plus those of child modules), creates them with seeded Glorot
initialisation, and supports freezing, gradient reset and in-memory
snapshots for best-epoch checkpointing.
"""

import math
from typing import Dict, Iterable, List, Mapping, Optional, Tuple

import numpy as np

from .autograd import Parameter
from .errors import DimensionError, ParameterError


def glorot_limit(fan_in: int, fan_out: int) -> float:
    """``sqrt(6 / (fan_in + fan_out))``."""
    return math.sqrt(6.0 / (fan_in + fan_out))


def glorot_uniform(
    shape: Tuple[int, ...], fan_in: int, fan_out: int, rng: np.random.Generator
) -> np.ndarray:
    limit = glorot_limit(fan_in, fan_out)
    return rng.uniform(-limit, limit, size=shape)


class Module:
    """Base class for parameterised networks.

    Attributes:
        prefix: Name prefix of every parameter this module creates
            (e.g. ``"audio"`` gives ``"audio.conv1.kernels"``).
    """

    def __init__(self, prefix: str):
        self.prefix = prefix
        self._params: Dict[str, Parameter] = {}
        self._children: List["Module"] = []

    # ------------------------------------------------------------------
    # Registry
    # ------------------------------------------------------------------

    def _register(self, param: Parameter) -> Parameter:
        if param.name in self.named_parameters():
            raise ParameterError(f"duplicate parameter name: {param.name}")
        self._params[param.name] = param
        return param

    def add_child(self, child: "Module") -> "Module":
        clash = set(child.named_parameters()) & set(self.named_parameters())
        if clash:
            raise ParameterError(f"duplicate parameter names: {', '.join(sorted(clash))}")
        self._children.append(child)
        return child

    def dense(self, name: str, n_in: int, n_out: int,
              rng: np.random.Generator) -> Tuple[Parameter, Parameter]:
        """Create ``<prefix>.<name>.weights [n_out x n_in]`` and ``.bias [n_out]``."""
        weights = self._register(Parameter(
            glorot_uniform((n_out, n_in), n_in, n_out, rng), f"{self.prefix}.{name}.weights"))
        bias = self._register(Parameter(np.zeros(n_out), f"{self.prefix}.{name}.bias"))
        return weights, bias

    def conv(self, name: str, shape: Tuple[int, ...],
             rng: np.random.Generator) -> Tuple[Parameter, Parameter]:
        """Create conv kernels ``[C_out x C_in x *window]`` and bias ``[C_out]``.

        Fan-in is ``C_in * prod(window)``; fan-out is ``C_out * prod(window)``.
        """
        c_out, c_in, *window = shape
        receptive = int(np.prod(window))
        kernels = self._register(Parameter(
            glorot_uniform(tuple(shape), c_in * receptive, c_out * receptive, rng),
            f"{self.prefix}.{name}.kernels"))
        bias = self._register(Parameter(np.zeros(c_out), f"{self.prefix}.{name}.bias"))
        return kernels, bias

    def vector(self, name: str, values: np.ndarray) -> Parameter:
        return self._register(Parameter(values, f"{self.prefix}.{name}"))

    def named_parameters(self) -> Dict[str, Parameter]:
        named = dict(self._params)
        for child in self._children:
            named.update(child.named_parameters())
        return named

    def parameters(self) -> List[Parameter]:
        return list(self.named_parameters().values())

    def trainable_parameters(self) -> List[Parameter]:
        return [p for p in self.parameters() if not p.frozen]

    def parameter_count(self, trainable_only: bool = False) -> int:
        params = self.trainable_parameters() if trainable_only else self.parameters()
        return sum(p.size for p in params)

    # ------------------------------------------------------------------
    # Freezing and gradients
    # ------------------------------------------------------------------

    def set_frozen(self, frozen: bool, names: Optional[Iterable[str]] = None) -> None:
        """Freeze (or unfreeze) the named parameters, or all of them."""
        named = self.named_parameters()
        targets = named.keys() if names is None else list(names)
        for name in targets:
            if name not in named:
                raise ParameterError(f"unknown parameter: {name}")
            named[name].frozen = frozen

    def zero_grad(self) -> None:
        for param in self.parameters():
            param.zero_grad()

    # ------------------------------------------------------------------
    # Snapshots
    # ------------------------------------------------------------------

    def snapshot(self) -> Dict[str, np.ndarray]:
        """Copy of every parameter value, keyed by name."""
        return {name: p.data.copy() for name, p in self.named_parameters().items()}

    def restore(self, values: Mapping[str, np.ndarray]) -> None:
        """Overwrite parameter values in place from a snapshot."""
        named = self.named_parameters()
        missing = set(named) - set(values)
        if missing:
            raise ParameterError(f"snapshot lacks parameters: {', '.join(sorted(missing))}")
        for name, param in named.items():
            value = np.asarray(values[name], dtype=np.float64)
            if value.shape != param.shape:
                raise DimensionError(
                    f"snapshot value for {name} has shape {value.shape}, expected {param.shape}"
                )
            param.data[...] = value

    def frozen_flags(self) -> Dict[str, bool]:
        return {name: p.frozen for name, p in self.named_parameters().items()}

    def apply_frozen_flags(self, flags: Mapping[str, bool]) -> None:
        named = self.named_parameters()
        for name, frozen in flags.items():
            if name in named:
                named[name].frozen = frozen
