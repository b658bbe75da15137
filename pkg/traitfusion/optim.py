"""Adam with bias correction, keyed by parameter name.

Frozen parameters are skipped entirely, so they stay bit-identical no matter
how many steps run.
"""

from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Sequence

import numpy as np

from .autograd import Parameter
from .errors import DimensionError, ParameterError


@dataclass
class AdamState:
    """Moment estimates and step counter for one optimisation run.

    Attributes:
        lr: Step size.
        beta1: Decay of the first-moment estimate.
        beta2: Decay of the second-moment estimate.
        epsilon: Added to the denominator.
        t: Number of steps taken so far.
        m: First moments, keyed by parameter name.
        v: Second moments, keyed by parameter name.
    """
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    t: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.lr <= 0:
            raise ParameterError(f"Adam lr must be positive, got {self.lr}")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ParameterError(
                f"Adam betas must be in [0, 1), got {self.beta1}, {self.beta2}"
            )
        if self.epsilon <= 0:
            raise ParameterError(f"Adam epsilon must be positive, got {self.epsilon}")


def adam_step(
    params: Sequence[Parameter],
    state: AdamState,
    grads: Optional[Mapping[str, np.ndarray]] = None,
) -> AdamState:
    """Apply one Adam update in place and return the (mutated) state.

    Gradients come from ``grads`` when given, otherwise from each parameter's
    ``.grad``; a missing gradient counts as zero. ``state.t`` increments by
    exactly one per call.
    """
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    step_size = state.lr / bc1
    for param in params:
        if param.frozen:
            continue
        g = grads.get(param.name) if grads is not None else param.grad
        if g is None:
            g = np.zeros_like(param.data)
        if g.shape != param.data.shape:
            raise DimensionError(
                f"gradient for {param.name} has shape {g.shape}, parameter has {param.data.shape}"
            )
        m = state.m.setdefault(param.name, np.zeros_like(param.data))
        v = state.v.setdefault(param.name, np.zeros_like(param.data))
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        param.data -= step_size * m / (np.sqrt(v / bc2) + state.epsilon)
    return state


class Adam:
    """Adam over a fixed parameter list.

    Usage:
        opt = Adam(model.trainable_parameters(), lr=1e-3)
        loss.backward()
        opt.step()
    """

    def __init__(self, params: Sequence[Parameter], lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, epsilon: float = 1e-8):
        self.params = list(params)
        self.state = AdamState(lr=lr, beta1=beta1, beta2=beta2, epsilon=epsilon)

    def step(self) -> None:
        adam_step(self.params, self.state)

    def zero_grad(self) -> None:
        for param in self.params:
            param.zero_grad()
