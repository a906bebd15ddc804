"""SGD with momentum and weight decay.

Update rule per parameter:

    v <- momentum * v + grad + weight_decay * param
    param <- param - learning_rate * v

Gradients are cleared after the step.  A zero learning rate leaves
parameters bitwise unchanged (velocity state still advances).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import Tensor


class MissingGradient(RuntimeError):
    pass


@dataclass(frozen=True)
class SgdConfig:
    learning_rate: float
    momentum: float = 0.0
    weight_decay: float = 0.0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")


def sgd_step(params: list[Tensor], config: SgdConfig, state: dict) -> None:
    """Apply one SGD update to every parameter; mutates state['velocity']."""
    velocity = state.setdefault("velocity", [None] * len(params))
    if len(velocity) != len(params):
        raise ValueError("optimizer state does not match parameter list")
    lr = np.float32(config.learning_rate)
    mom = np.float32(config.momentum)
    wd = np.float32(config.weight_decay)
    for i, p in enumerate(params):
        if p.grad is None:
            raise MissingGradient(f"parameter {i} has no gradient")
        v = p.grad if velocity[i] is None else mom * velocity[i] + p.grad
        if wd:
            v = v + wd * p.data
        velocity[i] = v
        p.data = p.data - lr * v
        p.grad = None


class SGD:
    """Stateful wrapper around :func:`sgd_step` for a fixed parameter list."""

    def __init__(self, params: list[Tensor], config: SgdConfig):
        self.params = list(params)
        self.config = config
        self.state: dict = {}

    def step(self) -> None:
        sgd_step(self.params, self.config, self.state)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None
