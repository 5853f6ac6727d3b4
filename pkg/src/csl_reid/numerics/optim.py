"""Momentum SGD with selective weight decay."""

import logging
from typing import Dict, Iterable

import numpy as np

from csl_reid.numerics.tensor import ParamTensor

logger = logging.getLogger(__name__)


class SGD:
    """Stochastic gradient descent with momentum and L2 weight decay.

    The update follows ``v = momentum * v + (grad + wd * p)``, ``p -= lr * v``.
    Parameters flagged ``decay=False`` (batch-norm affine terms, biases) skip
    the decay term when ``exclude_no_decay`` is set.
    """

    def __init__(
        self,
        params: Iterable[ParamTensor],
        momentum: float = 0.9,
        weight_decay: float = 5e-4,
        exclude_no_decay: bool = True,
    ):
        self.params = [p for p in params if p.trainable]
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.exclude_no_decay = exclude_no_decay
        self.velocity: Dict[str, np.ndarray] = {p.name: np.zeros_like(p.data) for p in self.params}

    def no_decay_names(self):
        if not self.exclude_no_decay:
            return []
        return [p.name for p in self.params if not p.decay]

    def zero_grad(self) -> None:
        for param in self.params:
            param.zero_grad()

    def step(self, lr: float) -> None:
        for param in self.params:
            grad = param.grad
            if self.weight_decay and (param.decay or not self.exclude_no_decay):
                grad = grad + self.weight_decay * param.data
            velocity = self.velocity[param.name]
            velocity *= self.momentum
            velocity += grad
            param.data -= lr * velocity
