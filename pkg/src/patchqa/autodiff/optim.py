import math
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, DomainError


def cosine_lr(step, total_steps, base_lr):
    """Cosine-decayed learning rate; steps past ``total_steps`` give 0."""
    if total_steps <= 0:
        raise DomainError("total_steps must be positive")
    if step >= total_steps:
        return 0.0
    step = max(step, 0)
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * step / total_steps))


@dataclass
class OptimizerState:
    base_lr: float = 1e-4
    step: int = 0
    total_steps: int = 1
    momentum: float = 0.9

    @property
    def lr(self):
        return cosine_lr(self.step, self.total_steps, self.base_lr)


class SGD:
    """Heavy-ball SGD with a cosine learning-rate schedule.

    ``v <- momentum * v + grad``; ``p <- p - lr(step) * v``.
    """

    def __init__(self, params, base_lr=1e-4, total_steps=1, momentum=0.9):
        if not 0.0 <= momentum < 1.0:
            raise ConfigError("momentum must lie in [0, 1)")
        self.params = list(params)
        self.state = OptimizerState(base_lr=base_lr, total_steps=total_steps, momentum=momentum)
        self.velocity = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        lr = self.state.lr
        sgd_step(self.params, self.state, self.velocity)
        return lr


def sgd_step(params, state, velocity):
    """Apply one update in place to ``params`` and advance ``state.step``."""
    lr = state.lr
    for p, v in zip(params, velocity):
        if p.grad is None:
            continue
        v *= state.momentum
        v += p.grad
        p.data -= lr * v
    state.step += 1
    return state
