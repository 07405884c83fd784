"""
SGD with momentum and the step learning-rate schedule.
"""

import bisect
import logging
from typing import Iterable, Sequence

from .tensor import ParamTensor

logger = logging.getLogger(__name__)


def sgd_momentum_step(params: Iterable[ParamTensor], lr: float, momentum: float):
    """velocity <- momentum * velocity + grad; value <- value - lr * velocity; grad <- 0."""
    for param in params:
        param.velocity *= momentum
        param.velocity += param.grad
        param.value -= lr * param.velocity
        param.zero_grad()


class StepSchedule:
    """Base learning rate multiplied by ``factor`` at every milestone epoch reached."""

    def __init__(self, base_lr: float, milestones: Sequence[int] = (), factor: float = 0.1):
        self.base_lr = base_lr
        self.milestones = sorted(milestones)
        self.factor = factor

    def lr_at(self, epoch: int) -> float:
        drops = bisect.bisect_right(self.milestones, epoch)
        return self.base_lr * self.factor ** drops

    def __repr__(self):
        return f"StepSchedule(lr={self.base_lr}, milestones={self.milestones}, factor={self.factor})"
