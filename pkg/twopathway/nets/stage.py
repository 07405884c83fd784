"""
The conv -> batchnorm -> relu -> maxpool stage shared by both pathways.
"""

from typing import Dict, List, Optional

import numpy as np

from ..core.layers import BatchNorm2d, Conv2d, Layer, MaxPool2x2, ReLU
from ..core.tensor import ParamTensor, Tensor
from ..errors import ShapeError


class Stage(Layer):
    """One stage; output spatial size is exactly half the input."""

    def __init__(self, in_channels: int, filters: int, kernel_size: int,
                 rng: Optional[np.random.Generator] = None, name: str = "stage0"):
        self.name = name
        self.conv = Conv2d(in_channels, filters, kernel_size, rng=rng, name=f"{name}.conv")
        self.bn = BatchNorm2d(filters, name=f"{name}.bn")
        self.relu = ReLU(name=f"{name}.relu")
        self.pool = MaxPool2x2(name=f"{name}.pool")
        self.layers: List[Layer] = [self.conv, self.bn, self.relu, self.pool]

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim == 4 and (x.shape[2] % 2 or x.shape[3] % 2):
            raise ShapeError(f"{self.name}: spatial size must be even, got {x.shape[2]}x{x.shape[3]}")
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, grad_out: Tensor) -> Tensor:
        for layer in reversed(self.layers):
            grad_out = layer.backward(grad_out)
        return grad_out

    def params(self) -> List[ParamTensor]:
        return self.conv.params() + self.bn.params()

    def buffers(self) -> Dict[str, Tensor]:
        return self.bn.buffers()

    def train(self):
        self.training = True
        for layer in self.layers:
            layer.train()

    def eval(self):
        self.training = False
        for layer in self.layers:
            layer.eval()


def stage_forward(stage: Stage, x: Tensor) -> Tensor:
    return stage.forward(x)
