"""
Layer primitives with explicit forward and backward kernels.

Each layer caches what its backward pass needs during ``forward``; ``backward``
takes the upstream gradient, accumulates parameter gradients (``+=``) and
returns the gradient with respect to the layer input.
"""

import logging
from abc import ABC, abstractmethod
from typing import Dict, List, Optional

import numpy as np

from ..errors import ShapeError
from .tensor import ParamTensor, Tensor, get_dtype

logger = logging.getLogger(__name__)


class Layer(ABC):
    """Abstract interface shared by every primitive."""

    name: str = "layer"
    training: bool = True

    @abstractmethod
    def forward(self, x: Tensor) -> Tensor:
        """Compute the layer output and cache what backward needs."""

    @abstractmethod
    def backward(self, grad_out: Tensor) -> Tensor:
        """Accumulate parameter gradients and return the input gradient."""

    def params(self) -> List[ParamTensor]:
        return []

    def buffers(self) -> Dict[str, Tensor]:
        """Non-trainable state that belongs in a checkpoint."""
        return {}

    def train(self):
        self.training = True

    def eval(self):
        self.training = False


class Conv2d(Layer):
    """Stride-1 2D convolution with zero padding ('same' by default).

    The kernel is applied as k*k shifted matrix products: for every kernel
    offset the padded input window is contracted with the (F, C) weight
    slice, which keeps memory at one output-sized buffer.
    """

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int,
                 rng: Optional[np.random.Generator] = None, padding: Optional[int] = None,
                 name: str = "conv"):
        if kernel_size < 1 or kernel_size % 2 == 0:
            raise ShapeError(f"{name}: kernel size must be odd, got {kernel_size}")
        self.name = name
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.padding = (kernel_size - 1) // 2 if padding is None else padding
        dtype = get_dtype()
        rng = rng if rng is not None else np.random.default_rng(0)
        std = np.sqrt(2.0 / (in_channels * kernel_size * kernel_size))
        weight = rng.standard_normal((out_channels, in_channels, kernel_size, kernel_size)) * std
        self.weight = ParamTensor(f"{name}.weight", weight.astype(dtype))
        self.bias = ParamTensor(f"{name}.bias", np.zeros(out_channels, dtype=dtype))
        self._padded: Optional[Tensor] = None
        self._out_hw = (0, 0)
        self._in_hw = (0, 0)

    def params(self) -> List[ParamTensor]:
        return [self.weight, self.bias]

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 4:
            raise ShapeError(f"{self.name}: expected input [N,C,H,W], got shape {x.shape}")
        if x.shape[1] != self.in_channels:
            raise ShapeError(
                f"{self.name}: input has {x.shape[1]} channels, kernels expect {self.in_channels}")
        n, _, h, w = x.shape
        k, p = self.kernel_size, self.padding
        out_h, out_w = h + 2 * p - k + 1, w + 2 * p - k + 1
        if out_h < 1 or out_w < 1:
            raise ShapeError(f"{self.name}: kernel {k} does not fit input {h}x{w}")
        padded = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
        weight = self.weight.value
        out = np.zeros((n, out_h, out_w, self.out_channels), dtype=np.result_type(x, weight))
        for i in range(k):
            for j in range(k):
                window = padded[:, :, i:i + out_h, j:j + out_w]
                out += np.tensordot(window, weight[:, :, i, j], axes=([1], [1]))
        out += self.bias.value
        self._padded = padded
        self._in_hw = (h, w)
        self._out_hw = (out_h, out_w)
        return np.ascontiguousarray(out.transpose(0, 3, 1, 2))

    def backward(self, grad_out: Tensor) -> Tensor:
        padded = self._padded
        k, p = self.kernel_size, self.padding
        out_h, out_w = self._out_hw
        h, w = self._in_hw
        weight = self.weight.value
        grad_nhwf = grad_out.transpose(0, 2, 3, 1)
        grad_padded = np.zeros(padded.shape, dtype=np.result_type(padded, grad_out))
        for i in range(k):
            for j in range(k):
                window = padded[:, :, i:i + out_h, j:j + out_w]
                self.weight.grad[:, :, i, j] += np.tensordot(
                    grad_nhwf, window, axes=([0, 1, 2], [0, 2, 3]))
                grad_padded[:, :, i:i + out_h, j:j + out_w] += np.tensordot(
                    grad_nhwf, weight[:, :, i, j], axes=([3], [0])).transpose(0, 3, 1, 2)
        self.bias.grad += grad_out.sum(axis=(0, 2, 3))
        return np.ascontiguousarray(grad_padded[:, :, p:p + h, p:p + w])


class BatchNorm2d(Layer):
    """Per-channel batch normalization over (N, H, W)."""

    def __init__(self, channels: int, eps: float = 1e-5, momentum: float = 0.1, name: str = "bn"):
        self.name = name
        self.channels = channels
        self.eps = eps
        self.momentum = momentum
        dtype = get_dtype()
        self.gamma = ParamTensor(f"{name}.gamma", np.ones(channels, dtype=dtype))
        self.beta = ParamTensor(f"{name}.beta", np.zeros(channels, dtype=dtype))
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self._cache = None

    def params(self) -> List[ParamTensor]:
        return [self.gamma, self.beta]

    def buffers(self) -> Dict[str, Tensor]:
        return {f"{self.name}.running_mean": self.running_mean,
                f"{self.name}.running_var": self.running_var}

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 4 or x.shape[1] != self.channels:
            raise ShapeError(f"{self.name}: expected [N,{self.channels},H,W], got {x.shape}")
        if self.training:
            if x.shape[0] < 2:
                raise ShapeError(f"{self.name}: batch norm needs N >= 2 in train mode, got {x.shape[0]}")
            count = x.shape[0] * x.shape[2] * x.shape[3]
            mean = x.mean(axis=(0, 2, 3))
            var = x.var(axis=(0, 2, 3))
            unbiased = var * (count / max(count - 1, 1))
            self.running_mean[...] = (1 - self.momentum) * self.running_mean + self.momentum * mean
            self.running_var[...] = (1 - self.momentum) * self.running_var + self.momentum * unbiased
        else:
            count = 0
            mean, var = self.running_mean, self.running_var
        inv_std = 1.0 / np.sqrt(var + self.eps)
        x_hat = (x - mean[None, :, None, None]) * inv_std[None, :, None, None]
        self._cache = (x_hat, inv_std, count, self.training)
        return self.gamma.value[None, :, None, None] * x_hat + self.beta.value[None, :, None, None]

    def backward(self, grad_out: Tensor) -> Tensor:
        x_hat, inv_std, count, was_training = self._cache
        axes = (0, 2, 3)
        self.gamma.grad += (grad_out * x_hat).sum(axis=axes)
        self.beta.grad += grad_out.sum(axis=axes)
        grad_hat = grad_out * self.gamma.value[None, :, None, None]
        if not was_training:
            return grad_hat * inv_std[None, :, None, None]
        sum_hat = grad_hat.sum(axis=axes)[None, :, None, None]
        sum_hat_x = (grad_hat * x_hat).sum(axis=axes)[None, :, None, None]
        return (inv_std[None, :, None, None] / count) * (count * grad_hat - sum_hat - x_hat * sum_hat_x)


class MaxPool2x2(Layer):
    """2x2 max-pooling with stride 2. Ties go to the first window position in scan order."""

    def __init__(self, name: str = "pool"):
        self.name = name
        self._argmax = None
        self._shape = None

    @staticmethod
    def _windows(x: Tensor) -> Tensor:
        n, f, h, w = x.shape
        return x.reshape(n, f, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(
            n, f, h // 2, w // 2, 4)

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 4:
            raise ShapeError(f"{self.name}: expected [N,F,H,W], got {x.shape}")
        if x.shape[2] % 2 or x.shape[3] % 2:
            raise ShapeError(f"{self.name}: spatial size must be even, got {x.shape[2]}x{x.shape[3]}")
        windows = self._windows(x)
        argmax = windows.argmax(axis=-1)
        self._argmax = argmax
        self._shape = x.shape
        return np.take_along_axis(windows, argmax[..., None], axis=-1)[..., 0]

    def backward(self, grad_out: Tensor) -> Tensor:
        n, f, h, w = self._shape
        routed = np.zeros((n, f, h // 2, w // 2, 4), dtype=grad_out.dtype)
        np.put_along_axis(routed, self._argmax[..., None], grad_out[..., None], axis=-1)
        return routed.reshape(n, f, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, f, h, w)


class Dense(Layer):
    """Fully-connected layer: out = x . W + b with W of shape [D, M]."""

    def __init__(self, in_features: int, out_features: int,
                 rng: Optional[np.random.Generator] = None, name: str = "dense"):
        self.name = name
        self.in_features = in_features
        self.out_features = out_features
        dtype = get_dtype()
        rng = rng if rng is not None else np.random.default_rng(0)
        weight = rng.standard_normal((in_features, out_features)) * np.sqrt(2.0 / in_features)
        self.weight = ParamTensor(f"{name}.weight", weight.astype(dtype))
        self.bias = ParamTensor(f"{name}.bias", np.zeros(out_features, dtype=dtype))
        self._x = None

    def params(self) -> List[ParamTensor]:
        return [self.weight, self.bias]

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ShapeError(f"{self.name}: expected [N,{self.in_features}], got {x.shape}")
        self._x = x
        return x @ self.weight.value + self.bias.value

    def backward(self, grad_out: Tensor) -> Tensor:
        self.weight.grad += self._x.T @ grad_out
        self.bias.grad += grad_out.sum(axis=0)
        return grad_out @ self.weight.value.T


class ReLU(Layer):
    """Elementwise max(0, x); the subgradient at 0 is 0."""

    def __init__(self, name: str = "relu"):
        self.name = name
        self._mask = None

    def forward(self, x: Tensor) -> Tensor:
        self._mask = x > 0
        return np.where(self._mask, x, 0).astype(x.dtype, copy=False)

    def backward(self, grad_out: Tensor) -> Tensor:
        return np.where(self._mask, grad_out, 0).astype(grad_out.dtype, copy=False)


class Flatten(Layer):
    """[N, ...] -> [N, D]."""

    def __init__(self, name: str = "flatten"):
        self.name = name
        self._shape = None

    def forward(self, x: Tensor) -> Tensor:
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad_out: Tensor) -> Tensor:
        return grad_out.reshape(self._shape)
