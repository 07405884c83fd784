"""
Tensor conventions and trainable parameters.

Tensors are plain ``numpy.ndarray`` values in row-major order. Training runs
in float32; ``precision("float64")`` switches newly created parameters and
inputs to float64 for finite-difference checks.
"""

import logging
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from ..errors import NumericError

logger = logging.getLogger(__name__)

Tensor = np.ndarray

_DTYPES = {"float32": np.float32, "float64": np.float64}
_current_dtype = np.float32


def get_dtype() -> type:
    """Return the dtype used for new parameters and inputs."""
    return _current_dtype


@contextmanager
def precision(name: str) -> Iterator[type]:
    """Temporarily switch the working precision ('float32' or 'float64')."""
    global _current_dtype
    if name not in _DTYPES:
        raise ValueError(f"Unknown precision '{name}', expected one of {sorted(_DTYPES)}")
    previous = _current_dtype
    _current_dtype = _DTYPES[name]
    try:
        yield _current_dtype
    finally:
        _current_dtype = previous


def as_tensor(values, dtype=None) -> Tensor:
    """Contiguous array in the working precision."""
    return np.ascontiguousarray(values, dtype=dtype or _current_dtype)


def check_finite(tensor: Tensor, where: str) -> Tensor:
    """Raise NumericError if the tensor holds NaN or Inf."""
    if not np.all(np.isfinite(tensor)):
        bad = int(np.size(tensor) - np.count_nonzero(np.isfinite(tensor)))
        raise NumericError(f"{bad} non-finite value(s) produced by {where}")
    return tensor


@dataclass
class ParamTensor:
    """A trainable value with its gradient and momentum buffer."""

    name: str
    value: Tensor
    grad: Tensor = field(init=False, repr=False)
    velocity: Tensor = field(init=False, repr=False)

    def __post_init__(self):
        self.value = np.ascontiguousarray(self.value)
        self.grad = np.zeros_like(self.value)
        self.velocity = np.zeros_like(self.value)

    @property
    def shape(self) -> tuple:
        return self.value.shape

    @property
    def size(self) -> int:
        return int(self.value.size)

    def zero_grad(self):
        self.grad.fill(0)

    def assign(self, values: Tensor):
        """Replace the value in place (shape must match), keeping the dtype."""
        values = np.asarray(values)
        if values.shape != self.value.shape:
            raise ValueError(f"{self.name}: shape {values.shape} != {self.value.shape}")
        self.value[...] = values

    def cast(self, dtype):
        self.value = self.value.astype(dtype)
        self.grad = self.grad.astype(dtype)
        self.velocity = self.velocity.astype(dtype)
