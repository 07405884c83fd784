"""
Central finite-difference checks for analytic gradients.

All checks expect float64 tensors. A coordinate whose one-sided differences
disagree (the perturbation crossed a ReLU kink or a max-pool tie) is skipped
and counted rather than compared.
"""

import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .layers import Layer
from .tensor import Tensor

logger = logging.getLogger(__name__)

KINK_TOLERANCE = 1e-2


@dataclass
class GradCheckResult:
    name: str
    max_relative_error: float = 0.0
    checked: int = 0
    skipped: int = 0
    worst: str = ""

    def passed(self, tolerance: float = 1e-4) -> bool:
        return self.checked > 0 and self.max_relative_error < tolerance

    def merge(self, other: "GradCheckResult") -> "GradCheckResult":
        if other.max_relative_error > self.max_relative_error:
            self.max_relative_error = other.max_relative_error
            self.worst = other.worst
        self.checked += other.checked
        self.skipped += other.skipped
        return self


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)


def _coords(array: Tensor, rng: np.random.Generator, max_coords: Optional[int]) -> np.ndarray:
    count = array.size
    if max_coords is None or count <= max_coords:
        return np.arange(count)
    return np.sort(rng.choice(count, size=max_coords, replace=False))


def check_scalar_function(name: str, evaluate: Callable[[], float],
                          targets: Sequence[Tuple[str, Tensor, Tensor]],
                          epsilon: float = 1e-5, rng: Optional[np.random.Generator] = None,
                          max_coords: Optional[int] = 64) -> GradCheckResult:
    """Compare analytic gradients of a scalar function with central differences.

    ``targets`` holds ``(label, array, analytic_gradient)``; each array is
    perturbed in place and restored, and ``evaluate`` must read it.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    result = GradCheckResult(name=name)
    baseline = evaluate()
    for label, array, analytic in targets:
        if array.dtype != np.float64:
            raise TypeError(f"{name}/{label}: gradient checks need float64, got {array.dtype}")
        flat = array.reshape(-1)
        flat_grad = np.asarray(analytic).reshape(-1)
        for index in _coords(array, rng, max_coords):
            original = flat[index]
            flat[index] = original + epsilon
            plus = evaluate()
            flat[index] = original - epsilon
            minus = evaluate()
            flat[index] = original
            forward_side = (plus - baseline) / epsilon
            backward_side = (baseline - minus) / epsilon
            if abs(forward_side - backward_side) > KINK_TOLERANCE * max(
                    abs(forward_side), abs(backward_side)) + 1e-6:
                result.skipped += 1
                continue
            central = (plus - minus) / (2 * epsilon)
            error = relative_error(float(flat_grad[index]), central)
            result.checked += 1
            if error > result.max_relative_error:
                result.max_relative_error = error
                result.worst = f"{label}[{index}]"
    return result


def check_layer(layer: Layer, x: Tensor, epsilon: float = 1e-5, seed: int = 0,
                max_coords: Optional[int] = 64) -> GradCheckResult:
    """Check input and parameter gradients of ``sum(layer(x) * R)`` for a random R."""
    rng = np.random.default_rng(seed)
    x = np.array(x, dtype=np.float64)
    for param in layer.params():
        param.zero_grad()
    out = layer.forward(x)
    upstream = rng.standard_normal(out.shape)
    grad_x = layer.backward(upstream)
    targets: List[Tuple[str, Tensor, Tensor]] = [("input", x, grad_x)]
    targets += [(param.name, param.value, param.grad.copy()) for param in layer.params()]

    def evaluate() -> float:
        return float((layer.forward(x) * upstream).sum())

    return check_scalar_function(getattr(layer, "name", type(layer).__name__), evaluate, targets,
                                 epsilon=epsilon, rng=rng, max_coords=max_coords)


def finite_difference_check(layer: Layer, x: Tensor, epsilon: float = 1e-5, seed: int = 0) -> float:
    """Max relative error between analytic and central-difference gradients."""
    return check_layer(layer, x, epsilon=epsilon, seed=seed).max_relative_error
