"""
Classification and imitation losses. Every loss returns its value together
with the gradients of its differentiable inputs.
"""

from typing import Tuple

import numpy as np

from ..errors import LabelError, ShapeError
from .tensor import Tensor


def softmax(logits: Tensor) -> Tensor:
    """Row-wise softmax with max-subtraction."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def log_softmax(logits: Tensor) -> Tensor:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def one_hot(labels, num_classes: int, dtype=np.float32) -> Tensor:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise LabelError(f"labels must lie in [0, {num_classes}), got range "
                         f"[{labels.min()}, {labels.max()}]")
    encoded = np.zeros((labels.shape[0], num_classes), dtype=dtype)
    encoded[np.arange(labels.shape[0]), labels] = 1
    return encoded


def _validate_onehot(onehot: Tensor, logits: Tensor):
    if onehot.shape != logits.shape or logits.ndim != 2:
        raise ShapeError(f"logits {logits.shape} and one-hot {onehot.shape} must both be [N,K]")
    ones = onehot == 1
    if not np.all(ones | (onehot == 0)) or not np.all(ones.sum(axis=1) == 1):
        bad = np.flatnonzero(~(np.all(ones | (onehot == 0), axis=1) & (ones.sum(axis=1) == 1)))
        raise LabelError(f"malformed one-hot row(s) at index {bad[:5].tolist()}")


def softmax_cross_entropy(logits: Tensor, onehot: Tensor) -> Tuple[float, Tensor]:
    """Mean cross-entropy of softmax(logits) against one-hot targets.

    Returns ``(loss, d_loss/d_logits)`` with the gradient ``(p - y) / N``.
    """
    _validate_onehot(onehot, logits)
    n = logits.shape[0]
    log_p = log_softmax(logits)
    loss = float(-(onehot * log_p).sum() / n)
    grad = (np.exp(log_p) - onehot) / n
    return loss, grad.astype(logits.dtype, copy=False)


def imitation_loss(coarse_logits: Tensor, coarse_features: Tensor, fine_features: Tensor,
                   onehot: Tensor, alpha: float) -> Tuple[float, Tensor, Tensor]:
    """Cross-entropy mixed with a feature-matching term.

    loss = alpha * CE(coarse_logits, y) + (1 - alpha) / 2 * mean_i ||gC_i - gF_i||^2

    ``fine_features`` is a constant target. Returns
    ``(loss, d_loss/d_logits, d_loss/d_coarse_features)``.
    """
    if coarse_features.shape != fine_features.shape:
        raise ShapeError(f"coarse features {coarse_features.shape} do not match "
                         f"fine targets {fine_features.shape}")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    n = coarse_features.shape[0]
    ce, grad_logits = softmax_cross_entropy(coarse_logits, onehot)
    residual = coarse_features - fine_features
    match = float((residual * residual).sum() / n)
    loss = alpha * ce + 0.5 * (1.0 - alpha) * match
    grad_features = ((1.0 - alpha) / n) * residual
    return loss, alpha * grad_logits, grad_features.astype(coarse_features.dtype, copy=False)
