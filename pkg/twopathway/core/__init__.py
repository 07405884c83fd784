"""Numeric core: tensors, layer kernels, losses, optimizer, gradient checks, checkpoints."""

from .checkpoint import load_checkpoint, save_checkpoint
from .layers import BatchNorm2d, Conv2d, Dense, Flatten, Layer, MaxPool2x2, ReLU
from .losses import imitation_loss, one_hot, softmax, softmax_cross_entropy
from .optim import StepSchedule, sgd_momentum_step
from .tensor import ParamTensor, Tensor, check_finite, get_dtype, precision

__all__ = [
    "BatchNorm2d", "Conv2d", "Dense", "Flatten", "Layer", "MaxPool2x2", "ReLU",
    "ParamTensor", "StepSchedule", "Tensor",
    "check_finite", "get_dtype", "imitation_loss", "load_checkpoint", "one_hot",
    "precision", "save_checkpoint", "sgd_momentum_step", "softmax", "softmax_cross_entropy",
]
