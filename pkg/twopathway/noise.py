"""
Image corruption models, applied to raw [0,1] pixels before either
pathway's preprocessing: uniform noise, salt-and-pepper noise and FGSM.
"""

import logging
import math
from abc import ABC, abstractmethod
from typing import Literal, Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field, model_validator

from .core.losses import one_hot, softmax_cross_entropy
from .errors import ConfigError
from .harness.seeds import image_seed
from .nets.pathway import Pathway

logger = logging.getLogger(__name__)

FGSM_BATCH = 128


class NoiseSpec(BaseModel):
    kind: Literal["uniform", "salt_pepper", "fgsm"] = "uniform"
    level: float = Field(default=0.0, ge=0)
    seed: int = 0

    @model_validator(mode="after")
    def _check_level(self):
        if self.kind == "salt_pepper" and self.level > 1:
            raise ValueError(f"salt-and-pepper proportion must lie in [0, 1], got {self.level}")
        return self

    def label(self) -> str:
        return f"{self.kind}@{self.level:g}"


def add_uniform(image: np.ndarray, U: float, rng: np.random.Generator) -> np.ndarray:
    """Add independent Uniform[-U, U] noise per pixel and channel, then clip to [0, 1]."""
    if U < 0:
        raise ValueError(f"uniform noise width must be non-negative, got {U}")
    if U == 0:
        return image.copy()
    noise = rng.uniform(-U, U, size=image.shape)
    return np.clip(image + noise, 0.0, 1.0).astype(image.dtype)


def add_salt_pepper(image: np.ndarray, p: float, rng: np.random.Generator) -> np.ndarray:
    """Set round(p*H*W) whole pixels of a [C,H,W] image to white or black (equal odds)."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"salt-and-pepper proportion must lie in [0, 1], got {p}")
    out = image.copy()
    _, height, width = image.shape
    count = int(math.floor(p * height * width + 0.5))
    if count == 0:
        return out
    positions = rng.choice(height * width, size=count, replace=False)
    values = rng.integers(0, 2, size=count).astype(image.dtype)
    rows, cols = np.divmod(positions, width)
    out[:, rows, cols] = values[None, :]
    return out


def fgsm(pathway: Pathway, images: np.ndarray, labels: np.ndarray, epsilon: float) -> np.ndarray:
    """Single-step white-box attack: clip(x + eps * sign(grad_x CE), 0, 1).

    The gradient is taken with respect to the normalized input and mapped back
    to raw pixel space through the pathway's normalizer.
    """
    if epsilon < 0:
        raise ValueError(f"FGSM epsilon must be non-negative, got {epsilon}")
    if epsilon == 0:
        return images.copy()
    grad = input_gradient(pathway, images, labels)
    return np.clip(images + epsilon * np.sign(grad), 0.0, 1.0).astype(images.dtype)


def input_gradient(pathway: Pathway, images: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """d CE / d raw pixels for a batch, with the network in eval mode. Leaves parameter grads at zero."""
    net = pathway.net
    net.eval()
    _, logits = net.forward(pathway.prepare(images))
    onehot = one_hot(labels, net.spec.num_classes, dtype=logits.dtype)
    _, grad_logits = softmax_cross_entropy(logits, onehot)
    grad = pathway.input_gradient_to_raw(net.backward(grad_logits))
    for param in net.parameters():
        param.zero_grad()
    return grad


class NoiseModel(ABC):
    """Abstract corruption applied to a block of raw images."""

    def __init__(self, spec: NoiseSpec):
        self.spec = spec

    @abstractmethod
    def corrupt(self, images: np.ndarray, labels: np.ndarray,
                indices: Optional[Sequence[int]] = None) -> np.ndarray:
        """Corrupted copy of [N,C,H,W] images; ``indices`` are dataset positions for seeding."""

    def get_kind(self) -> str:
        return self.spec.kind

    def get_level(self) -> float:
        return self.spec.level


class _SeededNoise(NoiseModel):
    """Per-image generators seeded from (spec.seed, image index)."""

    def corrupt(self, images, labels, indices=None):
        indices = np.arange(len(images)) if indices is None else np.asarray(indices)
        out = np.empty_like(images)
        for position, (image, index) in enumerate(zip(images, indices)):
            rng = np.random.default_rng(image_seed(self.spec.seed, int(index)))
            out[position] = self._corrupt_one(image, rng)
        return out

    @abstractmethod
    def _corrupt_one(self, image: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        pass


class UniformNoise(_SeededNoise):
    def _corrupt_one(self, image, rng):
        return add_uniform(image, self.spec.level, rng)


class SaltPepperNoise(_SeededNoise):
    def _corrupt_one(self, image, rng):
        return add_salt_pepper(image, self.spec.level, rng)


class FgsmNoise(NoiseModel):
    """FGSM crafted against a FineNet; the same images are then shown to every pathway."""

    def __init__(self, spec: NoiseSpec, target: Pathway):
        super().__init__(spec)
        if target.view.kind != "raw":
            raise ConfigError("FGSM attacks the raw-input FineNet; got a "
                              f"'{target.view.kind}' pathway")
        self.target = target

    def corrupt(self, images, labels, indices=None):
        parts = [fgsm(self.target, images[start:start + FGSM_BATCH], labels[start:start + FGSM_BATCH],
                      self.spec.level)
                 for start in range(0, len(images), FGSM_BATCH)]
        return np.concatenate(parts) if parts else images.copy()


def create_noise_model(spec: NoiseSpec, fine: Optional[Pathway] = None) -> NoiseModel:
    """Factory keyed on ``spec.kind``; FGSM needs the attacked FineNet."""
    if spec.kind == "uniform":
        return UniformNoise(spec)
    if spec.kind == "salt_pepper":
        return SaltPepperNoise(spec)
    if spec.kind == "fgsm":
        if fine is None:
            raise ConfigError("FGSM noise needs a FineNet checkpoint to attack")
        return FgsmNoise(spec, fine)
    raise ConfigError(f"unknown noise kind '{spec.kind}' (available: uniform, salt_pepper, fgsm)")


def corrupt_images(images: np.ndarray, labels: np.ndarray, spec: Optional[NoiseSpec],
                   fine: Optional[Pathway] = None, indices: Optional[Sequence[int]] = None) -> np.ndarray:
    """Apply ``spec`` (None = clean) to a block of raw images."""
    if spec is None:
        return images
    logger.debug(f"Corrupting {len(images)} images with {spec.label()}")
    return create_noise_model(spec, fine).corrupt(images, labels, indices)
