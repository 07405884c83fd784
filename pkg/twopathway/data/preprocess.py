"""
Pathway-specific image preprocessing.

FineNet sees the raw RGB image; CoarseNet sees a grayscale image that is
either Gaussian low-pass filtered or binarized. Every function works on a
single image [C,H,W] or a batch [N,C,H,W].
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, Literal

import numpy as np
from pydantic import BaseModel, Field, field_validator

from ..errors import CheckpointError

logger = logging.getLogger(__name__)

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])
_VIEW_CODES = {"raw": 0, "lowpass": 1, "binarized": 2}


def to_grayscale(rgb: np.ndarray) -> np.ndarray:
    """ITU-R 601 luma; the channel axis is third from the end and is kept with size 1."""
    if rgb.shape[-3] == 1:
        return rgb
    if rgb.shape[-3] != 3:
        raise ValueError(f"expected 3 colour channels, got shape {rgb.shape}")
    gray = np.tensordot(LUMA_WEIGHTS, np.moveaxis(rgb, -3, 0), axes=(0, 0))
    return np.expand_dims(gray, -3).astype(rgb.dtype, copy=False)


def gaussian_kernel1d(sigma: float) -> np.ndarray:
    """Normalized 1D Gaussian sampled on [-ceil(3 sigma), ceil(3 sigma)]."""
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    radius = max(int(math.ceil(3.0 * sigma)), 1)
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-0.5 * (offsets / sigma) ** 2)
    return kernel / kernel.sum()


def _filter_last_axis(values: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    radius = len(kernel) // 2
    pad = [(0, 0)] * (values.ndim - 1) + [(radius, radius)]
    # mirror padding repeats the edge sample
    padded = np.pad(values, pad, mode="symmetric")
    width = values.shape[-1]
    out = np.zeros_like(values)
    for offset, weight in enumerate(kernel):
        out += weight * padded[..., offset:offset + width]
    return out


def gaussian_lowpass(gray: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur: horizontal pass, then vertical pass."""
    kernel = gaussian_kernel1d(sigma)
    values = gray.astype(np.float64)
    blurred = _filter_last_axis(values, kernel)
    blurred = np.swapaxes(_filter_last_axis(np.swapaxes(blurred, -1, -2), kernel), -1, -2)
    return blurred.astype(gray.dtype, copy=False)


def binarize(gray: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    """1 where the value is strictly above the threshold, else 0."""
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    return (gray > threshold).astype(gray.dtype)


class InputView(BaseModel):
    """What a pathway sees of the raw image."""

    kind: Literal["raw", "lowpass", "binarized"] = "raw"
    sigma: float = Field(default=2.0, gt=0)
    threshold: float = Field(default=0.5, gt=0, lt=1)

    @field_validator("kind", mode="before")
    @classmethod
    def _lower(cls, value):
        return value.lower() if isinstance(value, str) else value

    def channels(self, source_channels: int) -> int:
        return source_channels if self.kind == "raw" else 1

    def apply(self, pixels: np.ndarray) -> np.ndarray:
        if self.kind == "raw":
            return pixels
        gray = to_grayscale(pixels)
        if self.kind == "lowpass":
            return gaussian_lowpass(gray, self.sigma)
        return binarize(gray, self.threshold)

    def label(self) -> str:
        if self.kind == "lowpass":
            return f"LPF{self.sigma:g}"
        if self.kind == "binarized":
            return f"BIN{self.threshold:g}"
        return "RGB"

    def to_tensor(self) -> np.ndarray:
        return np.array([_VIEW_CODES[self.kind], self.sigma, self.threshold], dtype=np.float32)

    @classmethod
    def from_tensor(cls, values: np.ndarray) -> "InputView":
        kinds = {code: kind for kind, code in _VIEW_CODES.items()}
        code = int(round(float(values[0])))
        if code not in kinds:
            raise CheckpointError(f"unknown input view code {code}")
        return cls(kind=kinds[code], sigma=float(values[1]), threshold=float(values[2]))


@dataclass
class Normalizer:
    """Channel-wise standardization with statistics from the training split."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, pixels: np.ndarray) -> "Normalizer":
        values = pixels.astype(np.float64)
        std = values.std(axis=(0, 2, 3))
        std[std < 1e-8] = 1.0
        # stored as float32 in checkpoints; keep fresh and reloaded pathways identical
        mean = values.mean(axis=(0, 2, 3)).astype(np.float32).astype(np.float64)
        return cls(mean=mean, std=std.astype(np.float32).astype(np.float64))

    def __call__(self, pixels: np.ndarray) -> np.ndarray:
        mean = self.mean.astype(pixels.dtype)[:, None, None]
        std = self.std.astype(pixels.dtype)[:, None, None]
        return (pixels - mean) / std

    def input_scale(self, dtype=np.float32) -> np.ndarray:
        """d(normalized)/d(raw) per channel, broadcastable over [N,C,H,W]."""
        return (1.0 / self.std).astype(dtype)[None, :, None, None]

    def state(self, prefix: str) -> Dict[str, np.ndarray]:
        return {f"{prefix}.mean": self.mean.astype(np.float32),
                f"{prefix}.std": self.std.astype(np.float32)}

    @classmethod
    def from_state(cls, tensors: Dict[str, np.ndarray], prefix: str) -> "Normalizer":
        try:
            return cls(mean=tensors[f"{prefix}.mean"].astype(np.float64),
                       std=tensors[f"{prefix}.std"].astype(np.float64))
        except KeyError as e:
            raise CheckpointError(f"checkpoint lacks normalizer tensor {e}")
