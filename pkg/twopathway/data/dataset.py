"""
In-memory dataset containers shared by the loaders and the pathways.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import List, NamedTuple, Optional, Sequence

import numpy as np

from ..errors import DatasetFormatError, LabelError

logger = logging.getLogger(__name__)


class LabeledImage(NamedTuple):
    pixels: np.ndarray
    fine_label: int
    coarse_label: Optional[int]


@dataclass
class DatasetSplit:
    """Images as one [N,C,32,32] float32 block in [0,1] plus integer labels."""

    pixels: np.ndarray
    fine_labels: np.ndarray
    class_names: List[str]
    coarse_labels: Optional[np.ndarray] = None
    coarse_names: List[str] = field(default_factory=list)
    channel_mean: Optional[np.ndarray] = None
    channel_std: Optional[np.ndarray] = None

    def __post_init__(self):
        self.fine_labels = np.asarray(self.fine_labels, dtype=np.int64)
        if self.coarse_labels is not None:
            self.coarse_labels = np.asarray(self.coarse_labels, dtype=np.int64)
        if len(self.fine_labels) != len(self.pixels):
            raise LabelError(f"{len(self.pixels)} images but {len(self.fine_labels)} labels")
        if len(self.fine_labels) and self.fine_labels.max() >= len(self.class_names):
            raise LabelError(f"fine label {self.fine_labels.max()} >= {len(self.class_names)} classes")
        if self.pixels.size:
            low, high = float(self.pixels.min()), float(self.pixels.max())
            if low < 0.0 or high > 1.0:
                raise DatasetFormatError(f"pixel values span [{low:g}, {high:g}], expected [0, 1]")

    def __len__(self) -> int:
        return len(self.fine_labels)

    def __getitem__(self, index: int) -> LabeledImage:
        coarse = None if self.coarse_labels is None else int(self.coarse_labels[index])
        return LabeledImage(self.pixels[index], int(self.fine_labels[index]), coarse)

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    @property
    def num_coarse_classes(self) -> int:
        return len(self.coarse_names)

    @property
    def channels(self) -> int:
        return int(self.pixels.shape[1])

    def labels(self, kind: str = "fine") -> np.ndarray:
        if kind == "fine":
            return self.fine_labels
        if kind == "coarse":
            if self.coarse_labels is None:
                raise LabelError("this split carries no super-class labels")
            return self.coarse_labels
        raise ValueError(f"label kind must be 'fine' or 'coarse', got '{kind}'")

    def label_count(self, kind: str = "fine") -> int:
        return self.num_classes if kind == "fine" else self.num_coarse_classes

    def take(self, indices: Sequence[int]) -> "DatasetSplit":
        indices = np.asarray(indices, dtype=np.int64)
        coarse = None if self.coarse_labels is None else self.coarse_labels[indices]
        return replace(self, pixels=self.pixels[indices], fine_labels=self.fine_labels[indices],
                       coarse_labels=coarse)

    def with_pixels(self, pixels: np.ndarray) -> "DatasetSplit":
        """Same labels and statistics over replaced (e.g. corrupted) pixels."""
        if pixels.shape[0] != len(self):
            raise LabelError(f"pixel block holds {pixels.shape[0]} images, split has {len(self)}")
        return replace(self, pixels=pixels)


def channel_statistics(pixels: np.ndarray):
    """Per-channel mean and standard deviation over (N, H, W)."""
    values = pixels.astype(np.float64)
    return values.mean(axis=(0, 2, 3)), values.std(axis=(0, 2, 3))


@dataclass
class Dataset:
    """A train/test pair; channel statistics always come from the training split."""

    train: DatasetSplit
    test: DatasetSplit
    kind: str = "cifar10"

    def __post_init__(self):
        mean, std = channel_statistics(self.train.pixels)
        for split in (self.train, self.test):
            split.channel_mean = mean
            split.channel_std = std
        logger.info(f"✓ {self.kind}: {len(self.train)} train / {len(self.test)} test images, "
                    f"{self.train.num_classes} classes")

    @property
    def has_rgb(self) -> bool:
        return self.train.channels == 3
