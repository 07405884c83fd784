"""
Seeded mini-batch streams.
"""

from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

from .dataset import DatasetSplit


@dataclass
class Batch:
    indices: np.ndarray
    pixels: np.ndarray
    fine_labels: np.ndarray
    coarse_labels: Optional[np.ndarray]

    def labels(self, kind: str = "fine") -> np.ndarray:
        return self.fine_labels if kind == "fine" else self.coarse_labels

    def __len__(self) -> int:
        return len(self.indices)


def epoch_order(count: int, seed: int, epoch: int) -> np.ndarray:
    """Permutation of range(count) fixed by (seed, epoch)."""
    return np.random.default_rng([seed, epoch]).permutation(count)


def batches(split: DatasetSplit, batch_size: int, seed: int, epoch: int,
            shuffle: bool = True) -> Iterator[Batch]:
    """Yield batches in a per-epoch shuffled order; the final short batch is kept."""
    if batch_size < 1:
        raise ValueError(f"batch_size must be positive, got {batch_size}")
    order = epoch_order(len(split), seed, epoch) if shuffle else np.arange(len(split))
    for start in range(0, len(order), batch_size):
        index = order[start:start + batch_size]
        coarse = None if split.coarse_labels is None else split.coarse_labels[index]
        yield Batch(index, split.pixels[index], split.fine_labels[index], coarse)
