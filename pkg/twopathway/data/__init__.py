"""Dataset ingestion and two-pathway preprocessing."""

import logging
import os
from pathlib import Path
from typing import Union

from ..errors import ConfigError
from .batching import Batch, batches, epoch_order
from .cifar import load_cifar10, load_cifar10_batch, load_cifar100
from .dataset import Dataset, DatasetSplit, LabeledImage
from .masks import load_mask_dataset, read_pgm, write_pnm
from .preprocess import InputView, Normalizer, binarize, gaussian_lowpass, to_grayscale
from .subsets import (SuperclassMapping, class_quotas, desk_subset, restrict_classes, sample_superclass_subset,
                      take_per_class, take_total)

logger = logging.getLogger(__name__)

LOADERS = {"cifar10": load_cifar10, "cifar100": load_cifar100}


def load_dataset(kind: str, path: Union[str, os.PathLike], verify_counts: bool = True) -> Dataset:
    """Dispatch on dataset kind: cifar10 | cifar100 | masks."""
    kind = kind.lower()
    path = Path(path)
    if kind == "masks":
        return load_mask_dataset(path)
    if kind not in LOADERS:
        raise ConfigError(f"unknown dataset kind '{kind}' (expected cifar10, cifar100 or masks)")
    return LOADERS[kind](path, verify_counts=verify_counts)


__all__ = [
    "Batch", "Dataset", "DatasetSplit", "InputView", "LabeledImage", "Normalizer",
    "SuperclassMapping", "batches", "binarize", "class_quotas", "desk_subset", "epoch_order", "gaussian_lowpass",
    "load_cifar10", "load_cifar10_batch", "load_cifar100", "load_dataset", "load_mask_dataset",
    "read_pgm", "restrict_classes", "sample_superclass_subset", "take_per_class", "take_total",
    "to_grayscale", "write_pnm",
]
