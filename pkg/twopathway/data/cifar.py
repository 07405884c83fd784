"""
CIFAR-10 / CIFAR-100 binary-format readers.

CIFAR-10 records are 3073 bytes (label, 3072 channel-planar pixels);
CIFAR-100 records are 3074 bytes (coarse label, fine label, pixels).
"""

import logging
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np

from ..errors import DatasetFormatError
from .dataset import Dataset, DatasetSplit

logger = logging.getLogger(__name__)

IMAGE_BYTES = 3 * 32 * 32
CIFAR10_RECORD = 1 + IMAGE_BYTES
CIFAR100_RECORD = 2 + IMAGE_BYTES

CIFAR10_TRAIN_FILES = [f"data_batch_{i}.bin" for i in range(1, 6)]
CIFAR10_TEST_FILE = "test_batch.bin"
CIFAR10_RECORDS_PER_FILE = 10000
CIFAR100_TRAIN_RECORDS = 50000
CIFAR100_TEST_RECORDS = 10000

CIFAR10_NAMES = ["airplane", "automobile", "bird", "cat", "deer",
                 "dog", "frog", "horse", "ship", "truck"]

PathLike = Union[str, Path]


def read_records(path: PathLike, label_bytes: int,
                 expected_records: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Read one binary file into (labels [N, label_bytes] uint8, pixels [N,3,32,32] uint8)."""
    path = Path(path)
    if not path.is_file():
        raise DatasetFormatError(f"missing CIFAR file: {path}")
    raw = np.fromfile(path, dtype=np.uint8)
    record = label_bytes + IMAGE_BYTES
    if raw.size == 0 or raw.size % record:
        raise DatasetFormatError(
            f"{path.name}: truncated file ({raw.size} bytes is not a multiple of {record})")
    count = raw.size // record
    if expected_records is not None and count != expected_records:
        raise DatasetFormatError(f"{path.name}: {count} records, expected {expected_records}")
    records = raw.reshape(count, record)
    return records[:, :label_bytes].copy(), records[:, label_bytes:].reshape(count, 3, 32, 32)


def _scale(pixels: np.ndarray) -> np.ndarray:
    return pixels.astype(np.float32) / np.float32(255.0)


def _resolve_root(root: PathLike, subdir: str, probe: str) -> Path:
    root = Path(root)
    if (root / probe).exists():
        return root
    if (root / subdir / probe).exists():
        return root / subdir
    raise DatasetFormatError(f"no '{probe}' under {root} or {root / subdir}")


def _read_names(path: Path, fallback: List[str]) -> List[str]:
    if path.is_file():
        names = [line.strip() for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]
        if len(names) == len(fallback):
            return names
        logger.warning(f"⚠️ {path.name} lists {len(names)} names, expected {len(fallback)}; using ids")
    return fallback


def load_cifar10_batch(path: PathLike, expected_records: Optional[int] = CIFAR10_RECORDS_PER_FILE,
                       class_names: Optional[List[str]] = None) -> DatasetSplit:
    """One CIFAR-10 batch file as a split."""
    labels, pixels = read_records(path, 1, expected_records)
    fine = labels[:, 0].astype(np.int64)
    if fine.size and fine.max() >= 10:
        raise DatasetFormatError(f"{Path(path).name}: label byte {fine.max()} outside [0,10)")
    return DatasetSplit(pixels=_scale(pixels), fine_labels=fine,
                        class_names=list(class_names or CIFAR10_NAMES))


def load_cifar10(path: PathLike, verify_counts: bool = True) -> Dataset:
    """Five training batches plus the test batch."""
    root = _resolve_root(path, "cifar-10-batches-bin", CIFAR10_TEST_FILE)
    names = _read_names(root / "batches.meta.txt", CIFAR10_NAMES)
    expected = CIFAR10_RECORDS_PER_FILE if verify_counts else None
    parts = [load_cifar10_batch(root / name, expected, names) for name in CIFAR10_TRAIN_FILES]
    train = DatasetSplit(pixels=np.concatenate([p.pixels for p in parts]),
                         fine_labels=np.concatenate([p.fine_labels for p in parts]),
                         class_names=names)
    test = load_cifar10_batch(root / CIFAR10_TEST_FILE, expected, names)
    return Dataset(train=train, test=test, kind="cifar10")


def load_cifar100_file(path: PathLike, expected_records: Optional[int] = None,
                       fine_names: Optional[List[str]] = None,
                       coarse_names: Optional[List[str]] = None) -> DatasetSplit:
    labels, pixels = read_records(path, 2, expected_records)
    coarse = labels[:, 0].astype(np.int64)
    fine = labels[:, 1].astype(np.int64)
    if fine.size and (fine.max() >= 100 or coarse.max() >= 20):
        raise DatasetFormatError(f"{Path(path).name}: label bytes outside CIFAR-100 ranges")
    return DatasetSplit(pixels=_scale(pixels), fine_labels=fine, coarse_labels=coarse,
                        class_names=list(fine_names or [str(i) for i in range(100)]),
                        coarse_names=list(coarse_names or [str(i) for i in range(20)]))


def load_cifar100(path: PathLike, verify_counts: bool = True) -> Dataset:
    """train.bin / test.bin with both super-class and fine labels."""
    root = _resolve_root(path, "cifar-100-binary", "test.bin")
    fine_names = _read_names(root / "fine_label_names.txt", [str(i) for i in range(100)])
    coarse_names = _read_names(root / "coarse_label_names.txt", [str(i) for i in range(20)])
    train = load_cifar100_file(root / "train.bin", CIFAR100_TRAIN_RECORDS if verify_counts else None,
                               fine_names, coarse_names)
    test = load_cifar100_file(root / "test.bin", CIFAR100_TEST_RECORDS if verify_counts else None,
                              fine_names, coarse_names)
    return Dataset(train=train, test=test, kind="cifar100")
