"""
Binary-mask dataset ingestion: raw PGM (P5) files named <classid>_<index>.pgm,
laid out as <root>/train/*.pgm and <root>/test/*.pgm.
"""

import logging
import re
from pathlib import Path
from typing import List, Tuple, Union

import numpy as np

from ..errors import DatasetFormatError
from .dataset import Dataset, DatasetSplit

logger = logging.getLogger(__name__)

MASK_NAME = re.compile(r"^(\d+)_(\d+)\.pgm$")
TARGET_SIZE = 32


def _header_tokens(payload: bytes, count: int) -> Tuple[List[bytes], int]:
    """First ``count`` whitespace-separated header tokens (comments skipped) and the data offset."""
    tokens: List[bytes] = []
    pos = 0
    while len(tokens) < count:
        while pos < len(payload) and payload[pos:pos + 1].isspace():
            pos += 1
        if pos >= len(payload):
            raise DatasetFormatError("header ends early")
        if payload[pos:pos + 1] == b"#":
            while pos < len(payload) and payload[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(payload) and not payload[pos:pos + 1].isspace():
            pos += 1
        tokens.append(payload[start:pos])
    # exactly one whitespace byte separates maxval from the raster
    return tokens, pos + 1


def parse_pgm(payload: bytes, name: str = "<bytes>") -> np.ndarray:
    """Decode an 8-bit binary PGM into a float32 [H, W] array in [0, 1]."""
    try:
        (magic, width, height, maxval), offset = _header_tokens(payload, 4)
        width, height, maxval = int(width), int(height), int(maxval)
    except (DatasetFormatError, ValueError) as e:
        raise DatasetFormatError(f"{name}: malformed PGM header ({e})")
    if magic != b"P5":
        raise DatasetFormatError(f"{name}: expected P5 magic, got {magic!r}")
    if not 0 < maxval < 256:
        raise DatasetFormatError(f"{name}: only 8-bit PGM is supported (maxval {maxval})")
    if width <= 0 or height <= 0:
        raise DatasetFormatError(f"{name}: bad geometry {width}x{height}")
    if width != height:
        raise DatasetFormatError(f"{name}: mask images must be square, got {width}x{height}")
    raster = np.frombuffer(payload, dtype=np.uint8, offset=offset)
    if raster.size < width * height:
        raise DatasetFormatError(f"{name}: raster truncated ({raster.size} of {width * height} bytes)")
    image = raster[:width * height].reshape(height, width).astype(np.float32)
    return image / np.float32(maxval)


def read_pgm(path: Union[str, Path]) -> np.ndarray:
    path = Path(path)
    return parse_pgm(path.read_bytes(), path.name)


def area_weights(source: int, target: int = TARGET_SIZE) -> np.ndarray:
    """[target, source] matrix whose rows average the source cells each target cell covers."""
    edges_src = np.arange(source + 1, dtype=np.float64) / source
    edges_dst = np.arange(target + 1, dtype=np.float64) / target
    lo = np.maximum(edges_dst[:-1, None], edges_src[None, :-1])
    hi = np.minimum(edges_dst[1:, None], edges_src[None, 1:])
    overlap = np.clip(hi - lo, 0.0, None)
    return overlap * target


def area_resample(image: np.ndarray, size: int = TARGET_SIZE) -> np.ndarray:
    """Resize a square [S, S] image to [size, size] by exact area averaging."""
    weights = area_weights(image.shape[0], size)
    return (weights @ image.astype(np.float64) @ weights.T).astype(np.float32)


def load_mask_folder(folder: Union[str, Path], size: int = TARGET_SIZE) -> Tuple[np.ndarray, np.ndarray]:
    folder = Path(folder)
    if not folder.is_dir():
        raise DatasetFormatError(f"mask folder not found: {folder}")
    entries = []
    for path in folder.glob("*.pgm"):
        match = MASK_NAME.match(path.name)
        if not match:
            raise DatasetFormatError(f"{path.name}: mask files must be named <classid>_<index>.pgm")
        entries.append((int(match.group(1)), int(match.group(2)), path))
    if not entries:
        raise DatasetFormatError(f"no .pgm masks in {folder}")
    entries.sort(key=lambda e: (e[0], e[1]))
    pixels = np.stack([area_resample(read_pgm(path), size) for _, _, path in entries])[:, None]
    labels = np.array([label for label, _, _ in entries], dtype=np.int64)
    return np.clip(pixels, 0.0, 1.0), labels


def load_mask_dataset(path: Union[str, Path]) -> Dataset:
    """Masks resampled to 32x32, single channel, values in [0, 1]."""
    root = Path(path)
    train_pixels, train_labels = load_mask_folder(root / "train")
    test_pixels, test_labels = load_mask_folder(root / "test")
    num_classes = int(max(train_labels.max(), test_labels.max())) + 1
    names = [str(i) for i in range(num_classes)]
    logger.debug(f"Masks loaded from {root}: {num_classes} classes")
    return Dataset(train=DatasetSplit(train_pixels, train_labels, names),
                   test=DatasetSplit(test_pixels, test_labels, names), kind="masks")


def write_pnm(path: Union[str, Path], image: np.ndarray) -> Path:
    """Write a [1,H,W] / [H,W] image as binary PGM or a [3,H,W] image as binary PPM (maxval 255)."""
    path = Path(path)
    image = np.asarray(image)
    if image.ndim == 3 and image.shape[0] == 1:
        image = image[0]
    if image.ndim == 2:
        magic, height, width = b"P5", image.shape[0], image.shape[1]
        raster = image
    elif image.ndim == 3 and image.shape[0] == 3:
        magic, height, width = b"P6", image.shape[1], image.shape[2]
        raster = image.transpose(1, 2, 0)
    else:
        raise ValueError(f"cannot write an image of shape {image.shape} as PGM/PPM")
    data = np.floor(np.clip(raster, 0.0, 1.0) * 255 + 0.5).astype(np.uint8)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(magic + f"\n{width} {height}\n255\n".encode("ascii") + data.tobytes())
    return path
