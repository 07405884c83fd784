"""
Checkpoint codec shared by every module.

Layout (little-endian):
    b"TPCK" | version u16 | count u32 |
    per tensor: name_len u16, name utf-8, rank u8, dims u32 * rank, float32 data row-major

Metadata (network specs, normalizers, input views) is carried as small
float tensors under the ``meta.`` prefix so the format stays tensors-only.
"""

import logging
import os
import struct
from pathlib import Path
from typing import Dict, Mapping, Union

import numpy as np

from ..errors import CheckpointError

logger = logging.getLogger(__name__)

MAGIC = b"TPCK"
FORMAT_VERSION = 1

PathLike = Union[str, os.PathLike]


def encode_checkpoint(tensors: Mapping[str, np.ndarray]) -> bytes:
    chunks = [MAGIC, struct.pack("<HI", FORMAT_VERSION, len(tensors))]
    for name, tensor in tensors.items():
        encoded = name.encode("utf-8")
        if len(encoded) > 0xFFFF:
            raise CheckpointError(f"tensor name too long: {name[:40]}...")
        array = np.asarray(tensor)
        if array.ndim > 0xFF:
            raise CheckpointError(f"{name}: rank {array.ndim} exceeds 255")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<B", array.ndim))
        chunks.append(struct.pack(f"<{array.ndim}I", *array.shape))
        chunks.append(np.ascontiguousarray(array, dtype="<f4").tobytes())
    return b"".join(chunks)


def decode_checkpoint(payload: bytes) -> Dict[str, np.ndarray]:
    if payload[:4] != MAGIC:
        raise CheckpointError("not a checkpoint (bad magic)")
    try:
        version, count = struct.unpack_from("<HI", payload, 4)
    except struct.error as e:
        raise CheckpointError(f"truncated header: {e}")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    offset = 10
    tensors: Dict[str, np.ndarray] = {}
    try:
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", payload, offset)
            offset += 2
            name = payload[offset:offset + name_len].decode("utf-8")
            offset += name_len
            (rank,) = struct.unpack_from("<B", payload, offset)
            offset += 1
            dims = struct.unpack_from(f"<{rank}I", payload, offset)
            offset += 4 * rank
            size = int(np.prod(dims, dtype=np.int64)) if rank else 1
            end = offset + 4 * size
            if end > len(payload):
                raise CheckpointError(f"{name}: data truncated")
            tensors[name] = np.frombuffer(payload, dtype="<f4", count=size, offset=offset).reshape(
                dims).astype(np.float32)
            offset = end
    except (struct.error, UnicodeDecodeError) as e:
        raise CheckpointError(f"corrupt checkpoint: {e}")
    if offset != len(payload):
        raise CheckpointError(f"{len(payload) - offset} trailing bytes after {count} tensors")
    return tensors


def save_checkpoint(path: PathLike, tensors: Mapping[str, np.ndarray]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(encode_checkpoint(tensors))
    os.replace(tmp, path)
    logger.debug(f"Checkpoint written: {path} ({len(tensors)} tensors)")
    return path


def load_checkpoint(path: PathLike) -> Dict[str, np.ndarray]:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    return decode_checkpoint(path.read_bytes())
