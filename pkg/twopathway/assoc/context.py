"""
Super-class context vectors and cosine snapping of retrieved vectors onto
the stored codebook.
"""

import logging
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from ..errors import RetrievalError

logger = logging.getLogger(__name__)

MIN_SEPARATION = 0.4
MAX_ATTEMPTS = 100


@dataclass(frozen=True)
class ContextVector:
    superclass_id: int
    values: np.ndarray


def min_pairwise_hamming(codebook: np.ndarray) -> int:
    if len(codebook) < 2:
        return codebook.shape[1] if codebook.ndim == 2 else 0
    bits = codebook.astype(np.int64)
    distances = (bits[:, None, :] != bits[None, :, :]).sum(axis=-1)
    return int(distances[np.triu_indices(len(codebook), k=1)].min())


def make_context_vectors(n_super: int, dim: int = 1000, seed: int = 0) -> List[ContextVector]:
    """Bernoulli(0.5) binary codes, redrawn with seed+1, seed+2, ... until pairwise Hamming >= 0.4*dim."""
    if n_super < 1 or dim < 1:
        raise ValueError(f"need n_super >= 1 and dim >= 1, got {n_super} and {dim}")
    required = MIN_SEPARATION * dim
    for attempt in range(MAX_ATTEMPTS):
        rng = np.random.default_rng(seed + attempt)
        codebook = rng.integers(0, 2, size=(n_super, dim)).astype(np.float32)
        separation = min_pairwise_hamming(codebook)
        if separation >= required:
            if attempt:
                logger.debug(f"Context vectors separated after {attempt + 1} draws (min Hamming {separation})")
            return [ContextVector(i, row) for i, row in enumerate(codebook)]
    raise RetrievalError(f"could not draw {n_super} context vectors of dim {dim} with pairwise "
                         f"Hamming >= {required:g} in {MAX_ATTEMPTS} attempts")


def codebook_matrix(vectors: List[ContextVector]) -> np.ndarray:
    return np.stack([v.values for v in sorted(vectors, key=lambda v: v.superclass_id)])


def cosine_scores(queries: np.ndarray, codebook: np.ndarray) -> np.ndarray:
    """[N, K] cosine similarities between query rows and codebook rows."""
    queries = np.atleast_2d(queries).astype(np.float64)
    codebook = codebook.astype(np.float64)
    query_norms = np.linalg.norm(queries, axis=1)
    code_norms = np.linalg.norm(codebook, axis=1)
    query_norms[query_norms == 0] = 1e-9
    code_norms[code_norms == 0] = 1e-9
    return (queries / query_norms[:, None]) @ (codebook / code_norms[:, None]).T


def snap_to_codebook(retrieved: np.ndarray, codebook: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Nearest stored vector by cosine similarity (ties to the lowest id): (ids, vectors)."""
    if codebook is None or len(codebook) == 0:
        raise RetrievalError("no context vectors loaded")
    if retrieved.shape[-1] != codebook.shape[1]:
        raise RetrievalError(f"retrieved width {retrieved.shape[-1]} != context dim {codebook.shape[1]}")
    ids = cosine_scores(retrieved, codebook).argmax(axis=1)
    return ids, codebook[ids]


def row_cosine(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cosine similarity of matching rows of two [N, D] blocks."""
    a = np.atleast_2d(a).astype(np.float64)
    b = np.atleast_2d(b).astype(np.float64)
    norms = np.maximum(np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1), 1e-9)
    return (a * b).sum(axis=1) / norms
