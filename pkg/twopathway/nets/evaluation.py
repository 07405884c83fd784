"""
Eval-mode feature extraction and accuracy.
"""

from typing import Optional, Tuple

import numpy as np

from ..core.losses import softmax
from ..data.dataset import DatasetSplit
from .network import Network
from .pathway import Pathway

EVAL_BATCH = 256


def forward_features(net: Network, inputs: np.ndarray, batch_size: int = EVAL_BATCH) -> Tuple[np.ndarray, np.ndarray]:
    """(g, p) for prepared inputs, computed with running batch-norm statistics."""
    net.eval()
    features, probs = [], []
    for start in range(0, len(inputs), batch_size):
        g, logits = net.forward(inputs[start:start + batch_size])
        features.append(g)
        probs.append(softmax(logits))
    if not features:
        return (np.zeros((0, net.spec.fc_width), dtype=net.dtype),
                np.zeros((0, net.spec.num_classes), dtype=net.dtype))
    return np.concatenate(features), np.concatenate(probs)


def pathway_features(pathway: Pathway, raw_pixels: np.ndarray,
                     batch_size: int = EVAL_BATCH) -> Tuple[np.ndarray, np.ndarray]:
    """forward_features on raw pixels, preparing them batch by batch."""
    pathway.net.eval()
    features, probs = [], []
    for start in range(0, len(raw_pixels), batch_size):
        g, p = forward_features(pathway.net, pathway.prepare(raw_pixels[start:start + batch_size]),
                                batch_size)
        features.append(g)
        probs.append(p)
    if not features:
        return forward_features(pathway.net, pathway.prepare(raw_pixels[:0]))
    return np.concatenate(features), np.concatenate(probs)


def predict(pathway: Pathway, raw_pixels: np.ndarray) -> np.ndarray:
    """Top-1 class; argmax ties go to the lowest class index."""
    _, probs = pathway_features(pathway, raw_pixels)
    return probs.argmax(axis=1)


def accuracy(predictions: np.ndarray, labels: np.ndarray) -> float:
    if len(labels) == 0:
        return 0.0
    return float(np.mean(np.asarray(predictions) == np.asarray(labels)))


def evaluate_accuracy(pathway: Pathway, split: DatasetSplit, label_kind: str = "fine",
                      pixels: Optional[np.ndarray] = None) -> float:
    """Top-1 accuracy on ``split`` (or on replacement ``pixels`` with the split's labels)."""
    source = split.pixels if pixels is None else pixels
    return accuracy(predict(pathway, source), split.labels(label_kind))
