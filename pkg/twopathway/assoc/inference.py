"""
The two association protocols.

Robustness: the RBM stores [gC || gF]; at test time gC is clamped and the
FineNet half is completed, then read out by FineNet's own readout.

Cognitive bias: the RBM stores [gC || c] with c the super-class context
vector; the retrieved context is snapped to the codebook and fed, next to
gF, to a readout retrained on [gF || c].
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from ..core.checkpoint import load_checkpoint, save_checkpoint
from ..core.layers import Dense
from ..core.losses import one_hot, softmax_cross_entropy
from ..core.optim import sgd_momentum_step
from ..data.batching import epoch_order
from ..data.dataset import DatasetSplit
from ..errors import CheckpointError, DivergenceError, RetrievalError, ShapeError
from ..nets.evaluation import accuracy, pathway_features
from ..nets.pathway import Pathway
from ..nets.training import EpochMetrics, TrainConfig
from ..noise import NoiseSpec, corrupt_images
from .context import row_cosine, snap_to_codebook
from .rbm import FeatureScaler, Rbm, clamped_interplay

logger = logging.getLogger(__name__)


def check_robustness_geometry(fine: Pathway, coarse: Pathway, rbm: Rbm):
    if fine.spec.num_classes != coarse.spec.num_classes:
        raise CheckpointError(f"FineNet has {fine.spec.num_classes} classes, CoarseNet "
                              f"{coarse.spec.num_classes}; they must share a class set")
    width = coarse.spec.fc_width + fine.spec.fc_width
    if rbm.visible != width or rbm.split != coarse.spec.fc_width:
        raise CheckpointError(f"RBM geometry {rbm.visible} (split {rbm.split}) does not match "
                              f"[gC {coarse.spec.fc_width} || gF {fine.spec.fc_width}]")
    if rbm.scaler is None:
        raise CheckpointError("RBM checkpoint carries no feature normalization statistics")


def robustness_pairs(fine: Pathway, coarse: Pathway, pixels: np.ndarray) -> Tuple[np.ndarray, FeatureScaler]:
    """Normalized [gC || gF] training pairs and the scaler fitted on them."""
    g_coarse, _ = pathway_features(coarse, pixels)
    g_fine, _ = pathway_features(fine, pixels)
    pairs = np.concatenate([g_coarse, g_fine], axis=1)
    scaler = FeatureScaler.fit(pairs)
    return scaler.normalize(pairs).astype(np.float32), scaler


def associate_fine_features(fine: Pathway, coarse: Pathway, rbm: Rbm, pixels: np.ndarray,
                            T: int) -> np.ndarray:
    """FineNet features after T interplay steps with CoarseNet's features clamped."""
    g_fine, _ = pathway_features(fine, pixels)
    if T == 0:
        return g_fine
    g_coarse, _ = pathway_features(coarse, pixels)
    width = coarse.spec.fc_width
    v_coarse = rbm.scaler.normalize(g_coarse, start=0)
    v_fine = rbm.scaler.normalize(g_fine, start=width)
    v_fine = clamped_interplay(rbm, v_coarse, v_fine, "first", T)
    return rbm.scaler.denormalize(v_fine, start=width).astype(g_fine.dtype)


def robustness_inference(fine: Pathway, coarse: Pathway, rbm: Rbm, images: np.ndarray, T: int,
                         noise: Optional[NoiseSpec] = None, labels: Optional[np.ndarray] = None,
                         indices: Optional[Sequence[int]] = None) -> np.ndarray:
    """Predicted classes of the associated system on (optionally corrupted) raw images."""
    check_robustness_geometry(fine, coarse, rbm)
    if noise is not None:
        images = corrupt_images(images, labels, noise, fine, indices)
    g_assoc = associate_fine_features(fine, coarse, rbm, images, T)
    return fine.net.readout.forward(g_assoc).argmax(axis=1)


def completion_cosine(rbm: Rbm, pairs: np.ndarray, T: int) -> float:
    """Mean cosine between stored free halves and their completion from the clamped half (started at 0)."""
    split = rbm.split
    completed = clamped_interplay(rbm, pairs[:, :split], np.zeros_like(pairs[:, split:]), "first", T)
    return float(row_cosine(completed, pairs[:, split:]).mean())


class BiasedFineNet:
    """Frozen FineNet trunk plus a readout over [gF || c]."""

    def __init__(self, fine: Pathway, context_dim: int, num_classes: Optional[int] = None, seed: int = 0):
        self.fine = fine
        self.context_dim = context_dim
        k = num_classes or fine.spec.num_classes
        self.readout = Dense(fine.spec.fc_width + context_dim, k, rng=np.random.default_rng(seed),
                             name="biased")

    def logits(self, g_fine: np.ndarray, context: np.ndarray) -> np.ndarray:
        if context.shape[-1] != self.context_dim:
            raise ShapeError(f"context width {context.shape[-1]} != {self.context_dim}")
        x = np.concatenate([g_fine, context.astype(g_fine.dtype)], axis=1)
        return self.readout.forward(x)

    def state(self):
        tensors = {f"fine.{k}": v for k, v in self.fine.state().items()}
        tensors["meta.biased"] = np.array([self.context_dim, self.readout.out_features], dtype=np.float32)
        tensors.update({p.name: p.value for p in self.readout.params()})
        return tensors

    def save(self, path: Union[str, Path]) -> Path:
        return save_checkpoint(path, self.state())

    @classmethod
    def load(cls, path: Union[str, Path]) -> "BiasedFineNet":
        tensors = load_checkpoint(path)
        if "meta.biased" not in tensors:
            raise CheckpointError(f"{path} is not a biased FineNet checkpoint")
        fine = Pathway.from_state({k[5:]: v for k, v in tensors.items() if k.startswith("fine.")})
        context_dim, classes = (int(v) for v in tensors["meta.biased"])
        model = cls(fine, context_dim, classes)
        for param in model.readout.params():
            param.assign(tensors[param.name])
        return model


@dataclass
class BiasedTrainResult:
    model: BiasedFineNet
    history: List[EpochMetrics] = field(default_factory=list)


def train_biased_readout(fine: Pathway, train: DatasetSplit, test: DatasetSplit, codebook: np.ndarray,
                         cfg: TrainConfig, seed: int = 0) -> BiasedTrainResult:
    """Fit the [gF || c] readout on frozen FineNet features with ground-truth contexts."""
    model = BiasedFineNet(fine, codebook.shape[1], fine.spec.num_classes, seed)
    g_train, _ = pathway_features(fine, train.pixels)
    g_test, _ = pathway_features(fine, test.pixels)
    c_train = codebook[train.labels("coarse")]
    c_test = codebook[test.labels("coarse")]
    labels = train.fine_labels
    params = model.readout.params()
    schedule = cfg.schedule()
    result = BiasedTrainResult(model)
    for epoch in range(cfg.epochs):
        lr = schedule.lr_at(epoch)
        order = epoch_order(len(labels), cfg.seed, epoch)
        total = 0.0
        for number, start in enumerate(range(0, len(order), cfg.batch_size)):
            index = order[start:start + cfg.batch_size]
            logits = model.logits(g_train[index], c_train[index])
            onehot = one_hot(labels[index], model.readout.out_features, dtype=logits.dtype)
            loss, grad = softmax_cross_entropy(logits, onehot)
            if not np.isfinite(loss):
                raise DivergenceError(f"biased readout loss became {loss}", epoch=epoch, batch=number, lr=lr)
            model.readout.backward(grad)
            sgd_momentum_step(params, lr, cfg.momentum)
            total += loss * len(index)
        oracle_acc = accuracy(model.logits(g_test, c_test).argmax(axis=1), test.fine_labels)
        result.history.append(EpochMetrics(epoch, lr, total / max(len(labels), 1), oracle_acc))
        logger.info(f"Biased readout epoch {epoch + 1}/{cfg.epochs}: loss={total / max(len(labels), 1):.4f} "
                    f"oracle_acc={oracle_acc:.4f}")
    return result


def bias_pairs(coarse: Pathway, split: DatasetSplit, codebook: np.ndarray) -> Tuple[np.ndarray, FeatureScaler]:
    """Normalized [gC || c(super-class)] training pairs and their scaler."""
    g_coarse, _ = pathway_features(coarse, split.pixels)
    pairs = np.concatenate([g_coarse, codebook[split.labels("coarse")].astype(g_coarse.dtype)], axis=1)
    scaler = FeatureScaler.fit(pairs)
    return scaler.normalize(pairs).astype(np.float32), scaler


def retrieve_context(coarse: Pathway, rbm: Rbm, pixels: np.ndarray, T: int) -> Tuple[np.ndarray, np.ndarray]:
    """Clamp gC, start the context half at 0, iterate T steps, snap: (super ids, context vectors)."""
    if rbm.codebook is None:
        raise RetrievalError("RBM checkpoint holds no context-vector codebook")
    if rbm.scaler is None:
        raise CheckpointError("RBM checkpoint carries no feature normalization statistics")
    width = coarse.spec.fc_width
    dim = rbm.codebook.shape[1]
    if rbm.split != width or rbm.visible != width + dim:
        raise CheckpointError(f"RBM geometry {rbm.visible} (split {rbm.split}) does not match "
                              f"[gC {width} || c {dim}]")
    g_coarse, _ = pathway_features(coarse, pixels)
    v_coarse = rbm.scaler.normalize(g_coarse, start=0)
    free = np.zeros((len(pixels), dim), dtype=rbm.W.dtype)
    retrieved = rbm.scaler.denormalize(clamped_interplay(rbm, v_coarse, free, "first", T), start=width)
    return snap_to_codebook(retrieved, rbm.codebook)


@dataclass
class BiasedPrediction:
    unbiased: np.ndarray
    biased: np.ndarray
    retrieved_super: np.ndarray
    oracle: Optional[np.ndarray] = None


def biased_inference(biased: BiasedFineNet, coarse: Pathway, rbm: Rbm, images: np.ndarray, T: int,
                     noise: Optional[NoiseSpec] = None, labels: Optional[np.ndarray] = None,
                     true_super: Optional[np.ndarray] = None,
                     indices: Optional[Sequence[int]] = None) -> BiasedPrediction:
    """Sub-class predictions with retrieved context, plus unbiased and (given ``true_super``) oracle ones."""
    if noise is not None:
        images = corrupt_images(images, labels, noise, biased.fine, indices)
    g_fine, probs = pathway_features(biased.fine, images)
    super_ids, contexts = retrieve_context(coarse, rbm, images, T)
    prediction = BiasedPrediction(unbiased=probs.argmax(axis=1),
                                  biased=biased.logits(g_fine, contexts).argmax(axis=1),
                                  retrieved_super=super_ids)
    if true_super is not None:
        prediction.oracle = biased.logits(g_fine, rbm.codebook[true_super]).argmax(axis=1)
    return prediction
