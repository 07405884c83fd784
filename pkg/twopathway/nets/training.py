"""
FineNet training (cross-entropy) and CoarseNet training (cross-entropy or
feature imitation from a frozen FineNet).
"""

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field, field_validator
from tqdm import tqdm

from ..core.losses import imitation_loss, one_hot, softmax_cross_entropy
from ..core.optim import StepSchedule, sgd_momentum_step
from ..data.batching import Batch, batches
from ..data.dataset import Dataset
from ..errors import ConfigError, DivergenceError, ShapeError
from ..harness.runtime import ResourceMonitor, ShutdownHandler
from .evaluation import evaluate_accuracy, pathway_features
from .pathway import Pathway

logger = logging.getLogger(__name__)


class TrainConfig(BaseModel):
    epochs: int = Field(default=150, ge=0)
    batch_size: int = Field(default=64, ge=2)
    lr: float = Field(default=0.1, gt=0)
    momentum: float = Field(default=0.9, ge=0, lt=1)
    lr_decay_epochs: List[int] = Field(default_factory=lambda: [100, 125])
    lr_decay_factor: float = Field(default=0.1, gt=0)
    seed: int = 0
    alpha: float = Field(default=0.4, ge=0, le=1)
    label_kind: Literal["fine", "coarse"] = "fine"

    @field_validator("lr_decay_epochs", mode="before")
    @classmethod
    def _split(cls, value):
        if isinstance(value, str):
            return [int(v) for v in value.split(",") if v.strip()]
        return value

    def schedule(self) -> StepSchedule:
        return StepSchedule(self.lr, self.lr_decay_epochs, self.lr_decay_factor)


@dataclass
class EpochMetrics:
    epoch: int
    lr: float
    train_loss: float
    test_accuracy: float
    wall_seconds: float = 0.0


@dataclass
class TrainResult:
    pathway: Pathway
    history: List[EpochMetrics] = field(default_factory=list)
    interrupted: bool = False


# (batch, g, logits) -> (loss, d/d logits, d/d g or None)
LossFn = Callable[[Batch, np.ndarray, np.ndarray], Tuple[float, np.ndarray, Optional[np.ndarray]]]


def _fit(pathway: Pathway, data: Dataset, cfg: TrainConfig, loss_fn: LossFn, desc: str,
         shutdown: Optional[ShutdownHandler], record_wall_time: bool, progress: bool) -> TrainResult:
    net = pathway.net
    schedule = cfg.schedule()
    result = TrainResult(pathway)
    params = net.parameters()
    epochs = tqdm(range(cfg.epochs), desc=desc, unit="epoch", disable=not progress, leave=False)
    for epoch in epochs:
        started = time.perf_counter()
        lr = schedule.lr_at(epoch)
        net.train()
        total, seen = 0.0, 0
        for number, batch in enumerate(batches(data.train, cfg.batch_size, cfg.seed, epoch)):
            if len(batch) < 2:
                logger.debug(f"Skipping trailing batch of {len(batch)} image (batch norm needs N >= 2)")
                continue
            g, logits = net.forward(pathway.prepare(batch.pixels))
            loss, grad_logits, grad_features = loss_fn(batch, g, logits)
            if not math.isfinite(loss):
                raise DivergenceError(f"{desc}: loss became {loss} at epoch {epoch}, batch {number} "
                                      f"(lr={lr:g})", epoch=epoch, batch=number, lr=lr)
            net.backward(grad_logits, grad_features)
            sgd_momentum_step(params, lr, cfg.momentum)
            total += loss * len(batch)
            seen += len(batch)
        train_loss = total / max(seen, 1)
        test_accuracy = evaluate_accuracy(pathway, data.test, cfg.label_kind)
        wall = time.perf_counter() - started if record_wall_time else 0.0
        result.history.append(EpochMetrics(epoch, lr, train_loss, test_accuracy, wall))
        epochs.set_postfix(loss=f"{train_loss:.4f}", acc=f"{test_accuracy:.3f}", lr=f"{lr:g}")
        logger.info(f"{desc} epoch {epoch + 1}/{cfg.epochs}: lr={lr:g} loss={train_loss:.4f} "
                    f"test_acc={test_accuracy:.4f}")
        ResourceMonitor.log_usage(f"{desc} epoch {epoch + 1}")
        if shutdown is not None and shutdown.should_stop() and epoch + 1 < cfg.epochs:
            logger.warning(f"⚠️  {desc} stopped after epoch {epoch + 1}/{cfg.epochs}")
            result.interrupted = True
            break
    net.eval()
    return result


def _cross_entropy(num_classes: int, label_kind: str) -> LossFn:
    def loss_fn(batch: Batch, g: np.ndarray, logits: np.ndarray):
        onehot = one_hot(batch.labels(label_kind), num_classes, dtype=logits.dtype)
        loss, grad_logits = softmax_cross_entropy(logits, onehot)
        return loss, grad_logits, None
    return loss_fn


def train_fine(pathway: Pathway, data: Dataset, cfg: TrainConfig,
               shutdown: Optional[ShutdownHandler] = None, record_wall_time: bool = False,
               progress: bool = True) -> TrainResult:
    """Minimize cross-entropy with SGD-momentum under the step schedule. ``alpha`` is ignored."""
    if pathway.spec.kind != "fine":
        raise ConfigError(f"train_fine needs a fine network, got '{pathway.spec.kind}'")
    loss_fn = _cross_entropy(pathway.spec.num_classes, cfg.label_kind)
    return _fit(pathway, data, cfg, loss_fn, "FineNet", shutdown, record_wall_time, progress)


def train_coarse(pathway: Pathway, data: Dataset, cfg: TrainConfig, teacher: Optional[Pathway] = None,
                 imitate: bool = False, shutdown: Optional[ShutdownHandler] = None,
                 record_wall_time: bool = False, progress: bool = True) -> TrainResult:
    """Cross-entropy baseline, or imitation of a frozen FineNet's features.

    With ``imitate`` the teacher runs in eval mode on the raw images of each
    batch; its features are constant targets and it is never updated.
    """
    num_classes = pathway.spec.num_classes
    if not imitate:
        return _fit(pathway, data, cfg, _cross_entropy(num_classes, cfg.label_kind),
                    "CoarseNet", shutdown, record_wall_time, progress)
    if teacher is None:
        raise ConfigError("imitation training needs a trained FineNet checkpoint")
    if teacher.spec.fc_width != pathway.spec.fc_width:
        raise ShapeError(f"fc_width mismatch: FineNet {teacher.spec.fc_width} vs "
                         f"CoarseNet {pathway.spec.fc_width}")
    if teacher.spec.input_channels != data.train.channels:
        raise ConfigError(f"FineNet expects {teacher.spec.input_channels}-channel images, "
                          f"dataset has {data.train.channels}")
    teacher.net.eval()

    def loss_fn(batch: Batch, g: np.ndarray, logits: np.ndarray):
        targets, _ = pathway_features(teacher, batch.pixels)
        onehot = one_hot(batch.labels(cfg.label_kind), num_classes, dtype=logits.dtype)
        return imitation_loss(logits, g, targets.astype(g.dtype, copy=False), onehot, cfg.alpha)

    return _fit(pathway, data, cfg, loss_fn, "CoarseNet+imitation", shutdown, record_wall_time, progress)
