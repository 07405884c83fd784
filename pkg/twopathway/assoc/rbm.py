"""
Bernoulli RBM associative memory storing concatenated feature pairs as
energy minima, trained by contrastive divergence and queried by clamped
mean-field iteration.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator
from tqdm import tqdm

from ..core.checkpoint import load_checkpoint, save_checkpoint
from ..core.optim import StepSchedule
from ..core.tensor import get_dtype
from ..data.batching import epoch_order
from ..errors import CheckpointError, ShapeError
from ..harness.runtime import ResourceMonitor, ShutdownHandler

logger = logging.getLogger(__name__)

SCALE_EPS = 1e-8


def sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


class RbmTrainConfig(BaseModel):
    epochs: int = Field(default=2000, ge=0)
    lr: float = Field(default=0.1, ge=0)
    lr_decay_epochs: List[int] = Field(default_factory=lambda: [500, 1000])
    lr_decay_factor: float = Field(default=0.1, gt=0)
    batch_size: int = Field(default=64, ge=1)
    seed: int = 0
    cd_steps: int = Field(default=1, ge=1)
    hidden: int = Field(default=400, ge=1)

    @field_validator("lr_decay_epochs", mode="before")
    @classmethod
    def _split(cls, value):
        if isinstance(value, str):
            return [int(v) for v in value.split(",") if v.strip()]
        return value

    @model_validator(mode="after")
    def _decay_inside_run(self):
        if self.lr_decay_epochs and self.epochs <= max(self.lr_decay_epochs):
            raise ValueError(f"rbm epochs ({self.epochs}) must exceed the last decay epoch "
                             f"({max(self.lr_decay_epochs)})")
        return self

    def schedule(self) -> StepSchedule:
        return StepSchedule(self.lr, self.lr_decay_epochs, self.lr_decay_factor)


@dataclass
class FeatureScaler:
    """Per-dimension min-max scaling into [0, 1], fitted on training features."""

    minimum: np.ndarray
    maximum: np.ndarray

    def __post_init__(self):
        if self.minimum.shape != self.maximum.shape or np.any(self.minimum > self.maximum):
            raise ValueError("scaler needs matching min/max vectors with min <= max")

    @classmethod
    def fit(cls, features: np.ndarray) -> "FeatureScaler":
        values = features.astype(np.float32).astype(np.float64)
        return cls(values.min(axis=0), values.max(axis=0))

    @property
    def width(self) -> int:
        return int(self.minimum.shape[0])

    def _bounds(self, width: int, start: int):
        if start + width > self.width:
            raise ShapeError(f"scaler covers {self.width} dims, asked for [{start}, {start + width})")
        lo = self.minimum[start:start + width]
        return lo, self.maximum[start:start + width] - lo + SCALE_EPS

    def normalize(self, g: np.ndarray, start: int = 0) -> np.ndarray:
        """v = (g - min) / (max - min + 1e-8), clipped into [0, 1]."""
        lo, span = self._bounds(g.shape[-1], start)
        return np.clip((g - lo) / span, 0.0, 1.0)

    def denormalize(self, v: np.ndarray, start: int = 0) -> np.ndarray:
        lo, span = self._bounds(v.shape[-1], start)
        return v * span + lo


def normalize_features(g: np.ndarray, stats: Optional[FeatureScaler], start: int = 0) -> np.ndarray:
    if stats is None:
        raise ValueError("feature normalization needs scaler statistics from a training pass")
    return stats.normalize(g, start)


def denormalize_features(v: np.ndarray, stats: Optional[FeatureScaler], start: int = 0) -> np.ndarray:
    if stats is None:
        raise ValueError("feature denormalization needs scaler statistics from a training pass")
    return stats.denormalize(v, start)


class Rbm:
    """Weights W [V, Hd], visible bias a [V], hidden bias b [Hd].

    ``split`` is the width of the first (clamped) part of the visible layer.
    """

    def __init__(self, visible: int, hidden: int, split: Optional[int] = None, seed: int = 0,
                 scaler: Optional[FeatureScaler] = None, codebook: Optional[np.ndarray] = None):
        dtype = get_dtype()
        rng = np.random.default_rng(seed)
        self.W = (rng.standard_normal((visible, hidden)) * 0.01).astype(dtype)
        self.a = np.zeros(visible, dtype=dtype)
        self.b = np.zeros(hidden, dtype=dtype)
        self.split = visible // 2 if split is None else split
        if not 0 < self.split < visible:
            raise ShapeError(f"split point {self.split} must lie inside the {visible}-unit visible layer")
        self.scaler = scaler
        self.codebook = codebook

    @property
    def visible(self) -> int:
        return self.W.shape[0]

    @property
    def hidden(self) -> int:
        return self.W.shape[1]

    def hidden_probs(self, v: np.ndarray) -> np.ndarray:
        return sigmoid(v @ self.W + self.b)

    def visible_probs(self, h: np.ndarray) -> np.ndarray:
        return sigmoid(h @ self.W.T + self.a)

    def state(self) -> Dict[str, np.ndarray]:
        tensors = {"meta.rbm": np.array([self.visible, self.hidden, self.split], dtype=np.float32),
                   "rbm.W": self.W, "rbm.a": self.a, "rbm.b": self.b}
        if self.scaler is not None:
            tensors["meta.scale.min"] = self.scaler.minimum.astype(np.float32)
            tensors["meta.scale.max"] = self.scaler.maximum.astype(np.float32)
        if self.codebook is not None:
            tensors["context.codebook"] = self.codebook.astype(np.float32)
        return tensors

    def save(self, path: Union[str, Path]) -> Path:
        return save_checkpoint(path, self.state())

    @classmethod
    def from_state(cls, tensors: Dict[str, np.ndarray]) -> "Rbm":
        try:
            visible, hidden, split = (int(v) for v in tensors["meta.rbm"])
            rbm = cls(visible, hidden, split)
            rbm.W = tensors["rbm.W"].astype(rbm.W.dtype)
            rbm.a = tensors["rbm.a"].astype(rbm.a.dtype)
            rbm.b = tensors["rbm.b"].astype(rbm.b.dtype)
        except KeyError as e:
            raise CheckpointError(f"not an RBM checkpoint (missing {e})")
        if rbm.W.shape != (visible, hidden):
            raise CheckpointError(f"RBM weights {rbm.W.shape} disagree with header {(visible, hidden)}")
        if "meta.scale.min" in tensors:
            rbm.scaler = FeatureScaler(tensors["meta.scale.min"].astype(np.float64),
                                       tensors["meta.scale.max"].astype(np.float64))
        if "context.codebook" in tensors:
            rbm.codebook = tensors["context.codebook"]
        return rbm

    @classmethod
    def load(cls, path: Union[str, Path]) -> "Rbm":
        return cls.from_state(load_checkpoint(path))


def rbm_energy(v: np.ndarray, h: np.ndarray, rbm: Rbm) -> float:
    """E = -v^T W h - a^T v - b^T h."""
    if v.shape != (rbm.visible,) or h.shape != (rbm.hidden,):
        raise ShapeError(f"energy needs v[{rbm.visible}] and h[{rbm.hidden}], got {v.shape} and {h.shape}")
    return float(-(v @ rbm.W @ h) - rbm.a @ v - rbm.b @ h)


def cd1_update(rbm: Rbm, batch: np.ndarray, lr: float, rng: np.random.Generator, cd_steps: int = 1) -> float:
    """One contrastive-divergence update in place; returns the batch reconstruction error.

    h0 = sigma(v0 W + b); h~ ~ Bernoulli(h0); v1 = sigma(h~ W^T + a) (mean-field);
    h1 = sigma(v1 W + b). Extra ``cd_steps`` continue mean-field from (v1, h1).
    """
    if batch.ndim != 2 or batch.shape[1] != rbm.visible:
        raise ShapeError(f"batch must be [N,{rbm.visible}], got {batch.shape}")
    v0 = batch.astype(rbm.W.dtype, copy=False)
    h0 = rbm.hidden_probs(v0)
    h_sample = (rng.random(h0.shape) < h0).astype(rbm.W.dtype)
    vk = rbm.visible_probs(h_sample)
    hk = rbm.hidden_probs(vk)
    error = float(np.mean((v0 - vk) ** 2))
    for _ in range(cd_steps - 1):
        vk = rbm.visible_probs(hk)
        hk = rbm.hidden_probs(vk)
    n = v0.shape[0]
    rbm.W += (lr / n) * (v0.T @ h0 - vk.T @ hk)
    rbm.a += (lr / n) * (v0 - vk).sum(axis=0)
    rbm.b += (lr / n) * (h0 - hk).sum(axis=0)
    return error


def reconstruction_error(rbm: Rbm, data: np.ndarray) -> float:
    """Mean squared error of one deterministic mean-field reconstruction."""
    data = data.astype(rbm.W.dtype, copy=False)
    return float(np.mean((data - rbm.visible_probs(rbm.hidden_probs(data))) ** 2))


@dataclass
class RbmTrainResult:
    rbm: Rbm
    history: List[tuple] = field(default_factory=list)  # (epoch, lr, reconstruction error)
    interrupted: bool = False


def train_rbm(pairs: np.ndarray, cfg: RbmTrainConfig, rbm: Optional[Rbm] = None, split: Optional[int] = None,
              shutdown: Optional[ShutdownHandler] = None, progress: bool = True) -> RbmTrainResult:
    """CD training over seeded mini-batches with the step learning-rate schedule."""
    if rbm is None:
        rbm = Rbm(pairs.shape[1], cfg.hidden, split=split, seed=cfg.seed)
    if pairs.ndim != 2 or pairs.shape[1] != rbm.visible:
        raise ShapeError(f"pairs have width {pairs.shape[-1]}, RBM visible layer has {rbm.visible}")
    if pairs.size and (pairs.min() < 0 or pairs.max() > 1):
        raise ValueError("RBM training pairs must be normalized into [0, 1]")
    schedule = cfg.schedule()
    rng = np.random.default_rng([cfg.seed, 1])
    result = RbmTrainResult(rbm)
    epochs = tqdm(range(cfg.epochs), desc="RBM", unit="epoch", disable=not progress, leave=False)
    for epoch in epochs:
        lr = schedule.lr_at(epoch)
        order = epoch_order(len(pairs), cfg.seed, epoch)
        total = 0.0
        for start in range(0, len(order), cfg.batch_size):
            index = order[start:start + cfg.batch_size]
            total += cd1_update(rbm, pairs[index], lr, rng, cfg.cd_steps) * len(index)
        error = total / max(len(pairs), 1)
        result.history.append((epoch, lr, error))
        epochs.set_postfix(recon=f"{error:.5f}", lr=f"{lr:g}")
        if epoch % 50 == 0 or epoch + 1 == cfg.epochs:
            logger.info(f"RBM epoch {epoch + 1}/{cfg.epochs}: lr={lr:g} recon_error={error:.6f}")
            ResourceMonitor.log_usage(f"RBM epoch {epoch + 1}")
        if shutdown is not None and shutdown.should_stop() and epoch + 1 < cfg.epochs:
            logger.warning(f"⚠️  RBM training stopped after epoch {epoch + 1}/{cfg.epochs}")
            result.interrupted = True
            break
    return result


def interplay_step(rbm: Rbm, v: np.ndarray, clamp_mask: np.ndarray) -> np.ndarray:
    """One mean-field step; clamped visible units keep their value."""
    proposal = rbm.visible_probs(rbm.hidden_probs(v))
    return np.where(clamp_mask, v, proposal)


def clamped_interplay(rbm: Rbm, clamped: np.ndarray, free_init: np.ndarray,
                      clamp_side: Literal["first", "second"] = "first", T: int = 10) -> np.ndarray:
    """Iterate the RBM T steps with one part of the visible layer held fixed; return the free part.

    Works on single vectors or on [N, width] blocks.
    """
    if T < 0:
        raise ValueError(f"interplay steps must be non-negative, got {T}")
    if clamp_side not in ("first", "second"):
        raise ValueError(f"clamp_side must be 'first' or 'second', got '{clamp_side}'")
    if clamped.shape[-1] + free_init.shape[-1] != rbm.visible:
        raise ShapeError(f"clamped ({clamped.shape[-1]}) + free ({free_init.shape[-1]}) widths "
                         f"do not fill the {rbm.visible}-unit visible layer")
    if T == 0:
        return free_init.copy()
    parts = (clamped, free_init) if clamp_side == "first" else (free_init, clamped)
    v = np.concatenate([np.asarray(p, dtype=rbm.W.dtype) for p in parts], axis=-1)
    clamp_mask = np.zeros(rbm.visible, dtype=bool)
    if clamp_side == "first":
        clamp_mask[:clamped.shape[-1]] = True
    else:
        clamp_mask[free_init.shape[-1]:] = True
    for _ in range(T):
        v = interplay_step(rbm, v, clamp_mask)
    return v[..., clamped.shape[-1]:] if clamp_side == "first" else v[..., :free_init.shape[-1]]
