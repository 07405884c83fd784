"""
A pathway bundles a network with the input view and channel normalizer it
was trained with, so a checkpoint is self-contained for inference.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Union

import numpy as np

from ..core.checkpoint import load_checkpoint, save_checkpoint
from ..data.preprocess import InputView, Normalizer
from ..errors import CheckpointError
from .network import Network, NetworkSpec, build_network

logger = logging.getLogger(__name__)


@dataclass
class Pathway:
    net: Network
    view: InputView
    normalizer: Normalizer

    @classmethod
    def create(cls, spec: NetworkSpec, view: InputView, train_pixels: np.ndarray, seed: int) -> "Pathway":
        """New network plus a normalizer fitted on the training split seen through ``view``."""
        return cls(build_network(spec, seed), view, Normalizer.fit(view.apply(train_pixels)))

    @property
    def spec(self) -> NetworkSpec:
        return self.net.spec

    def prepare(self, raw_pixels: np.ndarray) -> np.ndarray:
        """Raw [N,C,32,32] pixels in [0,1] -> normalized network input."""
        viewed = self.normalizer(self.view.apply(raw_pixels))
        return np.ascontiguousarray(viewed, dtype=self.net.dtype)

    def input_gradient_to_raw(self, grad_input: np.ndarray) -> np.ndarray:
        """Map d/d(normalized input) back to d/d(raw pixels); raw views only."""
        if self.view.kind != "raw":
            raise ValueError(f"raw-pixel gradients need a raw input view, not '{self.view.kind}'")
        return grad_input * self.normalizer.input_scale(grad_input.dtype)

    def state(self) -> Dict[str, np.ndarray]:
        tensors = self.net.state()
        tensors["meta.view"] = self.view.to_tensor()
        tensors.update(self.normalizer.state("meta.norm"))
        return tensors

    def save(self, path: Union[str, Path]) -> Path:
        return save_checkpoint(path, self.state())

    @classmethod
    def from_state(cls, tensors: Dict[str, np.ndarray]) -> "Pathway":
        if "meta.view" not in tensors:
            raise CheckpointError("checkpoint carries no input view (not a pathway checkpoint?)")
        net = Network.from_state(tensors)
        net.eval()
        return cls(net, InputView.from_tensor(tensors["meta.view"]),
                   Normalizer.from_state(tensors, "meta.norm"))

    @classmethod
    def load(cls, path: Union[str, Path]) -> "Pathway":
        pathway = cls.from_state(load_checkpoint(path))
        logger.debug(f"Loaded {pathway.spec.kind} pathway ({pathway.view.label()}) from {path}")
        return pathway
