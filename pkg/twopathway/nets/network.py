"""
FineNet / CoarseNet architecture: stacked stages, a ReLU feature head g(.)
and a dense readout f(.).
"""

import logging
from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator

from ..core.layers import Dense, Flatten, ReLU
from ..core.tensor import ParamTensor, Tensor, get_dtype
from ..errors import CheckpointError, ShapeError
from .stage import Stage

logger = logging.getLogger(__name__)

FINE_STAGES: List[Tuple[int, int]] = [(128, 3), (128, 3), (128, 3)]
COARSE_STAGES: List[Tuple[int, int]] = [(64, 11), (128, 9)]
_KIND_CODES = {"fine": 0, "coarse": 1}


def parse_stages(value) -> List[Tuple[int, int]]:
    """'64x11,128x9' (or ['64x11', '128x9']) -> [(64, 11), (128, 9)]; pairs pass through."""
    if isinstance(value, str):
        value = value.split(",")
    stages = []
    for item in value:
        if not isinstance(item, str):
            stages.append(tuple(int(v) for v in item))
            continue
        item = item.strip().lower()
        if not item:
            continue
        try:
            filters, kernel = item.split("x")
            stages.append((int(filters), int(kernel)))
        except ValueError:
            raise ValueError(f"stage '{item}' must be written FILTERSxKERNEL, e.g. 128x3")
    return stages


def format_stages(stages: List[Tuple[int, int]]) -> str:
    return ",".join(f"{f}x{k}" for f, k in stages)


class NetworkSpec(BaseModel):
    kind: Literal["fine", "coarse"] = "fine"
    stages: List[Tuple[int, int]] = Field(default_factory=lambda: list(FINE_STAGES))
    fc_width: int = Field(default=1000, ge=1)
    num_classes: int = Field(default=10, ge=2)
    input_channels: int = Field(default=3, ge=1)
    input_size: int = Field(default=32, ge=1)

    @field_validator("stages", mode="before")
    @classmethod
    def _parse_stages(cls, value):
        return parse_stages(value)

    @model_validator(mode="after")
    def _check_geometry(self):
        if not self.stages:
            raise ValueError("a network needs at least one stage")
        size = self.input_size
        for index, (filters, kernel) in enumerate(self.stages):
            if filters < 1:
                raise ValueError(f"stage {index}: filter count must be positive")
            if kernel < 1 or kernel % 2 == 0:
                raise ValueError(f"stage {index}: kernel size must be odd, got {kernel}")
            if size < 2 or size % 2:
                raise ValueError(f"stage {index}: pooling would reduce spatial size {size} below 1")
            size //= 2
        return self

    @classmethod
    def fine_default(cls, num_classes: int = 10, input_channels: int = 3) -> "NetworkSpec":
        return cls(kind="fine", stages=FINE_STAGES, num_classes=num_classes,
                   input_channels=input_channels)

    @classmethod
    def coarse_default(cls, num_classes: int = 10, input_channels: int = 1) -> "NetworkSpec":
        return cls(kind="coarse", stages=COARSE_STAGES, num_classes=num_classes,
                   input_channels=input_channels)

    @property
    def output_size(self) -> int:
        return self.input_size // (2 ** len(self.stages))

    @property
    def flat_features(self) -> int:
        return self.stages[-1][0] * self.output_size ** 2

    def to_tensor(self) -> np.ndarray:
        header = [_KIND_CODES[self.kind], self.num_classes, self.input_channels, self.fc_width,
                  self.input_size, len(self.stages)]
        return np.array(header + [v for stage in self.stages for v in stage], dtype=np.float32)

    @classmethod
    def from_tensor(cls, values: np.ndarray) -> "NetworkSpec":
        ints = [int(round(float(v))) for v in values]
        if len(ints) < 6 or len(ints) != 6 + 2 * ints[5]:
            raise CheckpointError(f"malformed network spec header of length {len(ints)}")
        kinds = {code: kind for kind, code in _KIND_CODES.items()}
        stages = [(ints[6 + 2 * i], ints[7 + 2 * i]) for i in range(ints[5])]
        return cls(kind=kinds[ints[0]], num_classes=ints[1], input_channels=ints[2],
                   fc_width=ints[3], input_size=ints[4], stages=stages)


class Network:
    """Stages, then flatten -> dense(fc_width) -> ReLU = g, then readout dense = f."""

    def __init__(self, spec: NetworkSpec, rng: np.random.Generator):
        self.spec = spec
        self.stages: List[Stage] = []
        channels = spec.input_channels
        for index, (filters, kernel) in enumerate(spec.stages):
            self.stages.append(Stage(channels, filters, kernel, rng=rng, name=f"stage{index}"))
            channels = filters
        self.flatten = Flatten()
        self.head = Dense(spec.flat_features, spec.fc_width, rng=rng, name="head")
        self.head_relu = ReLU(name="head.relu")
        self.readout = Dense(spec.fc_width, spec.num_classes, rng=rng, name="readout")
        self.training = True

    @property
    def dtype(self):
        return self.head.weight.value.dtype

    def features(self, x: Tensor) -> Tensor:
        """g(x): the post-ReLU penultimate activity."""
        expected = (self.spec.input_channels, self.spec.input_size, self.spec.input_size)
        if x.ndim != 4 or x.shape[1:] != expected:
            raise ShapeError(f"{self.spec.kind} net expects [N,{expected[0]},{expected[1]},{expected[2]}], "
                             f"got {x.shape}")
        for stage in self.stages:
            x = stage.forward(x)
        return self.head_relu.forward(self.head.forward(self.flatten.forward(x)))

    def forward(self, x: Tensor) -> Tuple[Tensor, Tensor]:
        g = self.features(x)
        return g, self.readout.forward(g)

    def backward(self, grad_logits: Optional[Tensor], grad_features: Optional[Tensor] = None) -> Tensor:
        """Back-propagate d/d logits (and optionally an extra d/d g); returns d/d input."""
        if grad_logits is None and grad_features is None:
            raise ValueError("backward needs a logits gradient, a feature gradient, or both")
        grad = 0
        if grad_logits is not None:
            grad = self.readout.backward(grad_logits)
        if grad_features is not None:
            grad = grad + grad_features
        grad = self.flatten.backward(self.head.backward(self.head_relu.backward(grad)))
        for stage in reversed(self.stages):
            grad = stage.backward(grad)
        return grad

    def parameters(self) -> List[ParamTensor]:
        """Stage by stage (conv weight, conv bias, gamma, beta), then head, then readout."""
        params: List[ParamTensor] = []
        for stage in self.stages:
            params += stage.params()
        return params + self.head.params() + self.readout.params()

    def buffers(self) -> Dict[str, Tensor]:
        buffers: Dict[str, Tensor] = {}
        for stage in self.stages:
            buffers.update(stage.buffers())
        return buffers

    def parameter_count(self) -> int:
        return sum(p.size for p in self.parameters())

    def train(self):
        self.training = True
        for stage in self.stages:
            stage.train()

    def eval(self):
        self.training = False
        for stage in self.stages:
            stage.eval()

    def state(self) -> Dict[str, np.ndarray]:
        tensors = {"meta.spec": self.spec.to_tensor()}
        tensors.update({p.name: p.value for p in self.parameters()})
        tensors.update(self.buffers())
        return tensors

    def load_state(self, tensors: Dict[str, np.ndarray]):
        for param in self.parameters():
            if param.name not in tensors:
                raise CheckpointError(f"checkpoint lacks parameter '{param.name}'")
            if tensors[param.name].shape != param.shape:
                raise CheckpointError(f"{param.name}: checkpoint shape {tensors[param.name].shape} "
                                      f"!= {param.shape}")
            param.assign(tensors[param.name])
        for name, buffer in self.buffers().items():
            if name not in tensors:
                raise CheckpointError(f"checkpoint lacks buffer '{name}'")
            buffer[...] = tensors[name]

    @classmethod
    def from_state(cls, tensors: Dict[str, np.ndarray]) -> "Network":
        if "meta.spec" not in tensors:
            raise CheckpointError("checkpoint carries no network spec")
        net = cls(NetworkSpec.from_tensor(tensors["meta.spec"]), np.random.default_rng(0))
        net.load_state(tensors)
        return net


def build_network(spec: NetworkSpec, seed: int) -> Network:
    """Deterministic He initialization from ``seed`` in the working precision."""
    net = Network(spec, np.random.default_rng(seed))
    logger.debug(f"Built {spec.kind} net {format_stages(spec.stages)} -> {spec.fc_width} -> "
                 f"{spec.num_classes} ({net.parameter_count():,} parameters, {get_dtype().__name__})")
    return net


def parameters(net: Network) -> List[ParamTensor]:
    return net.parameters()
