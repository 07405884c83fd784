"""
The gradient-check battery behind the ``gradcheck`` command: every layer
primitive, a full stage, both losses and the FGSM input gradient, each on
several random float64 instances.
"""

import logging
from typing import Callable, Dict, List

import numpy as np

from ..core.gradcheck import GradCheckResult, check_layer, check_scalar_function
from ..core.layers import BatchNorm2d, Conv2d, Dense, MaxPool2x2, ReLU
from ..core.losses import imitation_loss, one_hot, softmax_cross_entropy
from ..core.tensor import precision
from ..data.preprocess import InputView, Normalizer
from ..nets.network import NetworkSpec, build_network
from ..nets.pathway import Pathway
from ..nets.stage import Stage
from ..noise import input_gradient

logger = logging.getLogger(__name__)

TOLERANCE = 1e-4
DEFAULT_INSTANCES = 20


def _conv(rng: np.random.Generator, seed: int) -> GradCheckResult:
    kernel = int(rng.choice([1, 3, 5]))
    layer = Conv2d(2, 3, kernel, rng=rng, name="conv")
    return check_layer(layer, rng.standard_normal((2, 2, 5, 5)), seed=seed)


def _batchnorm(rng: np.random.Generator, seed: int) -> GradCheckResult:
    layer = BatchNorm2d(3, name="batchnorm")
    layer.gamma.assign(rng.uniform(0.5, 1.5, 3))
    layer.beta.assign(rng.standard_normal(3))
    return check_layer(layer, rng.standard_normal((4, 3, 3, 3)), seed=seed)


def _maxpool(rng: np.random.Generator, seed: int) -> GradCheckResult:
    return check_layer(MaxPool2x2(name="maxpool"), rng.standard_normal((2, 2, 4, 4)), seed=seed)


def _dense(rng: np.random.Generator, seed: int) -> GradCheckResult:
    return check_layer(Dense(6, 4, rng=rng, name="dense"), rng.standard_normal((3, 6)), seed=seed)


def _relu(rng: np.random.Generator, seed: int) -> GradCheckResult:
    return check_layer(ReLU(name="relu"), rng.standard_normal((4, 8)), seed=seed)


def _stage(rng: np.random.Generator, seed: int) -> GradCheckResult:
    stage = Stage(2, 3, 3, rng=rng, name="stage")
    return check_layer(stage, rng.standard_normal((3, 2, 4, 4)), seed=seed)


def _cross_entropy(rng: np.random.Generator, seed: int) -> GradCheckResult:
    logits = rng.standard_normal((5, 4)) * 2.0
    onehot = one_hot(rng.integers(0, 4, size=5), 4, dtype=np.float64)
    _, grad = softmax_cross_entropy(logits, onehot)
    return check_scalar_function("cross_entropy", lambda: softmax_cross_entropy(logits, onehot)[0],
                                 [("logits", logits, grad.copy())], rng=rng)


def _imitation(rng: np.random.Generator, seed: int) -> GradCheckResult:
    logits = rng.standard_normal((4, 3))
    coarse = rng.standard_normal((4, 6))
    fine = rng.standard_normal((4, 6))
    onehot = one_hot(rng.integers(0, 3, size=4), 3, dtype=np.float64)
    alpha = float(rng.uniform(0.1, 0.9))
    _, grad_logits, grad_features = imitation_loss(logits, coarse, fine, onehot, alpha)
    return check_scalar_function(
        "imitation", lambda: imitation_loss(logits, coarse, fine, onehot, alpha)[0],
        [("logits", logits, grad_logits.copy()), ("features", coarse, grad_features.copy())], rng=rng)


def _fgsm_input_gradient(rng: np.random.Generator, seed: int) -> GradCheckResult:
    spec = NetworkSpec(kind="fine", stages=[(3, 3)], fc_width=5, num_classes=3, input_channels=3, input_size=4)
    images = rng.uniform(0.0, 1.0, size=(3, 3, 4, 4))
    pathway = Pathway(build_network(spec, seed), InputView(kind="raw"), Normalizer.fit(images))
    labels = rng.integers(0, 3, size=3)
    grad = input_gradient(pathway, images, labels)
    onehot = one_hot(labels, 3, dtype=np.float64)

    def evaluate() -> float:
        _, logits = pathway.net.forward(pathway.prepare(images))
        return softmax_cross_entropy(logits, onehot)[0]

    return check_scalar_function("fgsm_input_gradient", evaluate, [("pixels", images, grad)], rng=rng)


CHECKS: Dict[str, Callable[[np.random.Generator, int], GradCheckResult]] = {
    "conv": _conv,
    "batchnorm": _batchnorm,
    "maxpool": _maxpool,
    "dense": _dense,
    "relu": _relu,
    "stage": _stage,
    "cross_entropy": _cross_entropy,
    "imitation": _imitation,
    "fgsm_input_gradient": _fgsm_input_gradient,
}


def run_gradchecks(instances: int = DEFAULT_INSTANCES, seed: int = 0) -> List[GradCheckResult]:
    """One merged result per check, over ``instances`` random float64 instances each."""
    results = []
    with precision("float64"):
        for name, check in CHECKS.items():
            merged = GradCheckResult(name=name)
            for instance in range(instances):
                rng = np.random.default_rng([seed, instance])
                merged.merge(check(rng, seed * 1000 + instance))
            logger.debug(f"{name}: max rel err {merged.max_relative_error:.2e} over {merged.checked} coords")
            results.append(merged)
    return results
