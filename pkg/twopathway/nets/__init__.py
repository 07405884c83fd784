"""FineNet / CoarseNet pathways: architecture, training, evaluation."""

from .evaluation import accuracy, evaluate_accuracy, forward_features, pathway_features, predict
from .network import Network, NetworkSpec, build_network, format_stages, parameters, parse_stages
from .pathway import Pathway
from .stage import Stage, stage_forward
from .training import EpochMetrics, TrainConfig, TrainResult, train_coarse, train_fine

__all__ = [
    "EpochMetrics", "Network", "NetworkSpec", "Pathway", "Stage", "TrainConfig", "TrainResult",
    "accuracy", "build_network", "evaluate_accuracy", "format_stages", "forward_features",
    "parameters", "parse_stages", "pathway_features", "predict", "stage_forward",
    "train_coarse", "train_fine",
]
