"""RBM associative memory coupling the two pathways."""

from .context import ContextVector, codebook_matrix, make_context_vectors, row_cosine, snap_to_codebook
from .inference import (BiasedFineNet, BiasedPrediction, bias_pairs, biased_inference, completion_cosine,
                        robustness_inference, robustness_pairs, train_biased_readout)
from .rbm import (FeatureScaler, Rbm, RbmTrainConfig, cd1_update, clamped_interplay,
                  denormalize_features, normalize_features, rbm_energy, reconstruction_error, train_rbm)

__all__ = [
    "BiasedFineNet", "BiasedPrediction", "ContextVector", "FeatureScaler", "Rbm", "RbmTrainConfig",
    "bias_pairs", "biased_inference", "cd1_update", "clamped_interplay", "codebook_matrix", "completion_cosine",
    "denormalize_features", "make_context_vectors", "normalize_features", "rbm_energy",
    "reconstruction_error", "robustness_inference", "robustness_pairs", "row_cosine", "snap_to_codebook",
    "train_biased_readout", "train_rbm",
]
