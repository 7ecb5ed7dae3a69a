"""featnet: joint embedding of network structure and node features.

A multitask graph-convolutional variational autoencoder in which a
configurable number of embedding dimensions is shared between the
adjacency-reconstruction and feature-reconstruction tasks, plus the
synthetic-data generators and evaluation protocols used to study that
overlap.
"""

__version__ = "0.1.0"

from .graph import NormalizedAdjacency, SparseAdjacency, density, normalize_adjacency, spmm
from .model import (
    DecoderWeights,
    DimensionSplit,
    EmbeddingDistribution,
    EmbeddingSample,
    EncoderWeights,
    ModelConfig,
    ModelWeights,
    count_parameters,
    decode_adjacency_deep,
    decode_adjacency_shallow,
    decode_features,
    encode,
    merge_overlap,
    sample_embeddings,
)
from .losses import (
    LossBreakdown,
    LossConfig,
    adjacency_loss_balanced,
    feature_loss,
    kl_loss,
    theta_loss,
    total_loss,
)
from .synth import FeatureConfig, FeaturedGraph, SbmConfig, assign_features, generate_sbm, make_featured_graph
from .train import AdamState, TrainConfig, TrainTrace, TrainingDivergedError, adam_step, glorot_init, train

__all__ = [
    "AdamState",
    "DecoderWeights",
    "DimensionSplit",
    "EmbeddingDistribution",
    "EmbeddingSample",
    "EncoderWeights",
    "FeatureConfig",
    "FeaturedGraph",
    "LossBreakdown",
    "LossConfig",
    "ModelConfig",
    "ModelWeights",
    "NormalizedAdjacency",
    "SbmConfig",
    "SparseAdjacency",
    "TrainConfig",
    "TrainTrace",
    "TrainingDivergedError",
    "adam_step",
    "adjacency_loss_balanced",
    "assign_features",
    "count_parameters",
    "decode_adjacency_deep",
    "decode_adjacency_shallow",
    "decode_features",
    "density",
    "encode",
    "feature_loss",
    "generate_sbm",
    "glorot_init",
    "kl_loss",
    "make_featured_graph",
    "merge_overlap",
    "normalize_adjacency",
    "sample_embeddings",
    "spmm",
    "theta_loss",
    "total_loss",
    "train",
]
