"""Spatial domain generalization with graph-interpolated embeddings.

Seen locations carry learned embeddings on a directed K-NN graph. An
attention-based graph convolution interpolates the embedding of any 2D
location, and a hypernetwork decodes it into the weights of a small
location-specific prediction model.
"""

from .errors import SpatialDGError
from .spatial_graph import (
    EdgeRep,
    KnnGraph,
    Location,
    augment_with_query,
    build_knn_graph,
    edge_representation,
    signed_angle,
)
from .downstream import TaskModelSpec, param_count
from .trainer import TrainConfig, TrainedModel, evaluate, split_domains, train

__all__ = [
    "SpatialDGError",
    "EdgeRep",
    "KnnGraph",
    "Location",
    "augment_with_query",
    "build_knn_graph",
    "edge_representation",
    "signed_angle",
    "TaskModelSpec",
    "param_count",
    "TrainConfig",
    "TrainedModel",
    "evaluate",
    "split_domains",
    "train",
]

__version__ = "0.1.0"
