"""Self-adjusting ART-based topological clustering for data streams."""

from .adapt import History, partial_fit, train
from .model import IdatConfig, IdatModel
from .predict import ClusterAssignment, predict, predict_batch

__all__ = [
    "ClusterAssignment",
    "History",
    "IdatConfig",
    "IdatModel",
    "partial_fit",
    "predict",
    "predict_batch",
    "train",
]
