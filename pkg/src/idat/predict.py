"""Label assignment from a trained topology."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import SIGMA_FLOOR, IdatModel, connected_components


@dataclass(frozen=True)
class ClusterAssignment:
    label: int
    winner: int
    similarity: float


def assign_cluster_indices(model: IdatModel) -> np.ndarray:
    """Component label of every node, inactive ones included."""
    if model.K == 0:
        raise ValueError("model has no nodes")
    labels, _ = connected_components(model.edges)
    return labels


def _check_queries(model: IdatModel, queries) -> np.ndarray:
    if model.K == 0:
        raise ValueError("model has no nodes")
    q = np.asarray(queries, dtype=float)
    if q.ndim != 2 or q.shape[1] != model.dim:
        raise ValueError(f"queries must have shape (n, {model.dim}), got {q.shape}")
    if not np.all(np.isfinite(q)):
        raise ValueError("queries contain non-finite values")
    return q


def _winners(model: IdatModel, queries: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    candidates = np.flatnonzero(model.active)
    if candidates.size == 0:
        candidates = np.arange(model.K)
    pos = model.positions[candidates]
    alpha = 1.0 / np.maximum(model.sigmas[candidates], SIGMA_FLOOR)
    diff = queries[:, None, :] - pos[None, :, :]
    dist = np.sqrt(np.einsum("nkd,nkd->nk", diff, diff))
    sim = 1.0 / (1.0 + alpha[None, :] * dist)
    # argmax returns the first maximum, and candidates are in index order
    best = np.argmax(sim, axis=1)
    rows = np.arange(queries.shape[0])
    return candidates[best], sim[rows, best]


def predict_batch(model: IdatModel, queries) -> np.ndarray:
    """Cluster labels for each row of ``queries``."""
    q = _check_queries(model, queries)
    labels = assign_cluster_indices(model)
    winner, _ = _winners(model, q)
    return labels[winner]


def predict(model: IdatModel, x) -> ClusterAssignment:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError(f"query must be one-dimensional, got shape {x.shape}")
    q = _check_queries(model, x[None, :])
    labels = assign_cluster_indices(model)
    winner, sim = _winners(model, q)
    w = int(winner[0])
    return ClusterAssignment(int(labels[w]), w, float(sim[0]))
