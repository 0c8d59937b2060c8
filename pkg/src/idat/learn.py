"""One clustering step per sample: node creation, winner selection, the
three-way vigilance decision, and the periodic topology maintenance pass."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .model import (
    SIGMA_FLOOR,
    IdatModel,
    activity_potential,
    remove_nodes,
    snapshot_interval_state,
)


class VigilanceCase(enum.Enum):
    CREATE_NODE = "create"
    UPDATE_WINNER = "winner"
    UPDATE_BOTH = "both"


@dataclass(frozen=True)
class WinnerPair:
    s1: int
    s2: int
    d1: float
    d2: float
    v1: float
    v2: float


def validate_sample(model: IdatModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError(f"sample must be one-dimensional, got shape {x.shape}")
    if not np.isfinite(x).all():
        raise ValueError("sample contains non-finite values")
    if model.dim is not None and x.shape[0] != model.dim:
        raise ValueError(f"sample dimension {x.shape[0]} does not match model dimension {model.dim}")
    return x


def create_node(model: IdatModel, x) -> IdatModel:
    """Add a node at ``x``; folds ``x`` into the global scale first."""
    return _create(model, validate_sample(model, x))


def _create(model: IdatModel, x: np.ndarray) -> IdatModel:
    model.scale.update(x)
    model.append_node(x, model.scale.sigma())
    if model.K == 2:
        model._sigma[0] = model._sigma[1]
    return model


def winners(model: IdatModel, x) -> WinnerPair:
    """Nearest and second-nearest nodes by Euclidean distance."""
    if model.K < 2:
        raise ValueError(f"need at least 2 nodes to select winners, have {model.K}")
    return _winners(model, validate_sample(model, x))


def _winners(model: IdatModel, x: np.ndarray) -> WinnerPair:
    diff = model.positions - x
    dist = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    s1 = int(np.argmin(dist))
    d1 = dist[s1]
    dist[s1] = np.inf
    s2 = int(np.argmin(dist))
    d2 = dist[s2]
    sig = model._sigma
    v1 = 1.0 / (1.0 + (1.0 / max(sig[s1], SIGMA_FLOOR)) * d1)
    v2 = 1.0 / (1.0 + (1.0 / max(sig[s2], SIGMA_FLOOR)) * d2)
    return WinnerPair(s1, s2, float(d1), float(d2), float(v1), float(v2))


def classify_case(v1: float, v2: float, v_threshold: float) -> VigilanceCase:
    if v1 < v_threshold:
        return VigilanceCase.CREATE_NODE
    if v2 > v_threshold:
        return VigilanceCase.UPDATE_BOTH
    return VigilanceCase.UPDATE_WINNER


def update_winner(model: IdatModel, s1: int, x) -> IdatModel:
    return _update_winner(model, s1, validate_sample(model, x))


def _update_winner(model: IdatModel, s1: int, x: np.ndarray) -> IdatModel:
    model._counts[s1] += 1
    model._pos[s1] += (x - model._pos[s1]) / model._counts[s1]
    model.scale.update(x)
    model._sigma[s1] = model.scale.sigma()
    return model


def _update_second(model: IdatModel, s1: int, s2: int, x: np.ndarray) -> None:
    model._counts[s2] += 1
    step = 1.0 / (model._counts[s1] + model._counts[s2])
    model._pos[s2] += step * (x - model._pos[s2])


def update_both(model: IdatModel, s1: int, s2: int, x) -> IdatModel:
    """Winner update, then move the runner-up with step 1/(M_s1 + M_s2)."""
    if s1 == s2:
        raise ValueError("s1 and s2 must differ")
    x = validate_sample(model, x)
    _update_winner(model, s1, x)
    _update_second(model, s1, s2, x)
    return model


def try_activate(model: IdatModel, s1: int, s2: int) -> IdatModel:
    counts = model.counts
    above = counts[counts > 1]
    if above.size == 0:
        return model
    t_active = above.sum() / above.size
    if counts[s1] > t_active and counts[s2] > t_active:
        model._active[s1] = True
        model._active[s2] = True
    return model


def accumulate_edge(model: IdatModel, s1: int, s2: int) -> IdatModel:
    count = model.increment_candidate(s1, s2)
    if count > model.candidate_mean():
        model._edges[s1, s2] = True
        model._edges[s2, s1] = True
    return model


def _upper_edge_pairs(model: IdatModel) -> tuple[np.ndarray, np.ndarray]:
    return np.nonzero(np.triu(model.edges, 1))


def prune_edges(model: IdatModel) -> int:
    """Drop edges longer than Q3 + 1.5 IQR of all edge lengths."""
    rows, cols = _upper_edge_pairs(model)
    if rows.size < 2:
        return 0
    pos = model.positions
    lengths = np.linalg.norm(pos[rows] - pos[cols], axis=1)
    q1, q3 = np.quantile(lengths, [0.25, 0.75])
    cut = lengths > q3 + 1.5 * (q3 - q1)
    if not cut.any():
        return 0
    ri, ci = rows[cut], cols[cut]
    model._edges[ri, ci] = False
    model._edges[ci, ri] = False
    model._cand[ri, ci] = 0
    model._cand[ci, ri] = 0
    model.recount_candidates()
    return int(cut.sum())


def delete_immature_nodes(model: IdatModel) -> int:
    """Keep only the ``lam`` most recent nodes that were never updated.

    Deletion stops early rather than leave fewer than three nodes.
    """
    lam = model.adaptive.lam
    once = np.flatnonzero(model.counts == 1)
    excess = min(once.size - lam, model.K - 3)
    if excess <= 0:
        return 0
    # stable sort: among equal creation times the later index is newer
    order = once[np.argsort(model.created_at[once], kind="stable")]
    doomed = order[:excess]
    remove_nodes(model, doomed)
    return int(doomed.size)


def demote_nodes(model: IdatModel) -> None:
    potential = activity_potential(model)
    positive = potential[potential > 0]
    if positive.size == 0:
        return
    q1, q3 = np.quantile(positive, [0.25, 0.75])
    lower = q1 - 1.5 * (q3 - q1)
    degree = model.degree()
    t_demote = model.config.t_demote
    for k in np.flatnonzero(model.active):
        if degree[k] == 0 and potential[k] < lower:
            model._inactivity[k] += 1
        else:
            model._inactivity[k] = 0
        if model._inactivity[k] >= t_demote:
            model._active[k] = False
            model._inactivity[k] = 0


def maintain_topology(model: IdatModel) -> IdatModel:
    prune_edges(model)
    delete_immature_nodes(model)
    demote_nodes(model)
    snapshot_interval_state(model)
    return model


def clustering_step(model: IdatModel, x, check: bool = True) -> VigilanceCase | None:
    """Process one sample and return the case applied (None while K < 3).

    ``check=False`` skips input validation for callers that already did it.
    """
    if check:
        x = validate_sample(model, x)
    model.samples_seen += 1
    if model.K < 3:
        _create(model, x)
        return None
    pair = _winners(model, x)
    case = classify_case(pair.v1, pair.v2, model.adaptive.v_threshold)
    if case is VigilanceCase.CREATE_NODE:
        _create(model, x)
    else:
        _update_winner(model, pair.s1, x)
        if case is VigilanceCase.UPDATE_BOTH:
            _update_second(model, pair.s1, pair.s2, x)
            try_activate(model, pair.s1, pair.s2)
            accumulate_edge(model, pair.s1, pair.s2)
    if model.samples_seen % model.adaptive.lam == 0:
        maintain_topology(model)
    return case
