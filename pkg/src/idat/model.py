"""Persistent state of an IDAT clusterer and the graph utilities built on it.

Node attributes and the K x K topology matrices are stored as numpy arrays
with spare capacity, so node creation is amortised O(K) instead of a full
reallocation per node. Everything outside this module sees exact K-sized
views through the properties of :class:`IdatModel`.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

SIGMA_FLOOR = 1e-12


@dataclass
class Node:
    """Read-only snapshot of one prototype."""

    position: np.ndarray
    update_count: int
    sigma: float
    active: bool
    inactivity: int
    created_at: int


@dataclass
class Topology:
    """Copy of the edge state, sized to the current node count."""

    edges: np.ndarray
    candidates: np.ndarray
    prev_counts: np.ndarray
    prev_candidates: np.ndarray


class GlobalScale:
    """Welford accumulator over every training sample.

    ``sigma()`` is the arithmetic mean of the per-dimension population
    variances, which is 0 after a single sample.
    """

    def __init__(self, dim: int | None = None):
        self.count = 0
        self.mean = None if dim is None else np.zeros(dim)
        self.m2 = None if dim is None else np.zeros(dim)

    def update(self, x: np.ndarray) -> None:
        if self.mean is None:
            self.mean = np.zeros(x.shape[0])
            self.m2 = np.zeros(x.shape[0])
        self.count += 1
        delta = x - self.mean
        self.mean = self.mean + delta / self.count
        self.m2 = self.m2 + delta * (x - self.mean)

    def variance(self) -> np.ndarray:
        if self.mean is None:
            return np.zeros(0)
        if self.count <= 1:
            return np.zeros_like(self.mean)
        return self.m2 / self.count

    def sigma(self) -> float:
        var = self.variance()
        if var.size == 0:
            return 0.0
        return float(np.mean(var))


@dataclass
class AdaptiveState:
    """Recalculation interval, vigilance and the recent-sample buffer."""

    lam: int = 2
    v_threshold: float = 0.0
    q: float = 0.0
    r: int = 0
    buffer: deque = field(default_factory=deque)

    def push(self, x: np.ndarray) -> None:
        self.buffer.append(x)
        self.trim()

    def trim(self) -> None:
        while len(self.buffer) > 2 * self.lam:
            self.buffer.popleft()

    def window(self) -> np.ndarray:
        return np.array(self.buffer)


@dataclass(frozen=True)
class IdatConfig:
    lambda_init: int = 2
    eps_det: float = 1.0e-6
    t_demote: int = 2
    disable_decremental: bool = False
    disable_incremental: bool = False
    disable_all_adaptation: bool = False

    def __post_init__(self):
        if self.lambda_init < 2:
            raise ValueError(f"lambda_init must be >= 2, got {self.lambda_init}")
        if self.t_demote < 1:
            raise ValueError(f"t_demote must be >= 1, got {self.t_demote}")

    @classmethod
    def for_ablation(cls, name: str, lambda_init: int = 2) -> "IdatConfig":
        """Config for one of ``full``, ``no_dec``, ``no_inc``, ``no_all``."""
        flags = {
            "full": {},
            "no_dec": {"disable_decremental": True},
            "no_inc": {"disable_incremental": True},
            "no_all": {"disable_all_adaptation": True},
        }
        if name not in flags:
            raise ValueError(f"unknown ablation {name!r}; expected one of {sorted(flags)}")
        return cls(lambda_init=lambda_init, **flags[name])


class IdatModel:
    """All mutable state of one IDAT instance.

    Parameters
    ----------
    config : IdatConfig, optional
        Adaptation switches and constants. Defaults to the full algorithm
        with an initial recalculation interval of 2.
    """

    def __init__(self, config: IdatConfig | None = None):
        self.config = config or IdatConfig()
        self.dim: int | None = None
        self.K = 0
        self.samples_seen = 0
        self.scale = GlobalScale()
        self.adaptive = AdaptiveState(lam=self.config.lambda_init)
        self._cap = 0
        self._alloc(0, 8)
        # running sum / positive-entry count over the full symmetric E^cand
        self._cand_total = 0
        self._cand_positive = 0

    # -- storage ---------------------------------------------------------
    def _alloc(self, dim: int, cap: int) -> None:
        self._pos = np.zeros((cap, dim))
        self._counts = np.zeros(cap, dtype=np.int64)
        self._sigma = np.zeros(cap)
        self._active = np.zeros(cap, dtype=bool)
        self._inactivity = np.zeros(cap, dtype=np.int64)
        self._created = np.zeros(cap, dtype=np.int64)
        self._edges = np.zeros((cap, cap), dtype=bool)
        self._cand = np.zeros((cap, cap), dtype=np.int64)
        self._prev_counts = np.zeros(cap, dtype=np.int64)
        self._prev_cand = np.zeros((cap, cap), dtype=np.int64)
        self._cap = cap

    _ROW_ARRAYS = ("_pos", "_counts", "_sigma", "_active", "_inactivity", "_created", "_prev_counts")
    _MATRICES = ("_edges", "_cand", "_prev_cand")

    def _grow(self) -> None:
        k = self.K
        old = {name: getattr(self, name) for name in self._ROW_ARRAYS + self._MATRICES}
        self._alloc(self._pos.shape[1], max(8, 2 * self._cap))
        for name in self._ROW_ARRAYS:
            getattr(self, name)[:k] = old[name][:k]
        for name in self._MATRICES:
            getattr(self, name)[:k, :k] = old[name][:k, :k]

    def append_node(self, x: np.ndarray, sigma: float) -> int:
        """Append a fresh inactive node at ``x`` and return its index."""
        if self.dim is None:
            self.dim = x.shape[0]
            self._alloc(self.dim, self._cap)
        if self.K == self._cap:
            self._grow()
        k = self.K
        self._pos[k] = x
        self._counts[k] = 1
        self._sigma[k] = sigma
        self._active[k] = False
        self._inactivity[k] = 0
        self._created[k] = self.samples_seen
        # rows/cols k were zeroed at allocation or by remove_nodes
        self.K += 1
        return k

    # -- K-sized views ---------------------------------------------------
    @property
    def positions(self) -> np.ndarray:
        return self._pos[: self.K]

    @property
    def counts(self) -> np.ndarray:
        return self._counts[: self.K]

    @property
    def sigmas(self) -> np.ndarray:
        return self._sigma[: self.K]

    @property
    def active(self) -> np.ndarray:
        return self._active[: self.K]

    @property
    def inactivity(self) -> np.ndarray:
        return self._inactivity[: self.K]

    @property
    def created_at(self) -> np.ndarray:
        return self._created[: self.K]

    @property
    def edges(self) -> np.ndarray:
        return self._edges[: self.K, : self.K]

    @property
    def candidates(self) -> np.ndarray:
        return self._cand[: self.K, : self.K]

    @property
    def prev_counts(self) -> np.ndarray:
        return self._prev_counts[: self.K]

    @property
    def prev_candidates(self) -> np.ndarray:
        return self._prev_cand[: self.K, : self.K]

    @property
    def nodes(self) -> list[Node]:
        return [
            Node(self._pos[k].copy(), int(self._counts[k]), float(self._sigma[k]),
                 bool(self._active[k]), int(self._inactivity[k]), int(self._created[k]))
            for k in range(self.K)
        ]

    @property
    def topology(self) -> Topology:
        return Topology(self.edges.copy(), self.candidates.copy(),
                        self.prev_counts.copy(), self.prev_candidates.copy())

    def alphas(self) -> np.ndarray:
        return 1.0 / np.maximum(self.sigmas, SIGMA_FLOOR)

    # -- edge-candidate bookkeeping -------------------------------------
    def increment_candidate(self, i: int, j: int) -> int:
        if self._cand[i, j] == 0:
            self._cand_positive += 2
        self._cand[i, j] += 1
        self._cand[j, i] += 1
        self._cand_total += 2
        return int(self._cand[i, j])

    def candidate_mean(self) -> float:
        """Mean of the strictly positive edge-candidate entries (0 if none)."""
        if self._cand_positive == 0:
            return 0.0
        return self._cand_total / self._cand_positive

    def recount_candidates(self) -> None:
        cand = self.candidates
        self._cand_total = int(cand.sum())
        self._cand_positive = int(np.count_nonzero(cand))

    def degree(self) -> np.ndarray:
        return self.edges.sum(axis=1)


def connected_components(edges: np.ndarray, node_count: int | None = None) -> tuple[np.ndarray, int]:
    """Label the connected components of an undirected adjacency matrix.

    Labels are contiguous from 0 and numbered in order of each component's
    smallest node index.

    Returns
    -------
    labels : np.ndarray of int
    n_components : int
    """
    edges = np.asarray(edges, dtype=bool)
    n = edges.shape[0] if node_count is None else node_count
    if edges.shape != (n, n):
        raise ValueError(f"adjacency shape {edges.shape} does not match node count {n}")
    parent = list(range(n))

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    rows, cols = np.nonzero(np.triu(edges, 1) | np.triu(edges.T, 1))
    for i, j in zip(rows.tolist(), cols.tolist()):
        ri, rj = find(i), find(j)
        if ri != rj:
            # keep the smaller index as root so labels follow first appearance
            if ri < rj:
                parent[rj] = ri
            else:
                parent[ri] = rj
    labels = np.empty(n, dtype=np.int64)
    seen: dict[int, int] = {}
    for k in range(n):
        root = find(k)
        if root not in seen:
            seen[root] = len(seen)
        labels[k] = seen[root]
    return labels, len(seen)


def remove_nodes(model: IdatModel, indices) -> IdatModel:
    """Delete nodes in place, compacting every per-node array and matrix."""
    idx = sorted(int(i) for i in indices)
    if not idx:
        return model
    if len(set(idx)) != len(idx):
        raise ValueError("duplicate node indices")
    if idx[0] < 0 or idx[-1] >= model.K:
        raise IndexError(f"node index out of range for K={model.K}: {idx}")
    keep = np.setdiff1d(np.arange(model.K), idx)
    k_new = keep.size
    k_old = model.K
    for name in IdatModel._ROW_ARRAYS:
        arr = getattr(model, name)
        arr[:k_new] = arr[keep]
        arr[k_new:k_old] = 0
    for name in IdatModel._MATRICES:
        mat = getattr(model, name)
        mat[:k_new, :k_new] = mat[np.ix_(keep, keep)]
        mat[k_new:k_old, :] = 0
        mat[:, k_new:k_old] = 0
    model.K = k_new
    model.recount_candidates()
    return model


def snapshot_interval_state(model: IdatModel) -> IdatModel:
    """Record the update counts and edge candidates for the next interval."""
    k = model.K
    model._prev_counts[:k] = model._counts[:k]
    model._prev_cand[:k, :k] = model._cand[:k, :k]
    return model


def activity_potential(model: IdatModel) -> np.ndarray:
    """Per-node change in update count plus change in candidate row sums."""
    delta_m = model.counts - model.prev_counts
    delta_c = model.candidates.sum(axis=1) - model.prev_candidates.sum(axis=1)
    return delta_m + delta_c
