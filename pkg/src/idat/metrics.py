"""Partition agreement scores and class-incremental summary metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln


@dataclass(frozen=True)
class ContingencyTable:
    counts: np.ndarray

    @property
    def row_sums(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def col_sums(self) -> np.ndarray:
        return self.counts.sum(axis=0)

    @property
    def n(self) -> int:
        return int(self.counts.sum())


def contingency_table(labels_true, labels_pred) -> ContingencyTable:
    a = np.asarray(labels_true).ravel()
    b = np.asarray(labels_pred).ravel()
    if a.shape != b.shape:
        raise ValueError(f"label vectors differ in length: {a.size} vs {b.size}")
    if a.size == 0:
        raise ValueError("label vectors are empty")
    if _small_codes(a) and _small_codes(b):
        # labels already usable as indices; empty rows/columns dropped below
        ia, ib = a.astype(np.int64), b.astype(np.int64)
    else:
        _, ia = np.unique(a, return_inverse=True)
        _, ib = np.unique(b, return_inverse=True)
    rows, cols = int(ia.max()) + 1, int(ib.max()) + 1
    counts = np.bincount(ia * cols + ib, minlength=rows * cols).reshape(rows, cols)
    counts = counts[counts.any(axis=1)][:, counts.any(axis=0)]
    return ContingencyTable(counts)


def _small_codes(x: np.ndarray) -> bool:
    return x.dtype.kind in "iub" and int(x.min()) >= 0 and int(x.max()) < 4 * x.size + 16


def _pairs(x: np.ndarray) -> float:
    """Number of unordered pairs inside each cell, summed (exact in int64)."""
    return float((x * (x - 1)).sum() // 2)


def ari(labels_true, labels_pred) -> float:
    """Adjusted Rand index (Hubert and Arabie)."""
    table = contingency_table(labels_true, labels_pred)
    counts = table.counts
    n = int(counts.sum())
    index = _pairs(counts)
    sum_a = _pairs(counts.sum(axis=1))
    sum_b = _pairs(counts.sum(axis=0))
    total = n * (n - 1) / 2.0
    expected = sum_a * sum_b / total if total > 0 else 0.0
    max_index = (sum_a + sum_b) / 2.0
    denom = max_index - expected
    if denom == 0:
        return 1.0
    return float((index - expected) / denom)


def _entropy(counts: np.ndarray) -> float:
    n = counts.sum()
    p = counts[counts > 0] / n
    return float(-np.sum(p * np.log(p)))


def mutual_info(table: ContingencyTable) -> float:
    c = table.counts.astype(float)
    n = c.sum()
    a = table.row_sums.astype(float)
    b = table.col_sums.astype(float)
    nz = c > 0
    outer = np.outer(a, b)
    return float(np.sum(c[nz] / n * (np.log(c[nz] * n) - np.log(outer[nz]))))


def expected_mutual_info(table: ContingencyTable) -> float:
    """Expected MI under the permutation (hypergeometric) model."""
    a = table.row_sums.astype(np.int64)
    b = table.col_sums.astype(np.int64)
    n = int(table.n)
    lg = gammaln(np.arange(n + 2, dtype=float))  # lg[k] = log((k-1)!)
    total = 0.0
    base = -lg[n + 1]
    for ai in a:
        for bj in b:
            lo = max(1, ai + bj - n)
            hi = min(ai, bj)
            if lo > hi:
                continue
            nij = np.arange(lo, hi + 1)
            term = nij / n * (np.log(n * nij) - np.log(ai * bj))
            logp = (lg[ai + 1] + lg[bj + 1] + lg[n - ai + 1] + lg[n - bj + 1] + base
                    - lg[nij + 1] - lg[ai - nij + 1] - lg[bj - nij + 1] - lg[n - ai - bj + nij + 1])
            total += float(np.sum(term * np.exp(logp)))
    return total


def ami(labels_true, labels_pred) -> float:
    """Adjusted mutual information, arithmetic-mean normalised."""
    table = contingency_table(labels_true, labels_pred)
    r, c = table.counts.shape
    n = table.n
    if (r == 1 and c == 1) or (r == n and c == n):
        return 1.0
    if r == 1 or c == 1:
        return 0.0
    mi = mutual_info(table)
    emi = expected_mutual_info(table)
    h_mean = 0.5 * (_entropy(table.row_sums) + _entropy(table.col_sums))
    denom = h_mean - emi
    if abs(denom) < np.finfo(float).eps:
        return 1.0
    return float((mi - emi) / denom)


def average_incremental(stage_scores) -> float:
    scores = np.asarray(stage_scores, dtype=float)
    if scores.size == 0:
        raise ValueError("no stage scores")
    return float(np.mean(scores))


@dataclass
class IncrementalRecord:
    """Per-stage scores and the ``matrix[i][j]`` score on class ``i`` after stage ``j``.

    ``matrix`` is upper-triangular: entries with ``j < i`` are NaN.
    """

    stage_scores: list[float]
    matrix: np.ndarray
    metric: str = "ari"

    @property
    def n_stages(self) -> int:
        return len(self.stage_scores)


def backward_transfer(record: IncrementalRecord) -> float:
    r = np.asarray(record.matrix, dtype=float)
    c = r.shape[0]
    if c < 2:
        raise ValueError("backward transfer needs at least two stages")
    idx = np.arange(c - 1)
    return float(np.mean(r[idx, c - 1] - r[idx, idx]))


def cluster_error(n_clusters: int, n_classes: int) -> float:
    if n_classes < 1:
        raise ValueError("n_classes must be >= 1")
    return abs(n_clusters - n_classes) / n_classes


METRICS = {"ari": ari, "ami": ami}


def evaluate_incremental_run(stage_predictions, labels, class_order, metric: str = "ari") -> IncrementalRecord:
    """Score a class-incremental run from per-stage predictions.

    Parameters
    ----------
    stage_predictions : sequence of array
        Entry ``c`` holds the labels the model predicts after stage ``c``
        for every sample, aligned with ``labels``. Samples of classes not
        yet seen are ignored.
    labels : array of int
        True class of every sample.
    class_order : sequence of int
        Class presented at each stage.
    metric : {"ari", "ami"}
    """
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}")
    score = METRICS[metric]
    labels = np.asarray(labels)
    order = list(class_order)
    if len(stage_predictions) != len(order):
        raise ValueError(f"{len(stage_predictions)} snapshots for {len(order)} stages")
    if len(set(order)) != len(order):
        raise ValueError("class order repeats a class")
    c = len(order)
    stage_scores = []
    matrix = np.full((c, c), np.nan)
    for j, preds in enumerate(stage_predictions):
        preds = np.asarray(preds)
        if preds.shape != labels.shape:
            raise ValueError(f"stage {j}: predictions shape {preds.shape} != labels shape {labels.shape}")
        seen = np.isin(labels, order[: j + 1])
        stage_scores.append(score(labels[seen], preds[seen]))
        for i in range(j + 1):
            mask = labels == order[i]
            matrix[i, j] = score(labels[mask], preds[mask])
    return IncrementalRecord(stage_scores, matrix, metric)
