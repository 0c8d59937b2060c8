"""Builders for hand-made model states."""

from __future__ import annotations

import numpy as np

from idat.model import IdatConfig, IdatModel


def make_model(positions, counts=None, sigmas=None, active=None, edges=None, candidates=None,
               config: IdatConfig | None = None) -> IdatModel:
    pos = np.asarray(positions, dtype=float)
    k = pos.shape[0]
    model = IdatModel(config)
    for i in range(k):
        model.samples_seen = i + 1
        model.append_node(pos[i], 1.0)
    if counts is not None:
        model._counts[:k] = counts
    if sigmas is not None:
        model._sigma[:k] = sigmas
    if active is not None:
        model._active[:k] = active
    if edges is not None:
        e = np.asarray(edges, dtype=bool)
        model._edges[:k, :k] = e | e.T
    if candidates is not None:
        c = np.asarray(candidates, dtype=np.int64)
        model._cand[:k, :k] = c
    model.recount_candidates()
    return model


def edge_matrix(k: int, pairs) -> np.ndarray:
    e = np.zeros((k, k), dtype=bool)
    for i, j in pairs:
        e[i, j] = e[j, i] = True
    return e


def random_stream(rng: np.random.Generator, n: int, d: int, centers: int = 3, spread: float = 1.0) -> np.ndarray:
    mus = rng.normal(0.0, 5.0, size=(centers, d))
    which = rng.integers(0, centers, size=n)
    return mus[which] + rng.normal(0.0, spread, size=(n, d))


def assert_state_equal(a: IdatModel, b: IdatModel, rtol: float = 0.0, atol: float = 1e-12) -> None:
    assert a.K == b.K
    assert a.samples_seen == b.samples_seen
    np.testing.assert_array_equal(a.counts, b.counts)
    np.testing.assert_array_equal(a.active, b.active)
    np.testing.assert_array_equal(a.inactivity, b.inactivity)
    np.testing.assert_array_equal(a.created_at, b.created_at)
    np.testing.assert_array_equal(a.edges, b.edges)
    np.testing.assert_array_equal(a.candidates, b.candidates)
    np.testing.assert_array_equal(a.prev_counts, b.prev_counts)
    np.testing.assert_array_equal(a.prev_candidates, b.prev_candidates)
    np.testing.assert_allclose(a.positions, b.positions, rtol=rtol, atol=atol)
    np.testing.assert_allclose(a.sigmas, b.sigmas, rtol=rtol, atol=atol)
    assert a.adaptive.lam == b.adaptive.lam
    assert a.adaptive.r == b.adaptive.r
    assert abs(a.adaptive.q - b.adaptive.q) <= atol
    assert abs(a.adaptive.v_threshold - b.adaptive.v_threshold) <= atol
    assert len(a.adaptive.buffer) == len(b.adaptive.buffer)
    for x, y in zip(a.adaptive.buffer, b.adaptive.buffer):
        np.testing.assert_array_equal(x, y)
