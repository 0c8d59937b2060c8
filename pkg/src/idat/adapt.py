"""Diversity-driven adaptation of the recalculation interval and vigilance,
plus the streaming training loop that ties it to the clustering step.

Windows are always suffixes of the sample buffer. Reversing the buffer turns
every suffix into a leading block, and the Cholesky factor of a leading
principal submatrix is the leading block of the full factor. One
factorisation of the reversed buffer therefore yields the verdict for every
window length at once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg.lapack import dpotrf
from scipy.spatial.distance import pdist, squareform

from .learn import clustering_step, validate_sample
from .model import SIGMA_FLOOR, IdatModel, connected_components


@dataclass(frozen=True)
class StabilityVerdict:
    is_stable: bool
    det_estimate: float | None


@dataclass(frozen=True)
class SimilarityWindow:
    matrix: np.ndarray
    alpha_star: float

    @property
    def length(self) -> int:
        return self.matrix.shape[0]


def global_alpha(sigmas: np.ndarray) -> float:
    """Inverse of the largest node scale."""
    return 1.0 / max(float(np.max(sigmas)), SIGMA_FLOOR)


def build_similarity_matrix(samples, alpha_star: float) -> SimilarityWindow:
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2 or samples.shape[0] < 2:
        raise ValueError(f"need a window of at least 2 samples, got shape {samples.shape}")
    if not alpha_star > 0:
        raise ValueError(f"alpha_star must be positive, got {alpha_star}")
    # direct differences keep duplicate rows at exactly zero distance
    dist = squareform(pdist(samples))
    return SimilarityWindow(1.0 / (1.0 + alpha_star * dist), alpha_star)


def cholesky_pivots(matrix: np.ndarray) -> np.ndarray:
    """Squared diagonal of the Cholesky factor up to the first failed pivot.

    A pivot that is not strictly positive or not finite ends the
    factorisation; the returned array then holds only the pivots of the
    leading block that did factor.
    """
    a = np.asarray(matrix, dtype=float)
    n = a.shape[0]
    if n == 0:
        return np.empty(0)
    if not np.isfinite(a).all():
        # LAPACK does not promise to flag NaN inputs, so find the usable block
        bad = ~np.isfinite(a)
        first = int(np.argmax(bad.any(axis=0) | bad.any(axis=1)))
        return cholesky_pivots(a[:first, :first])
    factor, info = dpotrf(a, lower=1, clean=0)
    if info < 0:
        raise ValueError("invalid matrix passed to the Cholesky factorisation")
    if info == 1:
        return np.empty(0)
    if info > 0:
        # leading minor of order ``info`` failed; refactor the block before it
        factor, info = dpotrf(a[: info - 1, : info - 1], lower=1, clean=0)
    return np.diag(factor) ** 2


def assess_stability(window: SimilarityWindow, eps_det: float = 1.0e-6) -> StabilityVerdict:
    matrix = window.matrix
    pivots = cholesky_pivots(matrix)
    if pivots.size < matrix.shape[0]:
        return StabilityVerdict(False, None)
    det = float(np.prod(pivots))
    return StabilityVerdict(det >= eps_det, det)


def suffix_stability(samples: np.ndarray, alpha_star: float, eps_det: float) -> np.ndarray:
    """``out[L]`` tells whether the last ``L`` samples form a stable window.

    Entries 0 and 1 are always False.
    """
    m = samples.shape[0]
    out = np.zeros(m + 1, dtype=bool)
    if m < 2:
        return out
    sim = build_similarity_matrix(samples[::-1], alpha_star).matrix
    pivots = cholesky_pivots(sim)
    dets = np.cumprod(pivots)
    lengths = np.arange(1, pivots.size + 1)
    ok = lengths[dets >= eps_det]
    out[ok[ok >= 2]] = True
    return out


def adjust_lambda(buffer, lam: int, alpha_star: float, config) -> int:
    """New recalculation interval from the stability of buffer suffixes."""
    samples = np.asarray(buffer, dtype=float)
    if config.disable_all_adaptation:
        return lam
    m = samples.shape[0]
    stable = suffix_stability(samples, alpha_star, config.eps_det)

    top = min(lam, m)
    scan = range(top, 1, -1)
    need_incremental = all(stable[L] for L in scan)
    if config.disable_decremental:
        new_lam = lam
        need_incremental = True
    else:
        found = next((L for L in scan if stable[L]), 0)
        new_lam = found if found > 0 else 2

    if need_incremental and not config.disable_incremental:
        l_max = min(2 * lam, m)
        grown = l_max
        for L in range(new_lam + 1, l_max + 1):
            if not stable[L]:
                grown = L - 1
                break
        new_lam = grown
    return int(new_lam)


def update_quantile_level(q_prev: float, lam_new: int, n_components: int, n_nodes: int) -> float:
    if n_nodes <= 0:
        raise ValueError("node count must be positive")
    w = 1.0 / lam_new
    q = 1.0 - ((1.0 - w) * q_prev + w * (n_components / n_nodes))
    return float(min(1.0, max(0.0, q)))


def recompute_vigilance(window: SimilarityWindow, q: float) -> float:
    """Quantile ``q`` of the per-row maximum off-diagonal similarity."""
    s = window.matrix.copy()
    np.fill_diagonal(s, -np.inf)
    row_max = s.max(axis=1)
    return float(np.quantile(row_max, q))


def adaptation_step(model: IdatModel) -> None:
    """Recompute interval, quantile level and vigilance from the buffer."""
    state = model.adaptive
    window = state.window()
    alpha_star = global_alpha(model.sigmas)
    new_lam = adjust_lambda(window, state.lam, alpha_star, model.config)
    _, n_comp = connected_components(model.edges)
    q = update_quantile_level(state.q, new_lam, n_comp, model.K)
    recent = window[-min(new_lam, window.shape[0]):]
    v = recompute_vigilance(build_similarity_matrix(recent, alpha_star), q)
    state.lam = new_lam
    state.q = q
    state.v_threshold = v
    state.trim()


class History:
    """Per-sample trace of the recalculation interval and vigilance."""

    def __init__(self):
        self.lam: list[int] = []
        self.v_threshold: list[float] = []

    def record(self, model: IdatModel) -> None:
        self.lam.append(model.adaptive.lam)
        self.v_threshold.append(model.adaptive.v_threshold)


def partial_fit(model: IdatModel, x) -> IdatModel:
    """Feed one sample through buffer, clustering step and adaptation."""
    state = model.adaptive
    # validate before touching the buffer so a rejected sample leaves no trace
    x = validate_sample(model, np.array(x, dtype=float))
    state.push(x)
    clustering_step(model, x, check=False)
    state.r += 1
    if state.r >= state.lam and model.K > 2:
        if not model.config.disable_all_adaptation:
            adaptation_step(model)
        state.r = 0
    return model


def train(model: IdatModel, samples, history: History | None = None) -> IdatModel:
    """Stream ``samples`` (rows) through the model, carrying state over.

    A bad row raises ``ValueError`` after every earlier row has been learned.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        return model
    if samples.ndim != 2:
        raise ValueError(f"expected a 2-D sample matrix, got shape {samples.shape}")
    for i, x in enumerate(samples):
        try:
            partial_fit(model, x)
        except ValueError as exc:
            raise ValueError(f"row {i}: {exc}") from exc
        if history is not None:
            history.record(model)
    return model
