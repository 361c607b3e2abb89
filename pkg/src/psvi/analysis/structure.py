"""Segregation, urban-form and mobility measures, plus standardized PCA."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

OBSERVATION_DAYS = 28


def dissimilarity_index(minority, reference) -> float:
    """Half the total absolute difference between the two groups' tract shares."""
    x = np.asarray(minority, dtype=np.float64)
    y = np.asarray(reference, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError("count vectors differ in length")
    if (x < 0).any() or (y < 0).any():
        raise ValueError("counts must be non-negative")
    X, Y = x.sum(), y.sum()
    if X <= 0 or Y <= 0:
        raise ValueError("both groups need a positive total")
    return float(0.5 * np.abs(x / X - y / Y).sum())


@dataclass(frozen=True)
class Centrality:
    lc: float  # locational coefficient
    pi: float  # proximity index
    uci: float
    v: float


def urban_centrality_index(poi_counts, distances, v_max: float) -> Centrality:
    """Locational coefficient times proximity index of a facility distribution.

    ``poi_counts`` are normalized to shares ``k``; the coefficient is
    ``0.5 * Σ|k_i - 1/N|``, ``V = kᵀ D k`` and the proximity index is
    ``1 - V / v_max``. ``v_max`` is the spread of the same total settled
    uniformly on the boundary, supplied by the caller.
    """
    k = np.asarray(poi_counts, dtype=np.float64).ravel()
    D = np.asarray(distances, dtype=np.float64)
    n = k.size
    if D.shape != (n, n):
        raise ValueError(f"distance matrix must be {n}x{n}")
    if not np.allclose(D, D.T) or np.any(np.diag(D) != 0):
        raise ValueError("distance matrix must be symmetric with zero diagonal")
    if (k < 0).any() or k.sum() <= 0:
        raise ValueError("POI counts must be non-negative with a positive total")
    if not v_max > 0:
        raise ValueError("v_max must be positive")
    k = k / k.sum()
    lc = 0.5 * float(np.abs(k - 1.0 / n).sum())
    v = float(k @ D @ k)
    if v > v_max:
        raise ValueError(f"spread {v} exceeds v_max {v_max}")
    pi = 1.0 - v / v_max
    return Centrality(lc, pi, lc * pi, v)


def human_mobility_index(visits, days: int = OBSERVATION_DAYS) -> float:
    """Average daily visits per block group over the observation window."""
    v = np.asarray(visits, dtype=np.float64).ravel()
    if v.size == 0:
        raise ValueError("need at least one block group")
    if (v < 0).any():
        raise ValueError("visits must be non-negative")
    return float(v.sum() / (days * v.size))


def minmax_scale(raw: Mapping[str, float]) -> dict[str, float]:
    """Min-max scale a ``{county: value}`` mapping to [0, 1]; constant input maps to 0."""
    keys = list(raw)
    v = np.array([raw[k] for k in keys], dtype=np.float64)
    lo, hi = v.min(), v.max()
    s = np.zeros_like(v) if hi == lo else (v - lo) / (hi - lo)
    return dict(zip(keys, s.tolist()))


@dataclass(frozen=True)
class PCAResult:
    scores: np.ndarray  # rows x components
    loadings: np.ndarray  # features x components, orthonormal columns
    explained_variance_ratio: np.ndarray
    mean: np.ndarray
    scale: np.ndarray
    spectrum_ratio: np.ndarray  # explained-variance ratio of every direction

    def reconstruct(self) -> np.ndarray:
        """Standardized matrix rebuilt from the retained components."""
        return self.scores @ self.loadings.T


def standardize(X) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=np.float64)
    mean = X.mean(axis=0)
    scale = X.std(axis=0, ddof=1)
    if (scale == 0).any():
        raise ValueError("constant column cannot be standardized")
    return (X - mean) / scale, mean, scale


def pca(X, n_components: int = 3, standardized: bool = False) -> PCAResult:
    """Principal components of the (standardized) columns of ``X``.

    Components are ordered by explained variance; each loading vector is
    signed so that its largest-magnitude entry is positive.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("X must be 2-D")
    n, m = X.shape
    if not 1 <= n_components <= min(n, m):
        raise ValueError("n_components must be between 1 and min(rows, columns)")
    if standardized:
        Z, mean, scale = X, np.zeros(m), np.ones(m)
    else:
        Z, mean, scale = standardize(X)
    U, S, Vt = np.linalg.svd(Z, full_matrices=False)
    tol = S.max(initial=0.0) * max(n, m) * np.finfo(float).eps
    rank = int((S > tol).sum())
    if rank < n_components:
        raise ValueError(f"matrix rank {rank} is below n_components {n_components}")
    var = S ** 2
    loadings = Vt[:n_components].T.copy()
    for j in range(n_components):
        col = loadings[:, j]
        if col[np.argmax(np.abs(col))] < 0:
            loadings[:, j] = -col
    scores = Z @ loadings
    spectrum = var / var.sum()
    return PCAResult(scores, loadings, spectrum[:n_components], mean, scale, spectrum)
