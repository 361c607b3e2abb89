"""Composite vulnerability values, percentile scores, five-level ratings and hotspots."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd
from scipy.stats import rankdata

from .features import FeatureMatrix

log = logging.getLogger(__name__)

RATINGS = ("minor", "moderate", "major", "severe", "extreme")
HIGH_RATINGS = frozenset(("major", "severe", "extreme"))
# (minimum years, label), checked from the top
HOTSPOT_TIERS = ((10, "=10"), (8, ">=8"), (6, ">=6"), (4, ">=4"), (2, ">=2"))
INDEX_COLUMNS = ("fips", "period", "value", "score", "rating")
HOTSPOT_COLUMNS = ("fips", "years_high", "tier")


@dataclass(frozen=True)
class PsviRow:
    fips: str
    period: str
    value: float
    score: float
    rating: str


@dataclass(frozen=True)
class HotspotFlag:
    fips: str
    years_high: int
    tier: str | None  # None below the lowest tier


def _weights_array(weights, names: Sequence[str]) -> np.ndarray:
    w_names = getattr(weights, "names", None)
    w = np.asarray(getattr(weights, "weights", weights), dtype=np.float64)
    if w.ndim != 1 or w.size != len(names):
        raise ValueError(f"expected {len(names)} weights, got shape {w.shape}")
    if w_names is not None and tuple(w_names) != tuple(names):
        raise ValueError("weight names do not match the feature column order")
    return w


def psvi_values(normalized: FeatureMatrix, weights) -> np.ndarray:
    """Weighted sum of the normalized feature columns, one value per row.

    Accumulates left to right in column order so results do not depend on the
    BLAS in use.
    """
    X = np.asarray(normalized.values, dtype=np.float64)
    w = _weights_array(weights, normalized.names)
    out = np.zeros(X.shape[0])
    for j in range(w.size):
        out += w[j] * X[:, j]
    return out


def rescale_values(values, low: float = 1.0, high: float = 100.0) -> np.ndarray:
    """Optional min-max rescale of index values to ``[low, high]``."""
    v = np.asarray(values, dtype=np.float64)
    lo, hi = v.min(), v.max()
    if hi == lo:
        return np.full_like(v, low)
    return low + (v - lo) * (high - low) / (hi - lo)


def percentile_scores(values):
    """Mid-rank percentile of each value: ``average_rank / n * 100``.

    Accepts an array or a ``{fips: value}`` mapping and returns the same kind.
    Scores are unrounded; round to two decimals when exporting.
    """
    if isinstance(values, Mapping):
        keys = list(values)
        s = percentile_scores(np.array([values[k] for k in keys], dtype=np.float64))
        return dict(zip(keys, s.tolist()))
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise ValueError("need at least one value")
    return rankdata(v, method="average") / v.size * 100.0


# -- 1-D k-means ------------------------------------------------------------

@dataclass(frozen=True)
class KMeansResult:
    labels: np.ndarray  # 0..k-1 in ascending centroid order
    centroids: np.ndarray  # ascending
    inertia: float
    n_iter: int


def _assign(v: np.ndarray, c: np.ndarray) -> np.ndarray:
    # c ascending; the first (lowest) centroid wins ties
    return np.abs(v[:, None] - c[None, :]).argmin(axis=1)


def _plusplus(v: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centers = [v[rng.integers(v.size)]]
    d2 = (v - centers[0]) ** 2
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            raise ValueError("not enough distinct values for k-means++")
        idx = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
        idx = min(idx, v.size - 1)
        while d2[idx] == 0:  # guard rounding at the cumulative boundary
            idx -= 1
        centers.append(v[idx])
        d2 = np.minimum(d2, (v - v[idx]) ** 2)
    return np.sort(np.array(centers))


def _lloyd(v: np.ndarray, c: np.ndarray, max_iter: int) -> KMeansResult:
    labels = _assign(v, c)
    for it in range(1, max_iter + 1):
        counts = np.bincount(labels, minlength=c.size)
        sums = np.bincount(labels, weights=v, minlength=c.size)
        new = c.copy()
        filled = counts > 0
        new[filled] = sums[filled] / counts[filled]
        for j in np.flatnonzero(~filled):
            # reseed an empty cluster at the point farthest from its centroid
            far = int(np.argmax(np.abs(v - new[labels])))
            new[j] = v[far]
        new = np.sort(new)
        new_labels = _assign(v, new)
        c = new
        if np.array_equal(new_labels, labels) and filled.all():
            break
        labels = new_labels
    inertia = float(((v - c[labels]) ** 2).sum())
    return KMeansResult(labels, c, inertia, it)


def kmeans_1d(values, k: int = 5, seed: int = 0, n_init: int = 20,
              max_iter: int = 300) -> KMeansResult:
    """Best-of-``n_init`` Lloyd k-means on scalars with k-means++ seeding.

    The restart with the lowest inertia wins; ties keep the earliest restart.
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    if np.unique(v).size < k:
        raise ValueError(f"need at least {k} distinct values")
    if n_init < 1:
        raise ValueError("n_init must be >= 1")
    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n_init)]
    best = None
    for rng in rngs:
        res = _lloyd(v, _plusplus(v, k, rng), max_iter)
        if best is None or res.inertia < best.inertia:
            best = res
    return best


def _distance_sums(x: np.ndarray, sorted_vals: np.ndarray, prefix: np.ndarray) -> np.ndarray:
    """Σ_j |x_i − s_j| for every x_i against the sorted sample ``s``."""
    n = sorted_vals.size
    lo = np.searchsorted(sorted_vals, x, side="left")
    below = prefix[lo]
    return x * lo - below + (prefix[n] - below) - x * (n - lo)


def silhouette_1d(values, labels) -> float:
    """Mean silhouette over all points; points in singleton clusters score 0."""
    v = np.asarray(values, dtype=np.float64).ravel()
    labels = np.asarray(labels)
    ks = np.unique(labels)
    if ks.size < 2:
        raise ValueError("silhouette needs at least two clusters")
    sums = np.empty((v.size, ks.size))
    sizes = np.empty(ks.size, dtype=np.int64)
    for j, lab in enumerate(ks):
        s = np.sort(v[labels == lab])
        sizes[j] = s.size
        sums[:, j] = _distance_sums(v, s, np.concatenate([[0.0], np.cumsum(s)]))
    own = np.searchsorted(ks, labels)
    n_own = sizes[own]
    a = np.where(n_own > 1, sums[np.arange(v.size), own] / np.maximum(n_own - 1, 1), 0.0)
    means = sums / sizes[None, :]
    means[np.arange(v.size), own] = np.inf
    b = means.min(axis=1)
    denom = np.maximum(a, b)
    s = np.where((n_own > 1) & (denom > 0), (b - a) / np.where(denom > 0, denom, 1.0), 0.0)
    return float(s.mean())


@dataclass(frozen=True)
class RatingResult:
    ratings: np.ndarray  # object array of rating names
    labels: np.ndarray
    centroids: np.ndarray
    silhouette: float


def kmeans_ratings(values, k: int = 5, seed: int = 0, n_init: int = 20,
                   names: Sequence[str] = RATINGS) -> RatingResult:
    """Cluster index values and name the clusters from lowest to highest centroid."""
    if len(names) != k:
        raise ValueError(f"need {k} rating names")
    v = np.asarray(values, dtype=np.float64).ravel()
    res = kmeans_1d(v, k, seed, n_init)
    sil = silhouette_1d(v, res.labels)
    ratings = np.array(names, dtype=object)[res.labels]
    return RatingResult(ratings, res.labels, res.centroids, sil)


def hotspot_tier(years_high: int) -> str | None:
    for need, label in HOTSPOT_TIERS:
        if need == 10 and years_high != 10:
            continue
        if years_high >= need:
            return label
    return None


def hotspots(annual_ratings) -> list[HotspotFlag]:
    """Count high-rated years per county and assign the highest satisfied tier.

    ``annual_ratings`` is either ``{fips: {year: rating}}`` or a frame with
    columns ``fips,year,rating``. Output is sorted by fips.
    """
    if isinstance(annual_ratings, pd.DataFrame):
        table: dict[str, dict] = {}
        for f, y, r in annual_ratings[["fips", "year", "rating"]].itertuples(index=False):
            table.setdefault(str(f), {})[y] = r
    else:
        table = {str(f): dict(v) for f, v in annual_ratings.items()}
    if not table:
        return []
    out = []
    for fips in sorted(table):
        years = table[fips]
        if not years:
            raise ValueError(f"county {fips} has no rated years")
        n = sum(1 for r in years.values() if r in HIGH_RATINGS)
        out.append(HotspotFlag(fips, n, hotspot_tier(n)))
    return out


# -- assembly and export ----------------------------------------------------

@dataclass
class IndexResult:
    rows: list[PsviRow]
    silhouette: float
    centroids: np.ndarray

    def to_frame(self) -> pd.DataFrame:
        return index_frame(self.rows)


def build_index(normalized: FeatureMatrix, weights, period: str | None = None, k: int = 5,
                seed: int = 0, n_init: int = 20, rescale: bool = False) -> IndexResult:
    """Values, scores and ratings for every county of ``normalized``."""
    values = psvi_values(normalized, weights)
    if rescale:
        values = rescale_values(values)
    scores = percentile_scores(values)
    rated = kmeans_ratings(values, k, seed, n_init)
    label = period if period is not None else normalized.period
    rows = [PsviRow(f, label, float(v), float(s), str(r))
            for f, v, s, r in zip(normalized.fips, values, scores, rated.ratings)]
    return IndexResult(rows, rated.silhouette, rated.centroids)


def index_frame(rows: Iterable[PsviRow]) -> pd.DataFrame:
    rows = list(rows)
    return pd.DataFrame({
        "fips": [r.fips for r in rows],
        "period": [r.period for r in rows],
        "value": [r.value for r in rows],
        "score": [round(r.score, 2) for r in rows],
        "rating": [r.rating for r in rows],
    }, columns=list(INDEX_COLUMNS))


def write_index(rows: Iterable[PsviRow], dest) -> None:
    frame = index_frame(rows)
    frame["score"] = frame["score"].map(lambda s: f"{s:.2f}")
    frame["value"] = frame["value"].map(repr)
    frame.to_csv(dest, index=False, lineterminator="\n")


def read_index(source) -> list[PsviRow]:
    df = pd.read_csv(source, dtype={"fips": str, "period": str, "rating": str},
                     float_precision="round_trip")
    return [PsviRow(f, p, float(v), float(s), r)
            for f, p, v, s, r in df[list(INDEX_COLUMNS)].itertuples(index=False)]


def write_hotspots(flags: Iterable[HotspotFlag], dest) -> None:
    flags = list(flags)
    pd.DataFrame({
        "fips": [h.fips for h in flags],
        "years_high": [h.years_high for h in flags],
        "tier": [h.tier or "" for h in flags],
    }, columns=list(HOTSPOT_COLUMNS)).to_csv(dest, index=False, lineterminator="\n")


def state_means(rows: Iterable[PsviRow]) -> pd.DataFrame:
    """Mean value and score per state (first two fips digits)."""
    rows = list(rows)
    df = index_frame(rows)
    df["score"] = [r.score for r in rows]
    df["state"] = df["fips"].str[:2]
    out = df.groupby(["state", "period"], sort=True).agg(
        n=("fips", "size"), mean_value=("value", "mean"), mean_score=("score", "mean"))
    return out.reset_index()
