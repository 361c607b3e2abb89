"""Labeled datasets: NRI labels, collinearity screening, splitting and SMOTE."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

log = logging.getLogger(__name__)

NRI_CATEGORIES = ("very low", "relatively low", "relatively moderate", "relatively high",
                  "very high")
VIF_CAP = 1e6


@dataclass
class LabeledDataset:
    X: np.ndarray
    y: np.ndarray
    ids: list[str]
    feature_names: tuple[str, ...] = ()

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.X.ndim != 2:
            raise ValueError("X must be 2-D")
        if not (self.X.shape[0] == self.y.size == len(self.ids)):
            raise ValueError("X, y and ids must have the same length")
        if not np.isin(self.y, (0, 1)).all():
            raise ValueError("labels must be 0 or 1")
        self.ids = list(self.ids)

    def __len__(self):
        return self.y.size

    def take(self, idx) -> "LabeledDataset":
        idx = np.asarray(idx, dtype=np.int64)
        return LabeledDataset(self.X[idx], self.y[idx], [self.ids[i] for i in idx],
                              self.feature_names)

    def class_counts(self) -> tuple[int, int]:
        return int((self.y == 0).sum()), int((self.y == 1).sum())


@dataclass
class LabelResult:
    labels: dict[str, int]
    rejects: list[tuple[str, str]]

    def class_counts(self) -> tuple[int, int]:
        v = list(self.labels.values())
        return v.count(0), v.count(1)


def label_from_nri(nri_table: Mapping[str, str]) -> LabelResult:
    """Binary labels from NRI categories: "very low" -> 0, any other category -> 1."""
    labels, rejects = {}, []
    for fips, cat in nri_table.items():
        key = " ".join(str(cat).strip().lower().split())
        if key not in NRI_CATEGORIES:
            rejects.append((fips, str(cat)))
            continue
        labels[fips] = 0 if key == "very low" else 1
    if rejects:
        log.warning("%d NRI rows with unknown category rejected", len(rejects))
    return LabelResult(labels, rejects)


def read_nri(source) -> dict[str, str]:
    df = pd.read_csv(source, dtype=str, keep_default_na=False)
    if not {"fips", "nri_category"} <= set(df.columns):
        from ..ingest import SchemaError
        raise SchemaError("NRI CSV needs columns fips,nri_category")
    return dict(zip(df["fips"].str.strip().str.zfill(5), df["nri_category"]))


def vif(X, names: Sequence[str] | None = None) -> np.ndarray:
    """Variance inflation factor of every column.

    Each column is regressed with an intercept on all others; VIF is
    ``1 / (1 - R^2)``, reported as ``VIF_CAP`` when the fit is numerically
    perfect.
    """
    X = np.asarray(getattr(X, "values", X), dtype=np.float64)
    n, m = X.shape
    names = list(names) if names is not None else [f"x{j}" for j in range(m)]
    if n < m + 2:
        raise ValueError(f"VIF needs at least {m + 2} rows, got {n}")
    const = np.ptp(X, axis=0) == 0
    if const.any():
        raise ValueError(f"constant column: {names[int(np.flatnonzero(const)[0])]}")
    out = np.empty(m)
    for j in range(m):
        target = X[:, j]
        design = np.column_stack([np.ones(n), np.delete(X, j, axis=1)])
        coef, *_ = np.linalg.lstsq(design, target, rcond=None)
        resid = target - design @ coef
        ss_tot = np.sum((target - target.mean()) ** 2)
        one_minus_r2 = np.sum(resid ** 2) / ss_tot
        out[j] = VIF_CAP if one_minus_r2 <= 1.0 / VIF_CAP else 1.0 / one_minus_r2
    return out


def _nearest(points: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k nearest other points (ties broken by index)."""
    sq = (points ** 2).sum(1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * points @ points.T
    np.fill_diagonal(d2, np.inf)
    return np.argsort(d2, axis=1, kind="stable")[:, :k]


def smote(dataset: LabeledDataset, k: int = 5, seed: int = 0,
          undersample: bool = False) -> LabeledDataset:
    """Balance classes with synthetic minority rows.

    New rows are ``x_i + u * (x_nn - x_i)`` for a random minority row ``x_i``,
    one of its ``k`` nearest minority neighbours ``x_nn`` and ``u ~ U(0, 1)``.
    Original rows are kept in place; synthetic rows are appended. With
    ``undersample`` the majority class is first randomly reduced to the midpoint
    of the two class sizes.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    n0, n1 = dataset.class_counts()
    if n0 == n1:
        return dataset
    minority = 0 if n0 < n1 else 1
    n_min, n_maj = min(n0, n1), max(n0, n1)
    if n_min < 2:
        raise ValueError("SMOTE needs at least 2 minority rows")
    rng = np.random.default_rng(seed)
    base = dataset
    target = n_maj
    if undersample:
        target = (n_min + n_maj) // 2
        maj_idx = np.flatnonzero(dataset.y != minority)
        keep_maj = np.sort(rng.choice(maj_idx, size=target, replace=False))
        keep = np.sort(np.concatenate([np.flatnonzero(dataset.y == minority), keep_maj]))
        base = dataset.take(keep)
    need = target - n_min
    if need <= 0:
        return base
    min_idx = np.flatnonzero(base.y == minority)
    pts = base.X[min_idx]
    kk = min(k, n_min - 1)
    nn = _nearest(pts, kk)
    seeds = rng.integers(0, n_min, size=need)
    picks = nn[seeds, rng.integers(0, kk, size=need)]
    u = rng.random(need)[:, None]
    synth = pts[seeds] + u * (pts[picks] - pts[seeds])
    ids = [f"synthetic:{i}" for i in range(need)]
    return LabeledDataset(np.vstack([base.X, synth]),
                          np.concatenate([base.y, np.full(need, minority)]),
                          base.ids + ids, dataset.feature_names)


def _allocate(counts: Sequence[int], total: int) -> list[int]:
    """Largest-remainder allocation of ``total`` across classes."""
    n = sum(counts)
    raw = [c * total / n for c in counts]
    alloc = [int(np.floor(r)) for r in raw]
    rema = sorted(range(len(counts)), key=lambda i: (-(raw[i] - alloc[i]), i))
    for i in rema[: total - sum(alloc)]:
        alloc[i] += 1
    for i, c in enumerate(counts):
        alloc[i] = min(max(alloc[i], 1), c - 1)
    return alloc


def split_train_test(dataset: LabeledDataset, test_fraction: float = 0.2,
                     seed: int = 0) -> tuple[LabeledDataset, LabeledDataset]:
    """Stratified random split; the test set has ``round(test_fraction * n)`` rows."""
    if len(dataset) < 5:
        raise ValueError("split needs at least 5 rows")
    if not 0 < test_fraction < 1:
        raise ValueError("test_fraction must be in (0, 1)")
    counts = dataset.class_counts()
    if min(counts) < 2:
        raise ValueError("each class needs at least 2 rows to split")
    rng = np.random.default_rng(seed)
    alloc = _allocate(counts, int(round(test_fraction * len(dataset))))
    test = []
    for cls, n_test in zip((0, 1), alloc):
        idx = np.flatnonzero(dataset.y == cls)
        test.append(rng.permutation(idx)[:n_test])
    test_idx = np.sort(np.concatenate(test))
    train_idx = np.setdiff1d(np.arange(len(dataset)), test_idx)
    return dataset.take(train_idx), dataset.take(test_idx)


def stratified_folds(y, folds: int, seed: int = 0) -> list[tuple[np.ndarray, np.ndarray]]:
    """(train, validation) index pairs; each class is dealt round-robin over folds."""
    y = np.asarray(y)
    if folds < 2:
        raise ValueError("folds must be >= 2")
    rng = np.random.default_rng(seed)
    assign = np.empty(y.size, dtype=np.int64)
    offset = 0
    for cls in (0, 1):
        idx = rng.permutation(np.flatnonzero(y == cls))
        assign[idx] = (np.arange(idx.size) + offset) % folds
        offset += idx.size
    out = []
    for f in range(folds):
        val = np.flatnonzero(assign == f)
        if len(np.unique(y[val])) < 2:
            raise ValueError(f"fold {f} lacks one of the classes")
        out.append((np.flatnonzero(assign != f), val))
    return out
