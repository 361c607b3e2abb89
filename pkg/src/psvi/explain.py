"""Shapley attributions for tree ensembles and SHAP-derived index weights."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import pandas as pd

from . import kernels
from .features import FEATURE_DIMENSIONS
from .model.gbdt import TreeEnsemble

WEIGHT_MODES = ("signed", "absolute", "minmax")
SIGNINGS = ("directional", "mean")
DIMENSIONS = ("frequency", "intensity", "duration")


class ModelIntegrityError(ValueError):
    pass


@dataclass(frozen=True)
class Attribution:
    values: np.ndarray  # per-feature, log-odds units
    base: float


def _check_covers(ensemble: TreeEnsemble) -> None:
    for i, t in enumerate(ensemble.trees):
        internal = t.feature >= 0
        if (t.cover[internal] <= 0).any() or (t.n_nodes and t.cover[0] <= 0):
            raise ModelIntegrityError(f"tree {i} has an internal node with zero cover")


def shap_values(ensemble: TreeEnsemble, X) -> tuple[np.ndarray, float]:
    """Path-dependent TreeSHAP for every row of ``X``.

    Returns ``(phi, base)`` where ``phi[i].sum() + base`` equals the margin of
    row ``i``; ``base`` is the cover-weighted expected margin.
    """
    _check_covers(ensemble)
    X = np.asarray(X, dtype=np.float64)
    X = np.ascontiguousarray(X[None, :] if X.ndim == 1 else X)
    m = ensemble.n_features if ensemble.feature_names else X.shape[1]
    if X.shape[1] != m:
        raise ValueError(f"expected {m} features, got {X.shape[1]}")
    p = ensemble.packed
    phi = kernels.tree_shap(X, p["roots"], p["depths"], p["feature"], p["threshold"],
                            p["left"], p["right"], p["value"], p["cover"])
    return phi, ensemble.expected_margin()


def tree_shap(ensemble: TreeEnsemble, x) -> Attribution:
    phi, base = shap_values(ensemble, np.asarray(x, dtype=np.float64).reshape(1, -1))
    return Attribution(phi[0], base)


@dataclass
class ImportanceTable:
    """Global importances per feature.

    ``signed`` is the importance used for weighting. Under the default
    ``directional`` signing it is the mean absolute attribution carrying the
    sign of the feature's effect (covariance between feature value and its
    attribution); under ``mean`` signing it equals ``mean_shap``, the plain
    average attribution. ``abs_mean`` is the mean magnitude.
    """

    names: tuple[str, ...]
    signed: np.ndarray
    abs_mean: np.ndarray
    mean_shap: np.ndarray
    dimensions: tuple[str, ...]

    def dimension_totals(self, which: str = "signed") -> dict[str, float]:
        vals = getattr(self, which)
        return {d: float(sum(v for v, dd in zip(vals, self.dimensions) if dd == d))
                for d in dict.fromkeys(self.dimensions)}

    def dimension_shares(self) -> dict[str, float]:
        """Signed dimension totals as percentages of the summed magnitudes."""
        tot = self.dimension_totals("signed")
        denom = sum(abs(v) for v in tot.values())
        return {d: (100.0 * v / denom if denom else 0.0) for d, v in tot.items()}

    def to_frame(self, weights: "WeightVector | None" = None) -> pd.DataFrame:
        df = pd.DataFrame({
            "feature": list(self.names),
            "dimension": list(self.dimensions),
            "signed_importance": self.signed,
            "abs_importance": self.abs_mean,
        })
        df["weight"] = weights.weights if weights is not None else np.nan
        df["mean_shap"] = self.mean_shap
        return df


def importance_from_shap(phi: np.ndarray, X: np.ndarray, names: Sequence[str],
                         dimensions: Sequence[str] | None = None,
                         signing: str = "directional") -> ImportanceTable:
    if signing not in SIGNINGS:
        raise ValueError(f"signing must be one of {SIGNINGS}")
    phi = np.asarray(phi, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    if phi.shape != X.shape or phi.shape[0] == 0:
        raise ValueError("attributions and data must be non-empty and aligned")
    abs_mean = np.abs(phi).mean(axis=0)
    mean_shap = phi.mean(axis=0)
    xc = X - X.mean(axis=0)
    pc = phi - mean_shap
    cov = (xc * pc).sum(axis=0)
    signed = np.where(cov < 0, -abs_mean, abs_mean) if signing == "directional" else mean_shap
    dims = tuple(dimensions) if dimensions is not None else tuple(
        FEATURE_DIMENSIONS.get(n, "other") for n in names)
    return ImportanceTable(tuple(names), signed, abs_mean, mean_shap, dims)


def global_importance(ensemble: TreeEnsemble, X, names: Sequence[str] | None = None,
                      dimensions: Sequence[str] | None = None,
                      signing: str = "directional") -> ImportanceTable:
    """Aggregate per-row attributions over a dataset."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("dataset must be a non-empty 2-D array")
    names = tuple(names or ensemble.feature_names or (f"x{j}" for j in range(X.shape[1])))
    phi, _ = shap_values(ensemble, X)
    return importance_from_shap(phi, X, names, dimensions, signing)


@dataclass(frozen=True)
class WeightVector:
    names: tuple[str, ...]
    weights: np.ndarray
    mode: str

    def to_dict(self) -> dict:
        # parallel lists keep the column order through key-sorted JSON
        return {"mode": self.mode, "features": list(self.names),
                "weights": [float(w) for w in self.weights]}

    @classmethod
    def from_dict(cls, d: dict) -> "WeightVector":
        return cls(tuple(d["features"]), np.asarray(d["weights"], dtype=np.float64), d["mode"])

    @classmethod
    def one_hot(cls, names: Sequence[str], j: int) -> "WeightVector":
        w = np.zeros(len(names))
        w[j] = 1.0
        return cls(tuple(names), w, "signed")


def weights_from_shap(table, mode: str = "signed", names: Sequence[str] | None = None) -> WeightVector:
    """Normalize importances into weights summing to 1.

    ``signed`` divides each signed importance by their sum (negatives stay
    negative). ``absolute`` uses magnitudes. ``minmax`` first maps the signed
    values onto [0, 1] over the range ``[min(0, lowest), highest]`` and then
    normalizes.

    ``table`` is an :class:`ImportanceTable` or a plain sequence of signed
    importances.
    """
    if mode not in WEIGHT_MODES:
        raise ValueError(f"mode must be one of {WEIGHT_MODES}")
    if isinstance(table, ImportanceTable):
        s = np.asarray(table.signed, dtype=np.float64)
        names = table.names
    else:
        s = np.asarray(table, dtype=np.float64)
        names = tuple(names or (f"x{j}" for j in range(s.size)))
    if mode == "absolute":
        s = np.abs(s)
    elif mode == "minmax":
        lo, hi = min(0.0, float(s.min())), float(s.max())
        if hi == lo:
            raise ValueError("importances have zero range; cannot rescale")
        s = (s - lo) / (hi - lo)
    total = s.sum()
    if total == 0 or not np.isfinite(total):
        raise ValueError("importances sum to zero; weights undefined")
    return WeightVector(tuple(names), s / total, mode)


IMPORTANCE_COLUMNS = ("feature", "dimension", "signed_importance", "abs_importance", "weight")


def write_importance(table: ImportanceTable, weights: WeightVector | None, dest) -> None:
    """Export ``feature,dimension,signed_importance,abs_importance,weight`` (+ ``mean_shap``)."""
    table.to_frame(weights).to_csv(dest, index=False, lineterminator="\n")


def read_weights(source) -> WeightVector:
    df = pd.read_csv(source, float_precision="round_trip")
    if not set(IMPORTANCE_COLUMNS) <= set(df.columns):
        raise ValueError("importance CSV lacks the weight columns")
    return WeightVector(tuple(df["feature"]), df["weight"].to_numpy(np.float64), "signed")
