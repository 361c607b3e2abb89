"""Disparity report: group tests, energy-mix regressions and correlations."""

from __future__ import annotations

import json
import logging
from typing import Mapping

import numpy as np
import pandas as pd

from .stats import (GroupAssignment, anova_oneway, ecdf, group_summary, kruskal_wallis,
                    ols_simple, pearson)
from .structure import pca

log = logging.getLogger(__name__)

ENERGY_COLUMNS = ("state", "solar_pct", "wind_pct")


def read_energy_mix(source) -> pd.DataFrame:
    df = pd.read_csv(source, dtype={"state": str})
    missing = set(ENERGY_COLUMNS) - set(df.columns)
    if missing:
        from ..ingest import SchemaError
        raise SchemaError(f"energy-mix CSV lacks columns {sorted(missing)}")
    df["state"] = df["state"].str.strip().str.zfill(2)
    return df[list(ENERGY_COLUMNS)]


def _safe(fn, *args):
    try:
        return fn(*args)
    except ValueError as exc:
        log.warning("%s skipped: %s", fn.__name__, exc)
        return None


def group_tests(values: Mapping[str, float], assignment: GroupAssignment,
                grid_points: int = 101) -> dict:
    """Kruskal-Wallis, ANOVA, boxplot stats and per-group ECDFs for one scheme."""
    split = assignment.split(values, strict=False)
    out = {"scheme": assignment.scheme, "n": int(sum(v.size for v in split.values())),
           "groups": {g: int(v.size) for g, v in split.items()}}
    kw = _safe(kruskal_wallis, list(split.values()))
    out["kruskal_wallis"] = kw.to_dict() if kw else None
    an = _safe(anova_oneway, list(split.values()))
    out["anova"] = an.to_dict() if an else None
    known = {f: v for f, v in values.items() if f in assignment.labels}
    out["summary"] = group_summary(known, assignment).to_dict(orient="records")
    allv = np.concatenate(list(split.values())) if split else np.array([])
    if allv.size:
        grid = np.linspace(allv.min(), allv.max(), grid_points)
        out["ecdf"] = {"x": grid.tolist(),
                       **{g: ecdf(v)(grid).tolist() for g, v in split.items()}}
    return out


def energy_regressions(values: Mapping[str, float], energy: pd.DataFrame) -> dict:
    """OLS of state-mean index values on solar and wind generation shares."""
    per_state = pd.Series(values, dtype=np.float64)
    per_state = per_state.groupby(per_state.index.str[:2]).mean()
    merged = energy.set_index("state").join(per_state.rename("value"), how="inner")
    out = {"n_states": int(len(merged))}
    for col in ("solar_pct", "wind_pct"):
        res = _safe(ols_simple, merged[col].to_numpy(), merged["value"].to_numpy())
        out[col] = res.to_dict() if res else None
    return out


def feature_correlations(values: Mapping[str, float], features: pd.DataFrame) -> dict:
    """Pearson r and p of the index against every column of ``features`` (indexed by fips)."""
    common = [f for f in features.index if f in values]
    y = np.array([values[f] for f in common])
    out = {}
    for col in features.columns:
        res = _safe(pearson, features.loc[common, col].to_numpy(np.float64), y)
        out[col] = None if res is None else {"r": res[0], "p_value": res[1], "n": len(common)}
    return out


def urban_form_components(values: Mapping[str, float], urban_form: pd.DataFrame,
                          n_components: int = 3) -> dict:
    """PCA of urban-form columns, then correlation of each component with the index."""
    common = [f for f in urban_form.index if f in values]
    res = _safe(pca, urban_form.loc[common].to_numpy(np.float64), n_components)
    if res is None:
        return {}
    y = np.array([values[f] for f in common])
    comps = {}
    for j in range(n_components):
        r = _safe(pearson, res.scores[:, j], y)
        comps[f"pc{j + 1}"] = {
            "explained_variance_ratio": float(res.explained_variance_ratio[j]),
            "loadings": dict(zip(urban_form.columns, res.loadings[:, j].tolist())),
            "r": None if r is None else r[0], "p_value": None if r is None else r[1]}
    return {"n": len(common), "components": comps,
            "cumulative_explained": float(res.explained_variance_ratio.sum())}


def run_analysis(values: Mapping[str, float], assignments=(), energy: pd.DataFrame | None = None,
                 features: pd.DataFrame | None = None,
                 urban_form: pd.DataFrame | None = None) -> dict:
    report = {"n_counties": len(values),
              "groups": [group_tests(values, a) for a in assignments]}
    if energy is not None:
        report["energy_mix"] = energy_regressions(values, energy)
    if features is not None:
        report["feature_correlations"] = feature_correlations(values, features)
    if urban_form is not None:
        report["urban_form"] = urban_form_components(values, urban_form)
    return report


def write_report(report: dict, dest) -> None:
    text = json.dumps(report, indent=2, sort_keys=True, allow_nan=False,
                      default=lambda o: o.item() if hasattr(o, "item") else str(o))
    with open(dest, "w") as fh:
        fh.write(text + "\n")
