"""Hypothesis tests, regression, empirical CDFs and grouped summaries."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
import pandas as pd
from scipy import special
from scipy.stats import rankdata

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    df: tuple
    n: int
    degenerate: bool = False

    def to_dict(self) -> dict:
        return {"statistic": _jsonable(self.statistic), "p_value": _jsonable(self.p_value),
                "df": list(self.df), "n": self.n, "degenerate": self.degenerate}


def _jsonable(v: float):
    return None if not math.isfinite(v) else float(v)


def _t_two_sided(t: float, df: float) -> float:
    if math.isinf(t):
        return 0.0
    return float(min(1.0, 2.0 * special.stdtr(df, -abs(t))))


def _vec(x, name: str) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64).ravel()
    if not np.isfinite(a).all():
        raise ValueError(f"{name} contains non-finite values")
    return a


def pearson(x, y) -> tuple[float, float]:
    """Sample correlation and its two-sided p-value (t with n-2 df)."""
    x, y = _vec(x, "x"), _vec(y, "y")
    n = x.size
    if n != y.size:
        raise ValueError("x and y differ in length")
    if n < 3:
        raise ValueError("pearson needs n >= 3")
    xc, yc = x - x.mean(), y - y.mean()
    sxx, syy = float(xc @ xc), float(yc @ yc)
    if sxx == 0 or syy == 0:
        raise ValueError("zero variance input")
    r = float(np.clip((xc @ yc) / math.sqrt(sxx * syy), -1.0, 1.0))
    if abs(r) == 1.0:
        return r, 0.0
    t = r * math.sqrt((n - 2) / (1.0 - r * r))
    return r, _t_two_sided(t, n - 2)


def correlation_matrix(frame: pd.DataFrame) -> tuple[pd.DataFrame, pd.DataFrame]:
    """Pairwise Pearson r and p-values over the columns of ``frame``."""
    cols = list(frame.columns)
    r = pd.DataFrame(np.eye(len(cols)), index=cols, columns=cols)
    p = pd.DataFrame(np.zeros((len(cols), len(cols))), index=cols, columns=cols)
    for i, a in enumerate(cols):
        for b in cols[i + 1:]:
            try:
                rv, pv = pearson(frame[a], frame[b])
            except ValueError:
                rv, pv = float("nan"), float("nan")
            r.loc[a, b] = r.loc[b, a] = rv
            p.loc[a, b] = p.loc[b, a] = pv
    return r, p


@dataclass(frozen=True)
class RegressionResult:
    slope: float
    intercept: float
    r_squared: float
    p_value: float
    n: int
    stderr: float  # of the slope
    x_mean: float
    sxx: float
    resid_var: float

    def predict(self, x) -> np.ndarray:
        return self.intercept + self.slope * np.asarray(x, dtype=np.float64)

    def conf_band(self, x, level: float = 0.95) -> tuple[np.ndarray, np.ndarray]:
        """Pointwise confidence interval of the mean response at ``x``."""
        x = np.asarray(x, dtype=np.float64)
        q = special.stdtrit(self.n - 2, 0.5 + level / 2.0)
        half = q * np.sqrt(self.resid_var * (1.0 / self.n + (x - self.x_mean) ** 2 / self.sxx))
        fit = self.predict(x)
        return fit - half, fit + half

    def to_dict(self) -> dict:
        return {k: _jsonable(getattr(self, k)) if k != "n" else self.n
                for k in ("slope", "intercept", "r_squared", "p_value", "n", "stderr")}


def ols_simple(x, y) -> RegressionResult:
    """Least-squares line with a two-sided t-test on the slope."""
    x, y = _vec(x, "x"), _vec(y, "y")
    n = x.size
    if n != y.size:
        raise ValueError("x and y differ in length")
    if n < 3:
        raise ValueError("regression needs n >= 3")
    xm, ym = x.mean(), y.mean()
    xc, yc = x - xm, y - ym
    sxx = float(xc @ xc)
    if sxx == 0:
        raise ValueError("x is constant")
    syy = float(yc @ yc)
    slope = float(xc @ yc) / sxx
    intercept = float(ym - slope * xm)
    resid = y - (intercept + slope * x)
    sse = float(resid @ resid)
    r2 = 1.0 if syy == 0 else float(np.clip(1.0 - sse / syy, 0.0, 1.0))
    s2 = sse / (n - 2)
    se = math.sqrt(s2 / sxx)
    if se == 0:
        p = 0.0 if slope != 0 else 1.0
    else:
        p = _t_two_sided(slope / se, n - 2)
    return RegressionResult(slope, intercept, r2, p, n, se, float(xm), sxx, s2)


def _groups(groups) -> list[np.ndarray]:
    if isinstance(groups, Mapping):
        groups = list(groups.values())
    return [_vec(g, "group") for g in groups]


def kruskal_wallis(groups) -> TestResult:
    """Rank-based H statistic with tie correction; chi-squared p-value."""
    gs = _groups(groups)
    if len(gs) < 2:
        raise ValueError("need at least two groups")
    if any(g.size == 0 for g in gs):
        raise ValueError("every group needs at least one observation")
    sizes = np.array([g.size for g in gs])
    n = int(sizes.sum())
    if n < 5:
        raise ValueError("need at least 5 observations in total")
    df = len(gs) - 1
    allv = np.concatenate(gs)
    ranks = rankdata(allv)
    _, counts = np.unique(allv, return_counts=True)
    tie = 1.0 - float((counts ** 3 - counts).sum()) / (n ** 3 - n)
    if tie == 0:
        return TestResult(0.0, 1.0, (df,), n, degenerate=True)
    bounds = np.cumsum(sizes)[:-1]
    rank_sums = np.array([r.sum() for r in np.split(ranks, bounds)])
    h = 12.0 / (n * (n + 1)) * float((rank_sums ** 2 / sizes).sum()) - 3.0 * (n + 1)
    h = max(h / tie, 0.0)
    return TestResult(h, float(special.chdtrc(df, h)), (df,), n)


def anova_oneway(groups) -> TestResult:
    """Classic one-way F test."""
    gs = _groups(groups)
    if len(gs) < 2:
        raise ValueError("need at least two groups")
    if any(g.size < 2 for g in gs):
        raise ValueError("every group needs at least two observations")
    n = sum(g.size for g in gs)
    k = len(gs)
    grand = np.concatenate(gs).mean()
    ssb = float(sum(g.size * (g.mean() - grand) ** 2 for g in gs))
    ssw = float(sum(((g - g.mean()) ** 2).sum() for g in gs))
    df = (k - 1, n - k)
    if ssw == 0:
        if ssb == 0:
            return TestResult(float("nan"), 1.0, df, n, degenerate=True)
        return TestResult(float("inf"), 0.0, df, n, degenerate=True)
    f = (ssb / df[0]) / (ssw / df[1])
    return TestResult(f, float(special.fdtrc(df[0], df[1], f)), df, n)


class ECDF:
    """Right-continuous empirical CDF of a sample."""

    def __init__(self, values):
        v = _vec(values, "values")
        if v.size == 0:
            raise ValueError("ECDF needs at least one value")
        self.sorted = np.sort(v)
        self.n = v.size

    def __call__(self, x):
        out = np.searchsorted(self.sorted, np.asarray(x, dtype=np.float64), side="right") / self.n
        return float(out) if np.ndim(out) == 0 else out

    def quantile(self, q):
        """Smallest sample value whose ECDF reaches ``q``."""
        q = np.asarray(q, dtype=np.float64)
        idx = np.clip(np.ceil(q * self.n).astype(np.int64) - 1, 0, self.n - 1)
        return self.sorted[idx]

    def table(self, grid=None) -> pd.DataFrame:
        x = self.sorted if grid is None else np.asarray(grid, dtype=np.float64)
        return pd.DataFrame({"x": x, "cdf": self(x)})


def ecdf(values) -> ECDF:
    return ECDF(values)


@dataclass(frozen=True)
class GroupAssignment:
    """One labelling scheme: each county maps to exactly one group label."""

    scheme: str
    labels: Mapping[str, str]

    @classmethod
    def from_memberships(cls, scheme: str, memberships: Mapping[str, Sequence[str]],
                         multi_label: str = "boundary") -> "GroupAssignment":
        """Collapse multi-membership (e.g. counties in several RTOs) to ``multi_label``."""
        out = {}
        for fips, labs in memberships.items():
            uniq = sorted(set(labs))
            if not uniq:
                continue
            out[fips] = uniq[0] if len(uniq) == 1 else multi_label
        return cls(scheme, out)

    @classmethod
    def read_csv(cls, source, scheme: str) -> "GroupAssignment":
        df = pd.read_csv(source, dtype=str, keep_default_na=False)
        if not {"fips", "label"} <= set(df.columns):
            from ..ingest import SchemaError
            raise SchemaError(f"group file for {scheme} needs columns fips,label")
        fips = df["fips"].str.strip().str.zfill(5)
        memberships: dict[str, list[str]] = {}
        for f, lab in zip(fips, df["label"].str.strip()):
            memberships.setdefault(f, []).append(lab)
        return cls.from_memberships(scheme, memberships)

    def split(self, values: Mapping[str, float], strict: bool = True) -> dict[str, np.ndarray]:
        """Values grouped by label, labels in sorted order."""
        out: dict[str, list[float]] = {}
        missing = [f for f in values if f not in self.labels]
        if missing and strict:
            raise KeyError(f"{len(missing)} counties have no {self.scheme} label, e.g. {missing[0]}")
        for f, v in values.items():
            if f in self.labels:
                out.setdefault(self.labels[f], []).append(v)
        return {k: np.asarray(out[k], dtype=np.float64) for k in sorted(out)}


SUMMARY_COLUMNS = ("group", "n", "min", "q1", "median", "q3", "max", "mean")


def group_summary(values: Mapping[str, float], assignment: GroupAssignment,
                  groups: Sequence[str] | None = None) -> pd.DataFrame:
    """Boxplot statistics per group (quartiles by linear interpolation).

    ``groups`` lists the expected labels; any of them with no values is
    omitted with a warning.
    """
    split = assignment.split(values)
    labels = list(groups) if groups is not None else list(split)
    rows = []
    for g in labels:
        v = split.get(g)
        if v is None or v.size == 0:
            log.warning("group %r of %s is empty; omitted", g, assignment.scheme)
            continue
        q1, med, q3 = np.quantile(v, [0.25, 0.5, 0.75], method="linear")
        rows.append({"group": g, "n": int(v.size), "min": float(v.min()), "q1": float(q1),
                     "median": float(med), "q3": float(q3), "max": float(v.max()),
                     "mean": float(v.mean())})
    return pd.DataFrame(rows, columns=list(SUMMARY_COLUMNS))
