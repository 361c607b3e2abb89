"""The 14 county-level vulnerability features and min-max normalization."""

from __future__ import annotations

from dataclasses import astuple, dataclass, field, fields
from datetime import datetime, timezone
from typing import NamedTuple, Sequence

import numpy as np
import pandas as pd

from .events import EventSeries, event_gaps
from .ingest import RecordStream, month_of

FEATURE_NAMES = (
    "n_events",
    "avg_outage_rate",
    "avg_duration",
    "avg_inter_event_time",
    "cum_customers_affected",
    "peak_customers_ratio",
    "avg_change_rate",
    "avg_duration_per_customer",
    "n_events_gt5pct",
    "avg_duration_gt5pct",
    "avg_inter_event_gt5pct",
    "n_events_gt12h",
    "avg_rate_gt12h",
    "avg_inter_event_gt12h",
)

FEATURE_DIMENSIONS = {
    "n_events": "frequency",
    "avg_outage_rate": "intensity",
    "avg_duration": "duration",
    "avg_inter_event_time": "frequency",
    "cum_customers_affected": "intensity",
    "peak_customers_ratio": "intensity",
    "avg_change_rate": "intensity",
    "avg_duration_per_customer": "duration",
    "n_events_gt5pct": "frequency",
    "avg_duration_gt5pct": "duration",
    "avg_inter_event_gt5pct": "frequency",
    "n_events_gt12h": "frequency",
    "avg_rate_gt12h": "intensity",
    "avg_inter_event_gt12h": "frequency",
}

COUNT_FEATURES = ("n_events", "n_events_gt5pct", "n_events_gt12h")


@dataclass(frozen=True)
class FeatureVector:
    n_events: float = 0.0
    avg_outage_rate: float = 0.0  # %
    avg_duration: float = 0.0  # days
    avg_inter_event_time: float = 0.0  # days
    cum_customers_affected: float = 0.0
    peak_customers_ratio: float = 0.0  # %
    avg_change_rate: float = 0.0  # %
    avg_duration_per_customer: float = 0.0  # hours
    n_events_gt5pct: float = 0.0
    avg_duration_gt5pct: float = 0.0  # days
    avg_inter_event_gt5pct: float = 0.0  # days
    n_events_gt12h: float = 0.0
    avg_rate_gt12h: float = 0.0  # %
    avg_inter_event_gt12h: float = 0.0  # days

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=np.float64)

    @classmethod
    def from_array(cls, values) -> "FeatureVector":
        return cls(*(float(v) for v in values))


assert tuple(f.name for f in fields(FeatureVector)) == FEATURE_NAMES


@dataclass(frozen=True)
class Period:
    """Half-open time range ``[start, end)`` in epoch seconds."""

    label: str
    start: int
    end: int

    @classmethod
    def year(cls, year: int) -> "Period":
        return cls.years(year, year)

    @classmethod
    def years(cls, first: int, last: int, label: str | None = None) -> "Period":
        lo = int(datetime(first, 1, 1, tzinfo=timezone.utc).timestamp())
        hi = int(datetime(last + 1, 1, 1, tzinfo=timezone.utc).timestamp())
        return cls(label or (str(first) if first == last else f"{first}-{last}"), lo, hi)

    def months(self) -> np.ndarray:
        """Calendar months (since 1970-01) overlapping the period."""
        first = int(month_of(np.array([self.start]))[0])
        last = int(month_of(np.array([self.end - 1]))[0])
        return np.arange(first, last + 1)


class ChangeRate(NamedTuple):
    value: float
    degenerate: bool


def monthly_sums(stream: RecordStream) -> tuple[np.ndarray, np.ndarray]:
    """(month index, summed customers_out) for every month with records."""
    if not len(stream):
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    months = month_of(stream.timestamps)
    uniq, inv = np.unique(months, return_inverse=True)
    sums = np.bincount(inv, weights=stream.customers_out).astype(np.int64)
    return uniq, sums


def change_rate_from_sums(sums: Sequence[float]) -> ChangeRate:
    """Mean month-over-month percentage change; pairs with a zero base are skipped."""
    m = np.asarray(sums, dtype=np.float64)
    if m.size < 2:
        return ChangeRate(0.0, True)
    base, nxt = m[:-1], m[1:]
    ok = base > 0
    if not ok.any():
        return ChangeRate(0.0, True)
    return ChangeRate(float(np.mean((nxt[ok] - base[ok]) / base[ok] * 100.0)), False)


def monthly_change_rate(stream: RecordStream, period: Period, monthly=None) -> ChangeRate:
    """Average percentage change between consecutive calendar months.

    Months in ``period`` without records count as zero. ``monthly`` may supply
    precomputed ``(months, sums)`` instead of scanning ``stream``.
    """
    months, sums = monthly if monthly is not None else monthly_sums(stream)
    grid = period.months()
    full = np.zeros(grid.size)
    pos = np.searchsorted(grid, months)
    inside = (pos < grid.size) & (grid[np.minimum(pos, grid.size - 1)] == months)
    full[pos[inside]] = np.asarray(sums)[inside]
    return change_rate_from_sums(full)


def _mean(x: np.ndarray) -> float:
    return float(np.mean(x)) if x.size else 0.0


def compute_features(series: EventSeries, stream: RecordStream | None, period: Period, *,
                     monthly=None, cum_mode: str = "peak", large_rate: float = 0.05,
                     long_hours: float = 12.0) -> FeatureVector:
    """Feature vector of one county over ``period``.

    Events are attributed to the period containing their first sample.
    ``cum_mode='peak'`` sums per-event peaks for the cumulative customer count;
    ``'sample'`` sums every in-event observation instead. Averages over an
    empty subset are 0.
    """
    if cum_mode not in ("peak", "sample"):
        raise ValueError(f"unknown cum_mode {cum_mode!r}")
    ev = series.between(period.start, period.end)
    dur_h = ev.duration_h
    peak_rate = ev.peak_rate
    mean_rate = ev.mean_rate
    n = len(ev)
    large = peak_rate > large_rate
    long_ = dur_h > long_hours
    ev_large = ev.select(large)
    ev_long = ev.select(long_)
    if stream is None and monthly is None:
        raise ValueError("either stream or monthly sums are required")
    change = monthly_change_rate(stream, period, monthly=monthly).value
    cum = ev.peak_out.sum() if cum_mode == "peak" else ev.sum_out.sum()
    return FeatureVector(
        n_events=float(n),
        avg_outage_rate=_mean(mean_rate) * 100.0,
        avg_duration=_mean(dur_h) / 24.0,
        avg_inter_event_time=_mean(event_gaps(ev)),
        cum_customers_affected=float(cum),
        peak_customers_ratio=float(peak_rate.max() * 100.0) if n else 0.0,
        avg_change_rate=change,
        avg_duration_per_customer=float(np.sum(ev.customer_hours / ev.customers_total)) if n else 0.0,
        n_events_gt5pct=float(large.sum()),
        avg_duration_gt5pct=_mean(dur_h[large]) / 24.0,
        avg_inter_event_gt5pct=_mean(event_gaps(ev_large)),
        n_events_gt12h=float(long_.sum()),
        avg_rate_gt12h=_mean(mean_rate[long_]) * 100.0,
        avg_inter_event_gt12h=_mean(event_gaps(ev_long)),
    )


@dataclass
class FeatureMatrix:
    fips: list[str]
    values: np.ndarray
    period: str = ""
    names: tuple[str, ...] = FEATURE_NAMES

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape != (len(self.fips), len(self.names)):
            raise ValueError(f"values shape {self.values.shape} does not match "
                             f"{len(self.fips)} counties x {len(self.names)} features")
        if len(set(self.fips)) != len(self.fips):
            raise ValueError("duplicate county in feature matrix")
        if not np.isfinite(self.values).all():
            raise ValueError("feature matrix has non-finite entries")

    def __len__(self):
        return len(self.fips)

    @classmethod
    def from_vectors(cls, vectors: dict[str, FeatureVector], period: str = "") -> "FeatureMatrix":
        fips = sorted(vectors)
        vals = np.array([vectors[f].as_array() for f in fips]).reshape(len(fips), len(FEATURE_NAMES))
        return cls(fips, vals, period)

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.names.index(name)]

    def subset(self, fips: Sequence[str]) -> "FeatureMatrix":
        pos = {f: i for i, f in enumerate(self.fips)}
        idx = [pos[f] for f in fips]
        return FeatureMatrix(list(fips), self.values[idx], self.period, self.names)

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame(self.values, columns=list(self.names))
        df.insert(0, "period", self.period)
        df.insert(0, "fips", self.fips)
        return df

    @classmethod
    def from_frame(cls, df: pd.DataFrame) -> "FeatureMatrix":
        missing = [c for c in ("fips", *FEATURE_NAMES) if c not in df.columns]
        if missing:
            raise ValueError(f"feature table is missing column(s): {', '.join(missing)}")
        period = str(df["period"].iloc[0]) if "period" in df.columns and len(df) else ""
        return cls(df["fips"].astype(str).str.zfill(5).tolist(),
                   df[list(FEATURE_NAMES)].to_numpy(np.float64), period)


def write_feature_frames(matrices: Sequence[FeatureMatrix], dest) -> None:
    frames = [m.to_frame() for m in matrices]
    df = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(
        columns=["fips", "period", *FEATURE_NAMES])
    df.to_csv(dest, index=False)


def read_feature_frames(source) -> dict[str, FeatureMatrix]:
    """Period label -> matrix, from a feature export CSV."""
    df = pd.read_csv(source, dtype={"fips": str, "period": str}, float_precision="round_trip")
    return {p: FeatureMatrix.from_frame(g.reset_index(drop=True))
            for p, g in df.groupby("period", sort=True)}


@dataclass
class Normalized:
    matrix: FeatureMatrix
    mins: np.ndarray
    maxs: np.ndarray
    constant: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))

    @property
    def constant_columns(self) -> list[str]:
        return [n for n, c in zip(self.matrix.names, self.constant) if c]

    def denormalize(self, values: np.ndarray) -> np.ndarray:
        return values * (self.maxs - self.mins) + self.mins

    def apply(self, matrix: FeatureMatrix) -> FeatureMatrix:
        """Scale another matrix with these column bounds (no clipping)."""
        span = np.where(self.constant, 1.0, self.maxs - self.mins)
        vals = np.where(self.constant, 0.0, (matrix.values - self.mins) / span)
        return FeatureMatrix(matrix.fips, vals, matrix.period, matrix.names)


def minmax_normalize(matrix: FeatureMatrix) -> Normalized:
    """Scale each column to [0, 1]; constant columns map to 0 and are flagged."""
    if len(matrix) < 2:
        raise ValueError("min-max normalization needs at least 2 counties")
    x = matrix.values
    mins = x.min(axis=0)
    maxs = x.max(axis=0)
    constant = maxs == mins
    span = np.where(constant, 1.0, maxs - mins)
    scaled = np.where(constant, 0.0, (x - mins) / span)
    return Normalized(FeatureMatrix(matrix.fips, scaled, matrix.period, matrix.names),
                      mins, maxs, constant)
