"""Threshold-based outage event extraction."""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Mapping

import numpy as np
import pandas as pd

from . import kernels
from .ingest import INTERVAL_S, RecordStream, format_timestamp, year_of

DEFAULT_THRESHOLD = 0.001
SAMPLE_HOURS = INTERVAL_S / 3600.0
EVENT_COLUMNS = ["fips", "start", "end", "duration_h", "peak_out", "peak_rate", "mean_rate",
                 "customer_hours", "customers_total", "n_samples"]


@dataclass(frozen=True)
class OutageEvent:
    fips: str
    start: datetime
    end: datetime
    duration: float  # hours
    peak_out: int
    peak_rate: float
    mean_rate: float
    customer_hours: float
    customers_total: int
    n_samples: int


@dataclass(frozen=True, eq=False)
class EventSeries:
    """Events of one county held column-wise.

    ``start``/``end`` are epoch seconds of the first and last above-threshold
    sample; ``sum_rate`` and ``sum_out`` are sums over the observed samples.
    """

    fips: str
    start: np.ndarray
    end: np.ndarray
    peak_out: np.ndarray
    sum_rate: np.ndarray
    sum_out: np.ndarray
    n_samples: np.ndarray
    customers_total: np.ndarray

    def __post_init__(self):
        for name in ("start", "end", "peak_out", "sum_out", "n_samples", "customers_total"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.int64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        arr = np.ascontiguousarray(self.sum_rate, dtype=np.float64)
        arr.setflags(write=False)
        object.__setattr__(self, "sum_rate", arr)

    def __len__(self):
        return self.start.size

    def __eq__(self, other):
        if not isinstance(other, EventSeries):
            return NotImplemented
        return self.fips == other.fips and all(
            np.array_equal(getattr(self, k), getattr(other, k))
            for k in ("start", "end", "peak_out", "sum_out", "n_samples", "customers_total")
        ) and np.allclose(self.sum_rate, other.sum_rate, rtol=1e-12, atol=0)

    @classmethod
    def empty(cls, fips: str) -> "EventSeries":
        z = np.zeros(0, dtype=np.int64)
        return cls(fips, z, z, z, np.zeros(0), z, z, z)

    @property
    def duration_h(self) -> np.ndarray:
        return ((self.end - self.start) // INTERVAL_S + 1) * SAMPLE_HOURS

    @property
    def peak_rate(self) -> np.ndarray:
        return self.peak_out / self.customers_total

    @property
    def mean_rate(self) -> np.ndarray:
        return self.sum_rate / self.n_samples

    @property
    def customer_hours(self) -> np.ndarray:
        return self.sum_out * SAMPLE_HOURS

    @property
    def inter_event_gaps(self) -> np.ndarray:
        return event_gaps(self)

    @property
    def events(self) -> list[OutageEvent]:
        utc = timezone.utc
        return [
            OutageEvent(self.fips, datetime.fromtimestamp(s, utc), datetime.fromtimestamp(e, utc),
                        d, p, pr, mr, ch, c, n)
            for s, e, d, p, pr, mr, ch, c, n in zip(
                self.start.tolist(), self.end.tolist(), self.duration_h.tolist(),
                self.peak_out.tolist(), self.peak_rate.tolist(), self.mean_rate.tolist(),
                self.customer_hours.tolist(), self.customers_total.tolist(),
                self.n_samples.tolist())
        ]

    def select(self, mask) -> "EventSeries":
        mask = np.asarray(mask)
        return EventSeries(self.fips, self.start[mask], self.end[mask], self.peak_out[mask],
                           self.sum_rate[mask], self.sum_out[mask], self.n_samples[mask],
                           self.customers_total[mask])

    def between(self, start: int, end: int) -> "EventSeries":
        """Events whose first sample falls in ``[start, end)``."""
        return self.select((self.start >= start) & (self.start < end))

    @classmethod
    def concat(cls, fips: str, parts) -> "EventSeries":
        parts = list(parts)
        if not parts:
            return cls.empty(fips)
        return cls(fips, *(np.concatenate([getattr(p, k) for p in parts]) for k in (
            "start", "end", "peak_out", "sum_rate", "sum_out", "n_samples", "customers_total")))


def _denominator_lookup(customers_total):
    if isinstance(customers_total, Mapping):
        table = {int(k): int(v) for k, v in customers_total.items()}
        if any(v < 1 for v in table.values()):
            raise ValueError("customers_total must be >= 1")

        def lookup(ts):
            years = year_of(ts)
            try:
                return np.fromiter((table[y] for y in years.tolist()), dtype=np.int64,
                                   count=years.size)
            except KeyError as exc:
                raise KeyError(f"no customer total for year {exc.args[0]}") from None
        return lookup
    total = int(customers_total)
    if total < 1:
        raise ValueError("customers_total must be >= 1")
    return lambda ts: np.full(np.shape(ts), total, dtype=np.int64)


class EventExtractor:
    """Incremental event extraction over time-contiguous chunks of a stream.

    Feeding a stream in any chunking and then calling :meth:`finish` yields the
    same :class:`EventSeries` as a single pass. The carried state is the open
    run (start, last sample, denominator, peak and running sums).
    """

    def __init__(self, fips: str, customers_total, threshold: float = DEFAULT_THRESHOLD,
                 gap_tolerance: int = 1):
        if gap_tolerance < 0:
            raise ValueError("gap_tolerance must be >= 0")
        self.fips = fips
        self.threshold = float(threshold)
        self.max_step = (int(gap_tolerance) + 1) * INTERVAL_S
        self._den = _denominator_lookup(customers_total)
        self._state = None
        self._parts: list[tuple] = []
        self._last_ts: int | None = None

    def feed(self, timestamps, customers_out) -> None:
        ts = np.ascontiguousarray(timestamps, dtype=np.int64)
        out = np.ascontiguousarray(customers_out, dtype=np.int64)
        if ts.size == 0:
            return
        if self._last_ts is not None and ts[0] <= self._last_ts:
            raise ValueError("chunks must be time-ordered and non-overlapping")
        self._last_ts = int(ts[-1])
        cols, self._state = kernels.scan_events(ts, out, self._den(ts), self.threshold,
                                                self.max_step, self._state)
        if cols[0].size:
            self._parts.append(cols)

    def finish(self) -> EventSeries:
        parts = list(self._parts)
        st = self._state
        if st is not None and st[0]:
            _, start, last, den, peak, srate, sout, cnt = st
            parts.append(tuple(np.array([v]) for v in (start, last, peak, srate, sout, cnt, den)))
        if not parts:
            return EventSeries.empty(self.fips)
        cols = [np.concatenate([p[i] for p in parts]) for i in range(7)]
        start, end, peak, srate, sout, cnt, den = cols
        return EventSeries(self.fips, start, end, peak, srate, sout, cnt, den)


def extract_events(stream: RecordStream, customers_total, threshold: float = DEFAULT_THRESHOLD,
                   gap_tolerance: int = 1) -> EventSeries:
    """Maximal runs of samples with outage rate strictly above ``threshold``.

    ``customers_total`` is a single count or a ``{year: count}`` mapping; a run
    keeps the denominator of the year it started in. More than
    ``gap_tolerance`` consecutive missing 15-minute reports end a run.
    """
    ex = EventExtractor(stream.fips, customers_total, threshold, gap_tolerance)
    ex.feed(stream.timestamps, stream.customers_out)
    return ex.finish()


def event_gaps(series: EventSeries) -> np.ndarray:
    """Days from the end of each event to the start of the next."""
    if len(series) < 2:
        return np.zeros(0)
    return (series.start[1:] - series.end[:-1]) / 86400.0


def events_to_frame(series_list) -> pd.DataFrame:
    frames = []
    for s in series_list:
        if not len(s):
            continue
        frames.append(pd.DataFrame({
            "fips": s.fips,
            "start": [format_timestamp(t) for t in s.start.tolist()],
            "end": [format_timestamp(t) for t in s.end.tolist()],
            "duration_h": s.duration_h,
            "peak_out": s.peak_out,
            "peak_rate": s.peak_rate,
            "mean_rate": s.mean_rate,
            "customer_hours": s.customer_hours,
            "customers_total": s.customers_total,
            "n_samples": s.n_samples,
        }))
    if not frames:
        return pd.DataFrame(columns=EVENT_COLUMNS)
    return pd.concat(frames, ignore_index=True)


def write_events(series_list, dest) -> None:
    events_to_frame(series_list).to_csv(dest, index=False)


def read_events(source) -> dict[str, EventSeries]:
    """Load the event export CSV back into per-county series."""
    df = pd.read_csv(source, dtype={"fips": str}, float_precision="round_trip")
    if df.empty:
        return {}
    start = pd.to_datetime(df["start"], utc=True, format="ISO8601").astype("int64") // 10**9
    end = pd.to_datetime(df["end"], utc=True, format="ISO8601").astype("int64") // 10**9
    df = df.assign(_start=start.to_numpy(), _end=end.to_numpy())
    out = {}
    for fips, g in df.groupby("fips", sort=True):
        n = g["n_samples"].to_numpy(np.int64)
        out[fips] = EventSeries(
            fips, g["_start"].to_numpy(), g["_end"].to_numpy(), g["peak_out"].to_numpy(),
            g["mean_rate"].to_numpy(np.float64) * n,
            np.rint(g["customer_hours"].to_numpy(np.float64) / SAMPLE_HOURS).astype(np.int64),
            n, g["customers_total"].to_numpy())
    return out
