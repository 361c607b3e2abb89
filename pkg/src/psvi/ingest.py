"""Outage record parsing, validation and customer-base denominators."""

from __future__ import annotations

import io
import math
import os
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple

import numpy as np
import pandas as pd

INTERVAL_S = 900
SNAP_TOLERANCE_S = 60
REQUIRED_COLUMNS = ("fips", "timestamp", "customers_out")
REJECT_COLUMNS = ["fips", "timestamp", "reason"]

_FIPS_RE = re.compile(r"^[0-9]{5}$")


class SchemaError(ValueError):
    """Input table is missing required columns or violates a table invariant."""


class MissingDenominatorError(KeyError):
    """No customer-base entry exists for a county."""


class DivisionGuardError(ZeroDivisionError):
    pass


@dataclass(frozen=True)
class OutageRecord:
    fips: str
    timestamp: datetime
    customers_out: int

    def __post_init__(self):
        if not _FIPS_RE.match(self.fips):
            raise ValueError(f"malformed fips {self.fips!r}")
        ts = self.timestamp
        if ts.tzinfo is None or ts.utcoffset().total_seconds() != 0:
            raise ValueError("timestamp must be UTC")
        if ts.minute % 15 or ts.second or ts.microsecond:
            raise ValueError(f"timestamp {ts.isoformat()} is off the 15-minute grid")
        if self.customers_out < 0:
            raise ValueError("customers_out must be non-negative")


@dataclass(frozen=True)
class CustomerBase:
    fips: str
    year: int
    customers_total: int

    def __post_init__(self):
        if self.customers_total < 1:
            raise ValueError("customers_total must be >= 1")


@dataclass(frozen=True, eq=False)
class RecordStream:
    """Time-ordered 15-minute observations for one county.

    ``timestamps`` are UTC epoch seconds on the 15-minute grid, strictly
    increasing. Arrays are made read-only on construction.
    """

    fips: str
    timestamps: np.ndarray
    customers_out: np.ndarray

    def __post_init__(self):
        ts = np.ascontiguousarray(self.timestamps, dtype=np.int64)
        out = np.ascontiguousarray(self.customers_out, dtype=np.int64)
        if ts.shape != out.shape or ts.ndim != 1:
            raise ValueError("timestamps and customers_out must be equal-length 1-D arrays")
        if ts.size > 1 and not np.all(np.diff(ts) > 0):
            raise ValueError(f"stream {self.fips} is not strictly increasing")
        if ts.size and (ts % INTERVAL_S).any():
            raise ValueError(f"stream {self.fips} has off-grid timestamps")
        if (out < 0).any():
            raise ValueError(f"stream {self.fips} has negative counts")
        ts.setflags(write=False)
        out.setflags(write=False)
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "customers_out", out)

    def __len__(self):
        return self.timestamps.size

    def __eq__(self, other):
        if not isinstance(other, RecordStream):
            return NotImplemented
        return (self.fips == other.fips
                and np.array_equal(self.timestamps, other.timestamps)
                and np.array_equal(self.customers_out, other.customers_out))

    def records(self) -> Iterable[OutageRecord]:
        for t, c in zip(self.timestamps.tolist(), self.customers_out.tolist()):
            yield OutageRecord(self.fips, datetime.fromtimestamp(t, timezone.utc), c)

    def between(self, start: int, end: int) -> "RecordStream":
        """Sub-stream with ``start <= t < end`` (epoch seconds)."""
        lo, hi = np.searchsorted(self.timestamps, [start, end])
        return RecordStream(self.fips, self.timestamps[lo:hi], self.customers_out[lo:hi])


@dataclass
class ParseResult:
    streams: dict[str, RecordStream]
    rejects: pd.DataFrame
    n_rows: int = 0
    n_accepted: int = 0
    n_duplicates: int = 0
    n_snapped: int = 0

    @property
    def n_rejected(self) -> int:
        return len(self.rejects)


class OutageRate(NamedTuple):
    value: float
    over_unity: bool


def outage_rate(customers_out, customers_total) -> OutageRate:
    """Fraction of a county's customers without power.

    Values above 1 are data artifacts; they pass through unchanged and set
    ``over_unity``.
    """
    if customers_total is None or customers_total <= 0:
        raise DivisionGuardError("customers_total must be >= 1")
    rate = customers_out / customers_total
    return OutageRate(rate, bool(rate > 1))


def year_of(ts: np.ndarray) -> np.ndarray:
    return np.asarray(ts, dtype="datetime64[s]").astype("datetime64[Y]").astype(np.int64) + 1970


def month_of(ts: np.ndarray) -> np.ndarray:
    """Months since 1970-01 for epoch-second timestamps."""
    return np.asarray(ts, dtype="datetime64[s]").astype("datetime64[M]").astype(np.int64)


def format_timestamp(ts: int) -> str:
    return datetime.fromtimestamp(int(ts), timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _parse_timestamps(raw: pd.Series) -> tuple[np.ndarray, np.ndarray]:
    """Epoch nanoseconds (int64) and validity mask; epoch ints or RFC 3339."""
    s = raw.astype("string").str.strip()
    is_epoch = s.str.fullmatch(r"-?\d+").fillna(False).to_numpy(bool)
    ns = np.zeros(len(s), dtype=np.int64)
    ok = np.zeros(len(s), dtype=bool)
    if is_epoch.any():
        vals = pd.to_numeric(s[is_epoch], errors="coerce")
        good = vals.notna() & (vals.abs() < 2**62 // 10**9)
        idx = np.flatnonzero(is_epoch)[good.to_numpy(bool)]
        ns[idx] = vals[good].to_numpy(np.int64) * 10**9
        ok[idx] = True
    rest = ~is_epoch
    if rest.any():
        parsed = pd.to_datetime(s[rest], utc=True, format="ISO8601", errors="coerce")
        good = parsed.notna().to_numpy(bool)
        idx = np.flatnonzero(rest)[good]
        ns[idx] = parsed[good].astype("int64").to_numpy()
        ok[idx] = True
    return ns, ok


def validate_chunk(df: pd.DataFrame) -> tuple[pd.DataFrame, pd.DataFrame, int]:
    """Split a raw string chunk into clean rows and rejects.

    Returns ``(clean, rejects, n_snapped)``; ``clean`` has columns
    ``fips`` (str), ``timestamp`` (epoch s) and ``customers_out`` (int64).
    """
    fips = df["fips"].astype("string").str.strip()
    short = fips.str.fullmatch(r"\d{1,4}").fillna(False)
    fips = fips.where(~short, fips.str.zfill(5))
    reason = pd.Series(pd.NA, index=df.index, dtype="string")
    fips_ok = fips.str.fullmatch(r"\d{5}").fillna(False).to_numpy(bool)
    reason[~fips_ok] = "bad_fips"

    ns, ts_ok = _parse_timestamps(df["timestamp"])
    reason[~ts_ok & reason.isna().to_numpy(bool)] = "bad_timestamp"
    interval_ns = INTERVAL_S * 10**9
    rem = np.mod(ns, interval_ns)
    down = rem <= SNAP_TOLERANCE_S * 10**9
    up = (interval_ns - rem) <= SNAP_TOLERANCE_S * 10**9
    on_grid = down | up
    snapped = np.where(down, ns - rem, ns + (interval_ns - rem)) // 10**9
    reason[ts_ok & ~on_grid & reason.isna().to_numpy(bool)] = "off_grid"
    n_snapped = int(((rem != 0) & on_grid & ts_ok & reason.isna().to_numpy(bool)).sum())

    counts = pd.to_numeric(df["customers_out"].astype("string").str.strip(), errors="coerce")
    cvals = counts.to_numpy(dtype=np.float64, na_value=np.nan)
    bad_count = ~np.isfinite(cvals) | (np.floor(np.nan_to_num(cvals)) != np.nan_to_num(cvals))
    pending = reason.isna().to_numpy(bool)
    reason[bad_count & pending] = "bad_customers_out"
    pending = reason.isna().to_numpy(bool)
    reason[(np.nan_to_num(cvals) < 0) & pending] = "negative_customers_out"

    keep = reason.isna().to_numpy(bool)
    clean = pd.DataFrame({
        "fips": fips[keep].astype(str).to_numpy(),
        "timestamp": snapped[keep].astype(np.int64),
        "customers_out": cvals[keep].astype(np.int64),
    })
    rejects = pd.DataFrame({
        "fips": df["fips"][~keep].astype("string").fillna("").to_numpy(),
        "timestamp": df["timestamp"][~keep].astype("string").fillna("").to_numpy(),
        "reason": reason[~keep].to_numpy(),
    })
    return clean, rejects, n_snapped


def _read_chunks(source, schema: Mapping[str, str] | None, chunksize: int | None):
    """Yield raw string chunks with canonical column names."""
    schema = dict(schema or {})
    rename = {v: k for k, v in schema.items()}
    reader = pd.read_csv(source, dtype=str, keep_default_na=False, chunksize=chunksize or 10**6)
    first = True
    for chunk in reader:
        chunk = chunk.rename(columns=rename)
        if first:
            missing = [c for c in REQUIRED_COLUMNS if c not in chunk.columns]
            if missing:
                raise SchemaError(f"outage CSV is missing required column(s): {', '.join(missing)}")
            first = False
        yield chunk[list(REQUIRED_COLUMNS)]


def _check_header(source, schema):
    """Read only the header so empty files still get schema validation."""
    schema = dict(schema or {})
    rename = {v: k for k, v in schema.items()}
    cols = [rename.get(c, c) for c in pd.read_csv(source, nrows=0).columns]
    missing = [c for c in REQUIRED_COLUMNS if c not in cols]
    if missing:
        raise SchemaError(f"outage CSV is missing required column(s): {', '.join(missing)}")


def streams_from_frame(clean: pd.DataFrame) -> tuple[dict[str, RecordStream], int]:
    """Group clean rows by county, resolve duplicate timestamps by max, sort."""
    if clean.empty:
        return {}, 0
    agg = clean.groupby(["fips", "timestamp"], sort=True)["customers_out"].max()
    n_dup = len(clean) - len(agg)
    agg = agg.reset_index()
    streams = {}
    fips_arr = agg["fips"].to_numpy()
    bounds = np.flatnonzero(fips_arr[1:] != fips_arr[:-1]) + 1
    starts = np.concatenate([[0], bounds])
    ends = np.concatenate([bounds, [len(agg)]])
    ts = agg["timestamp"].to_numpy(np.int64)
    out = agg["customers_out"].to_numpy(np.int64)
    for s, e in zip(starts, ends):
        f = fips_arr[s]
        streams[f] = RecordStream(f, ts[s:e], out[s:e])
    return streams, n_dup


def parse_records(source, schema: Mapping[str, str] | None = None,
                  chunksize: int | None = None) -> ParseResult:
    """Parse an outage CSV into per-county record streams.

    Parameters
    ----------
    source : path or binary file object
        CSV with a header row.
    schema : mapping, optional
        Canonical name (``fips``, ``timestamp``, ``customers_out``) to the
        column name used in the file.

    Malformed rows are returned in ``rejects`` with a reason; they are never
    silently dropped. Duplicate (fips, timestamp) rows keep the maximum count.
    """
    if isinstance(source, (bytes, bytearray)):
        source = io.BytesIO(source)
    if hasattr(source, "seek"):
        pos = source.tell()
        _check_header(source, schema)
        source.seek(pos)
    else:
        _check_header(source, schema)
    cleans, rejects = [], []
    n_rows = n_snapped = 0
    for chunk in _read_chunks(source, schema, chunksize):
        n_rows += len(chunk)
        clean, rej, snapped = validate_chunk(chunk)
        cleans.append(clean)
        rejects.append(rej)
        n_snapped += snapped
    clean = pd.concat(cleans, ignore_index=True) if cleans else pd.DataFrame(
        {"fips": [], "timestamp": [], "customers_out": []})
    rej = pd.concat(rejects, ignore_index=True) if rejects else pd.DataFrame(columns=REJECT_COLUMNS)
    streams, n_dup = streams_from_frame(clean)
    return ParseResult(streams, rej, n_rows=n_rows, n_accepted=len(clean),
                       n_duplicates=n_dup, n_snapped=n_snapped)


def write_records(streams: Iterable[RecordStream], dest, epoch: bool = False,
                  header: bool = True) -> None:
    """Write streams in the outage CSV format (RFC 3339 unless ``epoch``).

    Streams are written one at a time, so memory stays at one county's rows.
    """
    fh = dest if hasattr(dest, "write") else open(dest, "w", newline="")
    try:
        if header:
            fh.write(",".join(REQUIRED_COLUMNS) + "\n")
        for s in streams:
            ts = s.timestamps
            if ts.size == 0:
                continue
            stamp = ts if epoch else pd.to_datetime(ts, unit="s", utc=True).strftime(
                "%Y-%m-%dT%H:%M:%SZ")
            pd.DataFrame({"fips": s.fips, "timestamp": stamp, "customers_out": s.customers_out}
                         ).to_csv(fh, index=False, header=False, lineterminator="\n")
    finally:
        if fh is not dest:
            fh.close()


# --- bounded-memory partitioned ingestion -------------------------------------------------

@dataclass
class PartitionSummary:
    n_rows: int = 0
    n_accepted: int = 0
    n_rejected: int = 0
    n_snapped: int = 0
    partitions: list[str] = field(default_factory=list)


def partition_records(source, out_dir, n_partitions: int = 16, chunksize: int = 10**6,
                      schema: Mapping[str, str] | None = None) -> PartitionSummary:
    """Stream an outage CSV into county-hash partitions on disk.

    Only one chunk is held in memory at a time. Each partition file holds
    canonical rows (``fips,timestamp,customers_out`` with epoch seconds) for a
    fixed subset of counties, so later stages can load one partition at a
    time. Rejected rows go to ``rejects.csv`` in ``out_dir``.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if hasattr(source, "seek"):
        pos = source.tell()
        _check_header(source, schema)
        source.seek(pos)
    else:
        _check_header(source, schema)
    paths = [out_dir / f"part-{i:03d}.csv" for i in range(n_partitions)]
    for p in paths:
        p.write_text("fips,timestamp,customers_out\n")
    rej_path = out_dir / "rejects.csv"
    rej_path.write_text(",".join(REJECT_COLUMNS) + "\n")
    summary = PartitionSummary(partitions=[p.name for p in paths])
    handles = [open(p, "a", newline="") for p in paths]
    try:
        with open(rej_path, "a", newline="") as rej_fh:
            for chunk in _read_chunks(source, schema, chunksize):
                summary.n_rows += len(chunk)
                clean, rej, snapped = validate_chunk(chunk)
                summary.n_snapped += snapped
                summary.n_accepted += len(clean)
                summary.n_rejected += len(rej)
                if len(rej):
                    rej.to_csv(rej_fh, header=False, index=False)
                if clean.empty:
                    continue
                part = clean["fips"].astype(np.int64).to_numpy() % n_partitions
                for i in np.unique(part):
                    clean[part == i].to_csv(handles[i], header=False, index=False)
    finally:
        for fh in handles:
            fh.close()
    return summary


def read_partition(path) -> tuple[dict[str, RecordStream], int]:
    df = pd.read_csv(path, dtype={"fips": str, "timestamp": np.int64, "customers_out": np.int64})
    return streams_from_frame(df)


# --- customer base -----------------------------------------------------------------------

def read_customer_base(source) -> dict[str, dict[int, int]]:
    """Load ``fips,year,customers_total`` into ``{fips: {year: total}}``."""
    df = pd.read_csv(source, dtype={"fips": str})
    missing = [c for c in ("fips", "year", "customers_total") if c not in df.columns]
    if missing:
        raise SchemaError(f"customer-base CSV is missing column(s): {', '.join(missing)}")
    df["fips"] = df["fips"].str.strip().str.zfill(5)
    if df.duplicated(["fips", "year"]).any():
        dup = df[df.duplicated(["fips", "year"])].iloc[0]
        raise SchemaError(f"duplicate customer-base entry for {dup.fips} {dup.year}")
    bad = df["customers_total"] < 1
    if bad.any():
        raise SchemaError(f"customers_total < 1 for {int(bad.sum())} row(s)")
    base: dict[str, dict[int, int]] = {}
    for f, y, c in zip(df["fips"], df["year"].astype(int), df["customers_total"].astype(int)):
        base.setdefault(f, {})[int(y)] = int(c)
    return base


def extrapolate_customer_base(base, fips: str, year: int) -> int:
    """Customer total for ``(fips, year)``, extrapolated linearly if absent.

    ``base`` is ``{fips: {year: total}}`` or an iterable of
    :class:`CustomerBase`. With two or more known years the least-squares line
    is evaluated at ``year``; with one year that value is used as is.
    """
    if not isinstance(base, Mapping):
        table: dict[str, dict[int, int]] = {}
        for cb in base:
            table.setdefault(cb.fips, {})[cb.year] = cb.customers_total
        base = table
    known = base.get(fips)
    if not known:
        raise MissingDenominatorError(fips)
    if year in known:
        return int(known[year])
    if len(known) == 1:
        return int(next(iter(known.values())))
    xs = np.array(sorted(known), dtype=float)
    ys = np.array([known[int(x)] for x in xs], dtype=float)
    xm, ym = xs.mean(), ys.mean()
    slope = ((xs - xm) * (ys - ym)).sum() / ((xs - xm) ** 2).sum()
    value = ym + slope * (year - xm)
    return max(1, int(math.floor(value + 0.5)))


def denominators_for(base, fips: str, years: Iterable[int]) -> dict[int, int]:
    return {int(y): extrapolate_customer_base(base, fips, int(y)) for y in years}


def default_partitions(n_threads: int | None = None) -> int:
    return max(4, 4 * (n_threads or os.cpu_count() or 1))
