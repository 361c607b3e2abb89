"""Deterministic synthetic outage scenarios with analytic ground truth.

Events are sampled per county (Poisson arrivals with monthly multipliers,
log-normal durations, log-normal peak rates) and rendered onto the 15-minute
grid so that every event sample is strictly above the event threshold and
every background sample is at or below it. Ground-truth events and features
are computed here from the sampled event list, without the ``events`` or
``features`` modules.

Sampled events whose rendered samples overlap, or that sit within the
allowed reporting gap of each other, would be read as one event by any
extractor; the ground truth merges them in the same way (the merged event
takes the larger value on shared timestamps).
"""

from __future__ import annotations

import json
import math
from contextlib import ExitStack
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import pandas as pd

from .features import FEATURE_NAMES, FeatureMatrix
from .ingest import INTERVAL_S, REQUIRED_COLUMNS, RecordStream, write_records
from .model.data import NRI_CATEGORIES, LabeledDataset

DAY_S = 86400
# state codes used for synthetic fips (subset of real ones, order fixed)
STATE_CODES = (1, 4, 5, 6, 8, 9, 10, 12, 13, 16, 17, 18, 19, 20, 21, 22, 23, 24, 25, 26,
               27, 28, 29, 30, 31, 32, 33, 34, 35, 36, 37, 38, 39, 40, 41, 42, 44, 45, 46,
               47, 48, 49, 50, 51, 53, 54, 55, 56)
DEFAULT_SEASONALITY = (1.0, 0.9, 0.9, 1.0, 1.1, 1.3, 1.5, 1.5, 1.3, 1.0, 0.9, 1.0)
PLANTED_FEATURES = ("cum_customers_affected", "n_events", "peak_customers_ratio",
                    "avg_inter_event_time")
PLANTED_COEFS = (1.0, 0.6, 0.5, -0.4)
URBAN_FORM_COLUMNS = ("density", "road_density", "poi_density", "dissimilarity",
                      "centrality", "mobility", "built_share", "green_share")


@dataclass(frozen=True)
class PlantedEvent:
    county: int  # index into the scenario's county list
    start: str  # RFC 3339 UTC on the 15-minute grid
    hours: float
    peak_rate: float


@dataclass(frozen=True)
class ScenarioSpec:
    """Parameters of a synthetic scenario (JSON round-trippable)."""

    n_counties: int = 20
    first_year: int = 2015
    n_years: int = 2
    event_rate: float = 30.0  # events per county-year before county scaling
    duration_log_mean: float = 0.7  # log-hours
    duration_log_sd: float = 1.0
    severity_log_mean: float = -4.6  # log peak rate
    severity_log_sd: float = 1.2
    seasonality: tuple = DEFAULT_SEASONALITY
    heterogeneity: float = 1.5  # spread of per-county event rates
    customers_min: int = 2000
    customers_max: int = 400000
    growth_max: float = 0.02  # max yearly customer growth as a fraction
    drop_year_prob: float = 0.2  # chance a customer-base year is missing
    noise_per_year: float = 150.0  # sub-threshold background samples per county-year
    interior_drop_prob: float = 0.05  # chance an interior event sample goes unreported
    threshold: float = 0.001
    gap_tolerance: int = 1
    nri_signal: float = 6.0
    nri_low_share: float = 0.3
    planted: tuple = ()
    seed: int = 0

    def __post_init__(self):
        checks = {
            "n_counties": self.n_counties >= 1, "n_years": self.n_years >= 1,
            "event_rate": self.event_rate >= 0, "duration_log_sd": self.duration_log_sd >= 0,
            "severity_log_sd": self.severity_log_sd >= 0, "noise_per_year": self.noise_per_year >= 0,
            "customers_min": 1 <= self.customers_min <= self.customers_max,
            "growth_max": self.growth_max >= 0, "threshold": 0 < self.threshold < 1,
            "gap_tolerance": self.gap_tolerance >= 0,
            "drop_year_prob": 0 <= self.drop_year_prob < 1,
            "interior_drop_prob": 0 <= self.interior_drop_prob < 1,
            "seasonality": len(self.seasonality) == 12 and min(self.seasonality) > 0,
        }
        bad = [k for k, ok in checks.items() if not ok]
        if bad:
            raise ValueError(f"invalid scenario parameter(s): {', '.join(bad)}")
        object.__setattr__(self, "seasonality", tuple(float(v) for v in self.seasonality))
        object.__setattr__(self, "planted", tuple(
            p if isinstance(p, PlantedEvent) else PlantedEvent(**p) for p in self.planted))

    @property
    def years(self) -> list[int]:
        return list(range(self.first_year, self.first_year + self.n_years))

    @property
    def fips(self) -> list[str]:
        per_state = math.ceil(self.n_counties / len(STATE_CODES))
        out = []
        for i in range(self.n_counties):
            state = STATE_CODES[i // per_state]
            out.append(f"{state:02d}{2 * (i % per_state) + 1:03d}")
        return out

    def to_dict(self) -> dict:
        d = asdict(self)
        d["seasonality"] = list(self.seasonality)
        d["planted"] = [asdict(p) for p in self.planted]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioSpec":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown scenario field(s): {sorted(unknown)}")
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ScenarioSpec":
        return cls.from_dict(json.loads(text))


def _epoch(year: int, month: int = 1, day: int = 1) -> int:
    return int(datetime(year, month, day, tzinfo=timezone.utc).timestamp())


def _min_above(den: int, thr: float) -> int:
    """Smallest count whose rate is strictly above ``thr`` (in float arithmetic)."""
    c = int(math.floor(thr * den)) + 1
    while not c / den > thr:
        c += 1
    while c > 1 and (c - 1) / den > thr:
        c -= 1
    return c


def _max_at_or_below(den: int, thr: float) -> int:
    c = int(math.floor(thr * den))
    while c > 0 and not c / den <= thr:
        c -= 1
    while (c + 1) / den <= thr:
        c += 1
    return c


@dataclass
class TruthEvent:
    start: int
    end: int
    peak_out: int
    sum_out: int
    sum_rate: float
    n_samples: int
    customers_total: int

    @property
    def duration_h(self) -> float:
        return ((self.end - self.start) // INTERVAL_S + 1) * 0.25

    @property
    def peak_rate(self) -> float:
        return self.peak_out / self.customers_total

    @property
    def mean_rate(self) -> float:
        return self.sum_rate / self.n_samples


@dataclass
class CountyTruth:
    fips: str
    customers: dict  # year -> true total
    reported_years: list  # years present in the customer-base file
    events: list  # TruthEvent, time ordered
    timestamps: np.ndarray
    customers_out: np.ndarray
    vulnerability: float

    def stream(self) -> RecordStream:
        return RecordStream(self.fips, self.timestamps, self.customers_out)


def _county_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(index)])


def _sample_starts(spec: ScenarioSpec, rng, year: int, rate: float) -> np.ndarray:
    n = rng.poisson(rate)
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    bounds = [_epoch(year, m) for m in range(1, 13)] + [_epoch(year + 1)]
    days = np.diff(bounds) / DAY_S
    w = np.asarray(spec.seasonality) * days
    months = rng.choice(12, size=n, p=w / w.sum())
    lo = np.asarray(bounds[:-1])[months]
    slots = (np.asarray(bounds[1:])[months] - lo) // INTERVAL_S
    return lo + (rng.random(n) * slots).astype(np.int64) * INTERVAL_S


def _render_event(rng, start: int, n: int, peak_out: int, floor_out: int, can_drop: bool,
                  drop_prob: float) -> tuple[np.ndarray, np.ndarray]:
    ts = start + np.arange(n, dtype=np.int64) * INTERVAL_S
    if n == 1:
        return ts, np.array([peak_out], dtype=np.int64)
    # rise to the peak then decay, with multiplicative jitter, floored above threshold
    apex = int(rng.integers(n))
    shape = 1.0 - np.abs(np.arange(n) - apex) / n
    vals = np.floor(peak_out * shape * rng.uniform(0.6, 1.0, n)).astype(np.int64)
    vals = np.clip(vals, floor_out, peak_out)
    vals[apex] = peak_out
    keep = np.ones(n, dtype=bool)
    if can_drop and n >= 3 and drop_prob > 0:
        # isolated interior gaps only: never the first, last or apex sample, never adjacent
        cand = np.flatnonzero(rng.random(n) < drop_prob)
        last = -2
        for i in cand:
            if 0 < i < n - 1 and i != apex and i - last > 1:
                keep[i] = False
                last = i
    return ts[keep], vals[keep]


def simulate_county(spec: ScenarioSpec, index: int, with_truth: bool = True) -> CountyTruth:
    """Render one county's stream and (optionally) its ground-truth event list."""
    rng = _county_rng(spec.seed, index)
    fips = spec.fips[index]
    years = spec.years
    thr = spec.threshold
    vuln = float(rng.random())
    base = int(math.exp(rng.uniform(math.log(spec.customers_min), math.log(spec.customers_max))))
    growth = int(base * spec.growth_max * rng.random())  # non-negative, exactly linear
    customers = {y: base + growth * (y - years[0]) for y in years}
    drop = rng.random(len(years)) < spec.drop_year_prob
    reported = [y for y, d in zip(years, drop) if not d]
    if len(reported) < min(2, len(years)):
        reported = years[:2]
    period_end = _epoch(years[-1] + 1)
    rate = spec.event_rate * (1.0 + spec.heterogeneity * (vuln - 0.5)) if spec.event_rate else 0.0
    rate = max(rate, 0.0)
    max_step = (spec.gap_tolerance + 1) * INTERVAL_S

    pieces = []  # (first ts, ts array, values array)
    sev_shift = 0.8 * (vuln - 0.5)
    for y in years:
        den = customers[y]
        floor_out = _min_above(den, thr)
        starts = _sample_starts(spec, rng, y, rate)
        n_ev = starts.size
        hours = np.exp(rng.normal(spec.duration_log_mean, spec.duration_log_sd, n_ev))
        peaks = np.exp(rng.normal(spec.severity_log_mean + sev_shift, spec.severity_log_sd, n_ev))
        for s, h, p in zip(starts.tolist(), hours.tolist(), peaks.tolist()):
            n = max(1, int(round(h * 4)))
            n = min(n, (period_end - s) // INTERVAL_S)
            peak_out = min(den, max(floor_out, int(round(min(p, 0.95) * den))))
            ts, vals = _render_event(rng, s, n, peak_out, floor_out, spec.gap_tolerance >= 1,
                                     spec.interior_drop_prob)
            pieces.append((ts, vals))
    for pe in spec.planted:
        if pe.county != index:
            continue
        s = int(pd.Timestamp(pe.start).timestamp())
        y = datetime.fromtimestamp(s, timezone.utc).year
        den = customers[y]
        n = max(1, int(round(pe.hours * 4)))
        peak_out = min(den, max(_min_above(den, thr), int(round(pe.peak_rate * den))))
        pieces.append(_render_event(rng, s, n, peak_out, _min_above(den, thr), False, 0.0))

    if pieces:
        ev_ts = np.concatenate([p[0] for p in pieces])
        ev_vals = np.concatenate([p[1] for p in pieces])
        order = np.lexsort((-ev_vals, ev_ts))
        ev_ts, ev_vals = ev_ts[order], ev_vals[order]
        first = np.ones(ev_ts.size, dtype=bool)
        first[1:] = ev_ts[1:] != ev_ts[:-1]
        ev_ts, ev_vals = ev_ts[first], ev_vals[first]  # max value per shared timestamp
    else:
        ev_ts = np.zeros(0, dtype=np.int64)
        ev_vals = np.zeros(0, dtype=np.int64)

    # merge the event list: overlapping or within the reporting gap -> one event
    spans = []
    for ts, _ in sorted(pieces, key=lambda p: (int(p[0][0]), int(p[0][-1]))):
        a, b = int(ts[0]), int(ts[-1])
        if spans and a - spans[-1][1] <= max_step:
            spans[-1][1] = max(spans[-1][1], b)
        else:
            spans.append([a, b])

    # background samples outside every merged span, at or below the threshold
    n_noise = rng.poisson(spec.noise_per_year * len(years)) if spec.noise_per_year else 0
    lo = _epoch(years[0])
    slots = (period_end - lo) // INTERVAL_S
    nz_ts = np.unique(lo + rng.integers(0, slots, size=n_noise) * INTERVAL_S)
    if spans and nz_ts.size:
        sp = np.asarray(spans, dtype=np.int64)
        k = np.searchsorted(sp[:, 0], nz_ts, side="right") - 1
        inside = (k >= 0) & (nz_ts <= sp[np.maximum(k, 0), 1])
        nz_ts = nz_ts[~inside]
    cap = _max_at_or_below(min(customers.values()), thr)
    nz_vals = rng.integers(0, cap + 1, size=nz_ts.size)

    ts_all = np.concatenate([ev_ts, nz_ts])
    out_all = np.concatenate([ev_vals, nz_vals]).astype(np.int64)
    order = np.argsort(ts_all, kind="stable")
    ts_all, out_all = ts_all[order], out_all[order]

    events = []
    if with_truth:
        for a, b in spans:
            i0 = int(np.searchsorted(ev_ts, a, side="left"))
            i1 = int(np.searchsorted(ev_ts, b, side="right"))
            seg_ts, seg_v = ev_ts[i0:i1].tolist(), ev_vals[i0:i1].tolist()
            den = customers[datetime.fromtimestamp(a, timezone.utc).year]
            sum_rate = 0.0
            for v in seg_v:
                sum_rate += v / den
            events.append(TruthEvent(seg_ts[0], seg_ts[-1], max(seg_v), sum(seg_v), sum_rate,
                                     len(seg_v), den))
    return CountyTruth(fips, customers, reported, events, ts_all, out_all, vuln)


# -- ground-truth features ----------------------------------------------------

def _avg(xs) -> float:
    return sum(xs) / len(xs) if xs else 0.0


def _gaps_days(evs) -> list:
    return [(evs[i + 1].start - evs[i].end) / DAY_S for i in range(len(evs) - 1)]


def _month_key(ts: int) -> tuple:
    d = datetime.fromtimestamp(ts, timezone.utc)
    return d.year, d.month


def truth_features(county: CountyTruth, first_year: int, last_year: int,
                   large_rate: float = 0.05, long_hours: float = 12.0) -> list:
    """The 14 features of one county over calendar years ``first_year..last_year``."""
    lo, hi = _epoch(first_year), _epoch(last_year + 1)
    evs = [e for e in county.events if lo <= e.start < hi]
    large = [e for e in evs if e.peak_rate > large_rate]
    long_ = [e for e in evs if e.duration_h > long_hours]
    sums = {}
    for t, v in zip(county.timestamps.tolist(), county.customers_out.tolist()):
        if lo <= t < hi:
            k = _month_key(t)
            sums[k] = sums.get(k, 0) + v
    months = [(y, m) for y in range(first_year, last_year + 1) for m in range(1, 13)]
    series = [sums.get(k, 0) for k in months]
    changes = [(series[i + 1] - series[i]) / series[i] * 100.0
               for i in range(len(series) - 1) if series[i] > 0]
    return [
        float(len(evs)),
        _avg([e.mean_rate for e in evs]) * 100.0,
        _avg([e.duration_h for e in evs]) / 24.0,
        _avg(_gaps_days(evs)),
        float(sum(e.peak_out for e in evs)),
        max((e.peak_rate for e in evs), default=0.0) * 100.0,
        _avg(changes),
        sum(e.sum_out * 0.25 / e.customers_total for e in evs),
        float(len(large)),
        _avg([e.duration_h for e in large]) / 24.0,
        _avg(_gaps_days(large)),
        float(len(long_)),
        _avg([e.mean_rate for e in long_]) * 100.0,
        _avg(_gaps_days(long_)),
    ]


@dataclass
class Scenario:
    spec: ScenarioSpec
    counties: list  # CountyTruth

    @property
    def streams(self) -> dict[str, RecordStream]:
        return {c.fips: c.stream() for c in self.counties}

    def customer_base(self, reported_only: bool = True) -> dict[str, dict[int, int]]:
        return {c.fips: {y: c.customers[y] for y in (c.reported_years if reported_only
                                                     else c.customers)}
                for c in self.counties}

    def truth_series(self):
        """Ground-truth events as :class:`EventSeries` objects keyed by fips."""
        from .events import EventSeries
        out = {}
        for c in self.counties:
            ev = c.events
            out[c.fips] = EventSeries(
                c.fips, [e.start for e in ev], [e.end for e in ev], [e.peak_out for e in ev],
                [e.sum_rate for e in ev], [e.sum_out for e in ev], [e.n_samples for e in ev],
                [e.customers_total for e in ev])
        return out

    def truth_matrix(self, first_year: int | None = None, last_year: int | None = None,
                     label: str | None = None) -> FeatureMatrix:
        years = self.spec.years
        a = years[0] if first_year is None else first_year
        b = years[-1] if last_year is None else last_year
        label = label or (str(a) if a == b else f"{a}-{b}")
        rows = [truth_features(c, a, b) for c in self.counties]
        return FeatureMatrix([c.fips for c in self.counties], np.array(rows, dtype=np.float64)
                             .reshape(len(rows), len(FEATURE_NAMES)), label)

    def nri_table(self) -> dict[str, str]:
        """NRI categories driven by each county's latent vulnerability."""
        return _nri_table(self.spec, [c.fips for c in self.counties],
                          [c.vulnerability for c in self.counties])


def _nri_table(spec: ScenarioSpec, fips, vulnerability) -> dict[str, str]:
    rng = np.random.default_rng([spec.seed, 7919])
    v = np.asarray(vulnerability, dtype=float)
    base = math.log((1 - spec.nri_low_share) / spec.nri_low_share)
    p = 1.0 / (1.0 + np.exp(-(base + spec.nri_signal * (v - 0.5))))
    pos = rng.random(v.size) < p
    cats = np.where(pos, np.minimum(1 + (v * 4).astype(int), 4), 0)
    return {f: NRI_CATEGORIES[k].title() for f, k in zip(fips, cats)}


def generate_stream(spec: ScenarioSpec, with_truth: bool = True) -> Scenario:
    """Simulate every county of ``spec``; deterministic for a fixed seed."""
    return Scenario(spec, [simulate_county(spec, i, with_truth) for i in range(spec.n_counties)])


def generate_labeled(spec: ScenarioSpec, signal_strength: float, n_rows: int | None = None,
                     prevalence: float = 0.7) -> LabeledDataset:
    """Feature-like rows in [0, 1] with labels from a logistic model.

    The logit is ``base + 4 * signal_strength * Σ c_j (x_j - mean(x_j))`` over
    ``PLANTED_FEATURES`` with coefficients ``PLANTED_COEFS``; at zero strength
    labels are independent of the features.
    """
    if signal_strength < 0:
        raise ValueError("signal_strength must be >= 0")
    n = spec.n_counties if n_rows is None else int(n_rows)
    rng = np.random.default_rng([spec.seed, 104729])
    # skewed, mildly correlated columns resembling normalized outage features
    latent = rng.random((n, 1))
    X = np.clip(0.7 * rng.beta(1.2, 2.5, (n, len(FEATURE_NAMES))) + 0.3 * latent, 0.0, 1.0)
    logit = np.full(n, math.log(prevalence / (1 - prevalence)))
    for name, c in zip(PLANTED_FEATURES, PLANTED_COEFS):
        j = FEATURE_NAMES.index(name)
        logit += signal_strength * c * (X[:, j] - X[:, j].mean()) * 4.0
    y = (rng.random(n) < 1.0 / (1.0 + np.exp(-logit))).astype(np.int64)
    width = len(str(max(n - 1, 0)))
    ids = [f"row{i:0{width}d}" for i in range(n)]
    return LabeledDataset(X, y, ids, FEATURE_NAMES)


# -- scenario files -------------------------------------------------------------

def _write_csv(df: pd.DataFrame, path: Path) -> None:
    df.to_csv(path, index=False, lineterminator="\n")


def write_scenario(scenario: Scenario, out_dir, truth: bool = True) -> dict[str, str]:
    """Write records, customer base, NRI, group, energy and urban-form CSVs.

    Returns a mapping of input role to written path.
    """
    return _write_counties(scenario.spec, scenario.counties, out_dir, truth)[0]


def stream_scenario(spec: ScenarioSpec, out_dir, truth: bool = True) -> tuple[dict[str, str], int]:
    """Simulate and write ``spec`` one county at a time.

    Output is byte-identical to ``write_scenario(generate_stream(spec), ...)``,
    but only one county's samples are held in memory. Returns the path mapping
    and the number of record rows written.
    """
    counties = (simulate_county(spec, i, truth) for i in range(spec.n_counties))
    return _write_counties(spec, counties, out_dir, truth)


_EVENT_COLUMNS = ["fips", "start", "end", "duration_h", "peak_out", "peak_rate", "mean_rate",
                  "customer_hours", "customers_total", "n_samples"]


def _write_counties(spec: ScenarioSpec, counties, out_dir, truth: bool):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {k: out / f for k, f in (
        ("records", "records.csv"), ("customers", "customers.csv"), ("nri", "nri.csv"),
        ("urban_rural", "groups_urban_rural.csv"), ("rto", "groups_rto.csv"),
        ("state", "groups_state.csv"), ("energy", "energy.csv"),
        ("urban_form", "urban_form.csv"))}
    if truth:
        paths["truth_events"] = out / "truth_events.csv"
        paths["truth_features"] = out / "truth_features.csv"
    (out / "scenario.json").write_text(spec.to_json() + "\n")

    # one pass: samples and truth events stream to disk, per-county summaries stay
    years = spec.years
    fips, size, vuln, base_rows, feat_rows = [], [], [], [], []
    n_records = 0
    with ExitStack() as stack:
        rec = stack.enter_context(open(paths["records"], "w", newline=""))
        rec.write(",".join(REQUIRED_COLUMNS) + "\n")
        if truth:
            ev = stack.enter_context(open(paths["truth_events"], "w", newline=""))
            ev.write(",".join(_EVENT_COLUMNS) + "\n")
        for c in counties:
            write_records([c.stream()], rec, epoch=True, header=False)
            n_records += len(c.timestamps)
            fips.append(c.fips)
            size.append(min(c.customers.values()))
            vuln.append(c.vulnerability)
            base_rows.extend((c.fips, y, c.customers[y]) for y in c.reported_years)
            if truth:
                feat_rows.append(truth_features(c, years[0], years[-1]))
                if c.events:
                    pd.DataFrame([(c.fips, e.start, e.end, e.duration_h, e.peak_out, e.peak_rate,
                                   e.mean_rate, e.sum_out * 0.25, e.customers_total, e.n_samples)
                                  for e in c.events], columns=_EVENT_COLUMNS
                                 ).to_csv(ev, index=False, header=False, lineterminator="\n")

    _write_csv(pd.DataFrame(base_rows, columns=["fips", "year", "customers_total"]),
               paths["customers"])
    nri = _nri_table(spec, fips, vuln)
    _write_csv(pd.DataFrame({"fips": list(nri), "nri_category": list(nri.values())}),
               paths["nri"])

    rng = np.random.default_rng([spec.seed, 15485863])
    size = np.array(size, dtype=float)
    urban = np.log(size) + rng.normal(0, 0.5, size.size) > np.median(np.log(size))
    _write_csv(pd.DataFrame({"fips": fips, "label": np.where(urban, "urban", "rural")}),
               paths["urban_rural"])
    rtos = ("PJM", "MISO", "SPP", "ERCOT", "CAISO", "NYISO", "ISO-NE", "non-RTO")
    rows = []
    for f in fips:
        first = rtos[int(f[:2]) % len(rtos)]
        rows.append((f, first))
        if rng.random() < 0.1:
            rows.append((f, rtos[(rtos.index(first) + 1) % len(rtos)]))
    _write_csv(pd.DataFrame(rows, columns=["fips", "label"]), paths["rto"])
    _write_csv(pd.DataFrame({"fips": fips, "label": [f[:2] for f in fips]}), paths["state"])
    states = sorted({f[:2] for f in fips})
    _write_csv(pd.DataFrame({"state": states,
                             "solar_pct": np.round(rng.gamma(2.0, 2.0, len(states)), 3),
                             "wind_pct": np.round(rng.gamma(2.0, 4.0, len(states)), 3)}),
               paths["energy"])
    latent = rng.normal(size=(len(fips), 3))
    mix = rng.normal(size=(3, len(URBAN_FORM_COLUMNS)))
    form = latent @ mix + 0.3 * rng.normal(size=(len(fips), len(URBAN_FORM_COLUMNS)))
    uf = pd.DataFrame(np.round(form, 6), columns=list(URBAN_FORM_COLUMNS))
    uf.insert(0, "fips", fips)
    _write_csv(uf, paths["urban_form"])

    if truth:
        label = str(years[0]) if years[0] == years[-1] else f"{years[0]}-{years[-1]}"
        m = FeatureMatrix(fips, np.array(feat_rows, dtype=np.float64)
                          .reshape(len(feat_rows), len(FEATURE_NAMES)), label)
        _write_csv(m.to_frame(), paths["truth_features"])
    return {k: str(v) for k, v in paths.items()}, n_records

