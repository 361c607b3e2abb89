import io

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from psvi.events import EventSeries, extract_events
from psvi.features import (FEATURE_DIMENSIONS, FEATURE_NAMES, FeatureMatrix, FeatureVector,
                           Period, change_rate_from_sums, compute_features, minmax_normalize,
                           monthly_change_rate, monthly_sums, read_feature_frames,
                           write_feature_frames)
from psvi.ingest import RecordStream

from . import oracles
from .conftest import T0

HOUR = 3600
DAY = 86400


def _series(events, den=1000):
    """events: (start, n_samples, peak_out, per-sample out)"""
    starts = [s for s, *_ in events]
    ends = [s + (n - 1) * 900 for s, n, *_ in events]
    return EventSeries("01001", starts, ends, [p for _, _, p, _ in events],
                       [n * o / den for _, n, _, o in events], [n * o for _, n, _, o in events],
                       [n for _, n, *_ in events], [den] * len(events))


def _empty_stream():
    return RecordStream("01001", [], [])


def test_two_events_six_and_eighteen_hours():
    ev = _series([(T0, 24, 5, 5), (T0 + 5.75 * HOUR + 7 * DAY, 72, 5, 5)])
    f = compute_features(ev, _empty_stream(), Period.year(2020))
    assert f.n_events == 2 and f.n_events_gt12h == 1
    assert f.avg_duration == 0.5
    assert f.avg_inter_event_time == 7.0
    assert f.avg_inter_event_gt12h == 0.0


def test_single_large_event():
    ev = _series([(T0, 4, 60, 30)])
    f = compute_features(ev, _empty_stream(), Period.year(2020))
    assert f.peak_customers_ratio == 6.0
    assert f.n_events_gt5pct == 1 and f.avg_inter_event_gt5pct == 0.0
    assert f.cum_customers_affected == 60
    assert f.avg_duration_per_customer == pytest.approx(4 * 30 * 0.25 / 1000)


def test_cumulative_customers_modes():
    ev = _series([(T0, 4, 60, 30), (T0 + DAY, 2, 10, 8)])
    p = Period.year(2020)
    assert compute_features(ev, _empty_stream(), p).cum_customers_affected == 70
    assert compute_features(ev, _empty_stream(), p, cum_mode="sample").cum_customers_affected == 136
    with pytest.raises(ValueError):
        compute_features(ev, _empty_stream(), p, cum_mode="max")


def test_empty_period_gives_zeros():
    f = compute_features(EventSeries.empty("01001"), _empty_stream(), Period.year(2020))
    assert f == FeatureVector()


def test_events_attributed_by_start():
    ev = _series([(T0 - 900, 8, 5, 5)])
    assert compute_features(ev, _empty_stream(), Period.year(2020)).n_events == 0
    assert compute_features(ev, _empty_stream(), Period.year(2019)).n_events == 1


def test_change_rate_examples():
    assert change_rate_from_sums([100, 200, 100]) == (25.0, False)
    assert change_rate_from_sums([7, 7, 7, 7]) == (0.0, False)
    assert change_rate_from_sums([5]).degenerate
    assert change_rate_from_sums([0, 0, 3]).degenerate
    # zero base months are skipped
    assert change_rate_from_sums([0, 10, 20]).value == 100.0


def test_change_rate_matches_month_list_oracle(rng):
    for _ in range(20):
        sums = rng.integers(0, 50, 24).astype(float)
        sums[rng.random(24) < 0.2] = 0
        ch = [(sums[i + 1] - sums[i]) / sums[i] * 100 for i in range(23) if sums[i] > 0]
        got = change_rate_from_sums(sums)
        assert got.value == pytest.approx(np.mean(ch) if ch else 0.0, rel=1e-12, abs=0)


def test_monthly_change_rate_fills_missing_months_with_zero():
    feb = T0 + 31 * DAY
    apr = T0 + (31 + 29 + 31) * DAY
    s = RecordStream("01001", [T0, T0 + 900, feb, apr], [50, 50, 200, 100])
    months, sums = monthly_sums(s)
    assert sums.tolist() == [100, 200, 100]
    # Jan 100 -> Feb 200 (+100%), Feb -> Mar 0 (-100%), Mar skipped, Apr -> May ... -> Dec
    got = monthly_change_rate(s, Period.year(2020))
    assert got.value == pytest.approx((100.0 - 100.0 - 100.0) / 3)


def test_period_months():
    assert Period.year(2020).months().size == 12
    assert Period.years(2014, 2023).months().size == 120
    assert Period.years(2014, 2023).label == "2014-2023"


def test_features_match_naive_oracle_on_many_events(rng):
    # 200 events with random lengths, peaks and spacing across two years
    den = 2000
    starts, lens, t = [], [], T0
    for _ in range(200):
        t += 900 * int(rng.integers(3, 600))
        n = int(rng.integers(1, 80))
        starts.append(t)
        lens.append(n)
        t += 900 * (n - 1)
    ts, out = [], []
    for s, n in zip(starts, lens):
        vals = rng.integers(3, 300, n)
        ts.extend(s + 900 * np.arange(n))
        out.extend(vals.tolist())
    stream = RecordStream("01001", ts, out)
    ev = extract_events(stream, den, gap_tolerance=0)
    assert len(ev) == 200
    period = Period.years(2020, 2021)
    sums = [0] * 24
    for t_, o in zip(ts, out):
        y, m = oracles.year_month(t_)
        if y < 2022:
            sums[(y - 2020) * 12 + m - 1] += o
    expect = oracles.naive_features(oracles.series_tuples(ev.between(period.start, period.end)),
                                    sums)
    got = compute_features(ev, stream, period).as_array()
    for name, g, e in zip(FEATURE_NAMES, got, expect):
        assert g == pytest.approx(e, rel=1e-9, abs=1e-12), name


@given(st.integers(0, 2**31))
def test_feature_vector_invariants(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(0, 30))
    starts = T0 + 900 * np.sort(rng.choice(np.arange(0, 30000, 200), n, replace=False))
    lens = rng.integers(1, 150, n)
    peaks = rng.integers(2, 200, n)
    ev = EventSeries("01001", starts, starts + 900 * (lens - 1), peaks,
                     lens * 0.5 * peaks / 1000, lens * peaks // 2 + 1, lens, np.full(n, 1000))
    f = compute_features(ev, _empty_stream(), Period.year(2020))
    assert f.n_events_gt5pct <= f.n_events and f.n_events_gt12h <= f.n_events
    arr = f.as_array()
    skip = FEATURE_NAMES.index("avg_change_rate")
    assert (np.delete(arr, skip) >= 0).all()
    if n:
        assert f.peak_customers_ratio <= (ev.peak_rate.max() * 100) + 1e-12


def test_period_additivity(rng):
    # counts and sums add across disjoint periods; averages recombine by count
    starts = T0 + 900 * np.sort(rng.choice(np.arange(0, 60000, 100), 60, replace=False))
    n = rng.integers(1, 80, 60)
    peaks = rng.integers(2, 200, 60)
    ev = EventSeries("01001", starts, starts + 900 * (n - 1), peaks, n * peaks / 2000.0,
                     n * peaks, n, np.full(60, 1000))
    mid = int(starts[30])
    a = Period("a", T0, mid)
    b = Period("b", mid, T0 + 10**8)
    whole = Period("w", T0, T0 + 10**8)
    fa, fb, fw = (compute_features(ev, _empty_stream(), p, monthly=(np.zeros(0), np.zeros(0)))
                  for p in (a, b, whole))
    for name in ("n_events", "cum_customers_affected", "n_events_gt5pct", "n_events_gt12h",
                 "avg_duration_per_customer"):
        assert getattr(fa, name) + getattr(fb, name) == pytest.approx(getattr(fw, name))
    for avg, cnt in (("avg_duration", "n_events"), ("avg_outage_rate", "n_events"),
                     ("avg_duration_gt5pct", "n_events_gt5pct")):
        ca, cb = getattr(fa, cnt), getattr(fb, cnt)
        if ca + cb:
            assert (getattr(fa, avg) * ca + getattr(fb, avg) * cb) / (ca + cb) == pytest.approx(
                getattr(fw, avg))


def test_feature_order_and_dimensions():
    assert len(FEATURE_NAMES) == 14
    assert set(FEATURE_DIMENSIONS) == set(FEATURE_NAMES)
    assert set(FEATURE_DIMENSIONS.values()) == {"frequency", "intensity", "duration"}
    v = FeatureVector.from_array(np.arange(14))
    assert v.as_array().tolist() == list(range(14))


def test_minmax_examples():
    m = FeatureMatrix(["a", "b", "c"], np.column_stack([[2, 4, 6]] + [[5, 5, 5]] * 13))
    norm = minmax_normalize(m)
    assert norm.matrix.values[:, 0].tolist() == [0, 0.5, 1]
    assert (norm.matrix.values[:, 1] == 0).all()
    assert norm.constant_columns == list(FEATURE_NAMES[1:])
    with pytest.raises(ValueError):
        minmax_normalize(FeatureMatrix(["a"], np.zeros((1, 14))))


def test_minmax_round_trip(rng):
    m = FeatureMatrix([f"{i:05d}" for i in range(40)], rng.normal(size=(40, 14)) * 100)
    norm = minmax_normalize(m)
    v = norm.matrix.values
    assert v.min() == 0 and v.max() == 1
    assert (v.min(axis=0) == 0).all() and (v.max(axis=0) == 1).all()
    assert np.allclose(norm.denormalize(v), m.values, rtol=0, atol=1e-12 * np.abs(m.values).max())
    assert np.array_equal(norm.apply(m).values, v)


def test_matrix_validation_and_export():
    with pytest.raises(ValueError):
        FeatureMatrix(["a", "a"], np.zeros((2, 14)))
    with pytest.raises(ValueError):
        FeatureMatrix(["a"], np.full((1, 14), np.nan))
    m = FeatureMatrix(["01001", "02002"], np.arange(28.0).reshape(2, 14) / 7, "2020")
    buf = io.StringIO()
    write_feature_frames([m], buf)
    header = buf.getvalue().splitlines()[0].split(",")
    assert header == ["fips", "period", *FEATURE_NAMES]
    back = read_feature_frames(io.StringIO(buf.getvalue()))["2020"]
    assert back.fips == m.fips and np.array_equal(back.values, m.values)
