import io

import numpy as np
import pandas as pd
import pytest
from hypothesis import given
from hypothesis import strategies as st

from psvi.ingest import (CustomerBase, DivisionGuardError, MissingDenominatorError,
                         OutageRecord, RecordStream, SchemaError, extrapolate_customer_base,
                         outage_rate, parse_records, partition_records, read_customer_base,
                         read_partition, write_records)

from .conftest import T0


def _csv(rows, header="fips,timestamp,customers_out"):
    return (header + "\n" + "\n".join(",".join(map(str, r)) for r in rows) + "\n").encode()


def test_out_of_order_rows_become_one_sorted_stream():
    data = _csv([("01001", "2020-01-01T00:30:00Z", 5), ("01001", "2020-01-01T00:00:00Z", 3),
                 ("01001", "2020-01-01T00:15:00Z", 4)])
    res = parse_records(data)
    s = res.streams["01001"]
    assert list(s.customers_out) == [3, 4, 5]
    assert list(np.diff(s.timestamps)) == [900, 900]
    assert res.n_rejected == 0


def test_empty_file_with_header():
    res = parse_records(_csv([]))
    assert res.streams == {}
    assert res.n_rejected == 0 and res.n_rows == 0


def test_missing_column_is_fatal():
    with pytest.raises(SchemaError):
        parse_records(b"fips,timestamp\n01001,0\n")
    with pytest.raises(SchemaError):
        parse_records(b"fips,timestamp\n")


def test_schema_mapping_renames_columns():
    data = _csv([("01001", 0, 2)], header="county,time,out")
    res = parse_records(data, schema={"fips": "county", "timestamp": "time",
                                      "customers_out": "out"})
    assert len(res.streams["01001"]) == 1


def test_row_level_rejections_are_counted():
    data = _csv([("01001", 900, 1), ("1001x", 900, 1), ("01001", "not-a-time", 1),
                 ("01001", 900 * 2 + 300, 1), ("01001", 1800, -4), ("01001", 2700, "2.5")])
    res = parse_records(data)
    reasons = sorted(res.rejects["reason"])
    assert reasons == ["bad_customers_out", "bad_fips", "bad_timestamp",
                       "negative_customers_out", "off_grid"]
    assert res.n_accepted + res.n_rejected == res.n_rows == 6
    assert list(res.rejects.columns) == ["fips", "timestamp", "reason"]


def test_jitter_within_a_minute_snaps_to_grid():
    data = _csv([("01001", "2020-01-01T00:14:30Z", 7), ("01001", "2020-01-01T00:30:59Z", 8),
                 ("01001", "2020-01-01T00:46:01Z", 9)])
    res = parse_records(data)
    s = res.streams["01001"]
    assert list(s.timestamps - T0) == [900, 1800]
    assert res.n_snapped == 2 and res.n_rejected == 1


def test_duplicates_keep_maximum():
    data = _csv([("01001", 0, 3), ("01001", 0, 9), ("01001", 0, 4)])
    res = parse_records(data)
    assert list(res.streams["01001"].customers_out) == [9]
    assert res.n_duplicates == 2


def test_epoch_and_rfc3339_are_equivalent():
    a = parse_records(_csv([("06037", T0, 10)])).streams["06037"]
    b = parse_records(_csv([("06037", "2020-01-01T00:00:00Z", 10)])).streams["06037"]
    c = parse_records(_csv([("06037", "2019-12-31T19:00:00-05:00", 10)])).streams["06037"]
    assert a == b == c


def test_short_fips_is_zero_padded():
    res = parse_records(_csv([("1001", 0, 1)]))
    assert list(res.streams) == ["01001"]


def test_line_count_oracle_many_counties(tmp_path, rng):
    n, counties = 10**6, 100
    fips = np.array([f"{i:05d}" for i in range(1001, 1001 + counties)])
    which = rng.integers(0, counties, n)
    # unique timestamps per county so no duplicates collapse
    ts = np.empty(n, dtype=np.int64)
    for c in range(counties):
        idx = np.flatnonzero(which == c)
        ts[idx] = T0 + 900 * rng.permutation(idx.size)
    df = pd.DataFrame({"fips": fips[which], "timestamp": ts, "customers_out": which})
    path = tmp_path / "big.csv"
    df.to_csv(path, index=False)
    expected = {}
    with open(path) as fh:
        next(fh)
        for line in fh:
            f = line.split(",", 1)[0]
            expected[f] = expected.get(f, 0) + 1
    res = parse_records(path, chunksize=200_000)
    assert {f: len(s) for f, s in res.streams.items()} == expected
    assert all(np.all(np.diff(s.timestamps) > 0) for s in res.streams.values())


def test_partitioned_ingest_matches_in_memory(tmp_path, rng):
    n = 20_000
    fips = rng.choice([f"{i:05d}" for i in range(1001, 1041)], n)
    ts = T0 + 900 * rng.integers(0, 5000, n)
    out = rng.integers(0, 50, n)
    df = pd.DataFrame({"fips": fips, "timestamp": ts, "customers_out": out})
    df.loc[::97, "customers_out"] = -1
    path = tmp_path / "r.csv"
    df.to_csv(path, index=False)
    whole = parse_records(path)
    summary = partition_records(path, tmp_path / "parts", n_partitions=7, chunksize=3000)
    assert summary.n_rows == n
    assert summary.n_accepted + summary.n_rejected == n
    assert summary.n_rejected == whole.n_rejected
    merged = {}
    for name in summary.partitions:
        streams, _ = read_partition(tmp_path / "parts" / name)
        assert not set(streams) & set(merged)
        merged.update(streams)
    assert merged.keys() == whole.streams.keys()
    assert all(merged[f] == whole.streams[f] for f in merged)


stream_strategy = st.lists(st.tuples(st.integers(0, 5000), st.integers(0, 10**6)),
                           min_size=0, max_size=60, unique_by=lambda t: t[0])


@given(stream_strategy)
def test_write_then_parse_is_identity(pairs):
    pairs = sorted(pairs)
    s = RecordStream("48201", [T0 + 900 * k for k, _ in pairs], [c for _, c in pairs])
    for epoch in (False, True):
        buf = io.StringIO()
        write_records([s], buf, epoch=epoch)
        back = parse_records(buf.getvalue().encode())
        if pairs:
            assert back.streams["48201"] == s
        else:
            assert back.streams == {}


def test_record_stream_invariants():
    with pytest.raises(ValueError):
        RecordStream("01001", [900, 0], [1, 1])
    with pytest.raises(ValueError):
        RecordStream("01001", [0, 0], [1, 1])
    with pytest.raises(ValueError):
        RecordStream("01001", [10], [1])
    with pytest.raises(ValueError):
        RecordStream("01001", [0], [-1])
    s = RecordStream("01001", [0, 900], [1, 2])
    with pytest.raises(ValueError):
        s.customers_out[0] = 5
    recs = list(s.records())
    assert isinstance(recs[0], OutageRecord) and recs[1].customers_out == 2


def test_outage_record_validation():
    from datetime import datetime, timezone
    OutageRecord("01001", datetime(2020, 1, 1, 0, 45, tzinfo=timezone.utc), 0)
    with pytest.raises(ValueError):
        OutageRecord("1001", datetime(2020, 1, 1, tzinfo=timezone.utc), 0)
    with pytest.raises(ValueError):
        OutageRecord("01001", datetime(2020, 1, 1, 0, 10, tzinfo=timezone.utc), 0)
    with pytest.raises(ValueError):
        OutageRecord("01001", datetime(2020, 1, 1), 0)


# -- customer base -------------------------------------------------------------

def test_extrapolation_examples():
    assert extrapolate_customer_base({"a": {2018: 1000, 2020: 1200}}, "a", 2022) == 1400
    assert extrapolate_customer_base({"a": {2019: 500}}, "a", 2014) == 500
    assert extrapolate_customer_base({"a": {2018: 1000, 2020: 1200}}, "a", 2020) == 1200
    with pytest.raises(MissingDenominatorError):
        extrapolate_customer_base({"a": {2019: 5}}, "b", 2019)


def test_extrapolation_accepts_record_iterables():
    base = [CustomerBase("a", 2018, 1000), CustomerBase("a", 2020, 1200)]
    assert extrapolate_customer_base(base, "a", 2019) == 1100


def test_extrapolation_clamps_to_one():
    assert extrapolate_customer_base({"a": {2018: 100, 2019: 10}}, "a", 2030) == 1


def test_extrapolation_matches_least_squares_oracle(rng):
    for _ in range(50):
        years = sorted(rng.choice(np.arange(2010, 2024), size=5, replace=False).tolist())
        vals = (rng.normal(50_000, 500) + 800 * (np.array(years) - 2010)
                + rng.normal(0, 300, 5)).round().astype(int)
        target = int(rng.integers(2005, 2030))
        if target in years:
            continue
        A = np.column_stack([np.ones(5), years])
        coef = np.linalg.solve(A.T @ A, A.T @ vals)
        expect = coef[0] + coef[1] * target
        got = extrapolate_customer_base({"x": dict(zip(years, vals.tolist()))}, "x", target)
        assert abs(got - expect) <= 0.5 + 1e-6


@given(st.integers(1, 10**6), st.integers(-5000, 5000), st.integers(2011, 2020))
def test_extrapolation_exact_on_lines(a, b, year):
    known = {y: a * 10 + b * (y - 2000) for y in (2001, 2004, 2009)}
    if min(known.values()) < 1:
        return
    expect = max(1, a * 10 + b * (year - 2000))
    assert extrapolate_customer_base({"f": known}, "f", year) == expect


def test_read_customer_base_rejects_duplicates_and_zero():
    with pytest.raises(SchemaError):
        read_customer_base(io.StringIO("fips,year,customers_total\n01001,2020,5\n01001,2020,6\n"))
    with pytest.raises(SchemaError):
        read_customer_base(io.StringIO("fips,year,customers_total\n01001,2020,0\n"))
    with pytest.raises(SchemaError):
        read_customer_base(io.StringIO("fips,year\n01001,2020\n"))
    base = read_customer_base(io.StringIO("fips,year,customers_total\n1001,2020,5\n"))
    assert base == {"01001": {2020: 5}}


# -- outage rate ---------------------------------------------------------------

def test_outage_rate_examples():
    assert outage_rate(50, 1000) == (0.05, False)
    assert outage_rate(0, 7) == (0.0, False)
    r = outage_rate(1200, 1000)
    assert r.value == 1.2 and r.over_unity
    with pytest.raises(DivisionGuardError):
        outage_rate(1, 0)
