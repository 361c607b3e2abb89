import json

import numpy as np
import pandas as pd
import pytest

from psvi.events import extract_events
from psvi.features import FEATURE_NAMES
from psvi.ingest import parse_records, read_customer_base
from psvi.synth import (PLANTED_FEATURES, PlantedEvent, ScenarioSpec, generate_labeled,
                        generate_stream, stream_scenario, write_scenario)

from .conftest import closure_mismatches, recover_matrix


def test_zero_rate_is_vacuous():
    sc = generate_stream(ScenarioSpec(n_counties=5, event_rate=0, noise_per_year=0, seed=1))
    assert all(c.timestamps.size == 0 and c.events == [] for c in sc.counties)
    assert not sc.truth_matrix().values.any()
    assert not recover_matrix(sc).values.any()


def test_background_alone_has_no_events():
    sc = generate_stream(ScenarioSpec(n_counties=5, event_rate=0, seed=1))
    change = FEATURE_NAMES.index("avg_change_rate")
    m = sc.truth_matrix()
    assert not np.delete(m.values, change, axis=1).any()
    for c in sc.counties:
        assert c.events == [] and c.timestamps.size > 0
        assert (c.customers_out <= 0.001 * min(c.customers.values())).all()
    assert closure_mismatches(recover_matrix(sc), m) == []


def test_single_planted_event():
    spec = ScenarioSpec(n_counties=1, n_years=1, event_rate=0, noise_per_year=50, seed=2,
                        planted=(PlantedEvent(0, "2015-03-04T10:00:00Z", 6.0, 0.08),))
    sc = generate_stream(spec)
    row = dict(zip(FEATURE_NAMES, sc.truth_matrix().values[0]))
    assert row["n_events"] == 1 and row["n_events_gt5pct"] == 1 and row["n_events_gt12h"] == 0
    ev = sc.counties[0].events[0]
    assert ev.duration_h == 6.0 and ev.peak_rate == pytest.approx(0.08, abs=1e-3)
    assert closure_mismatches(recover_matrix(sc), sc.truth_matrix()) == []


def test_closure_small(small_scenario):
    got, truth = recover_matrix(small_scenario), small_scenario.truth_matrix()
    assert closure_mismatches(got, truth) == []
    assert truth.values[:, 0].sum() > 0


def test_closure_with_no_gap_tolerance():
    sc = generate_stream(ScenarioSpec(n_counties=8, gap_tolerance=0, seed=11))
    assert closure_mismatches(recover_matrix(sc), sc.truth_matrix()) == []


def test_truth_events_match_extraction(small_scenario):
    base = small_scenario.customer_base()
    for c in small_scenario.counties:
        den = {y: c.customers[y] for y in c.customers}
        ev = extract_events(c.stream(), den)
        assert ev.start.tolist() == [e.start for e in c.events]
        assert ev.peak_out.tolist() == [e.peak_out for e in c.events]
        assert set(base[c.fips]) <= set(c.customers)


def test_determinism():
    spec = ScenarioSpec(n_counties=6, seed=9)
    a, b = generate_stream(spec), generate_stream(spec)
    for x, y in zip(a.counties, b.counties):
        assert np.array_equal(x.timestamps, y.timestamps)
        assert np.array_equal(x.customers_out, y.customers_out)
    assert np.array_equal(a.truth_matrix().values, b.truth_matrix().values)
    # a county does not depend on how many others are generated
    c = generate_stream(ScenarioSpec(n_counties=3, seed=9))
    assert np.array_equal(c.counties[2].customers_out, a.counties[2].customers_out)


def test_spec_json_round_trip():
    spec = ScenarioSpec(n_counties=4, seed=5,
                        planted=(PlantedEvent(1, "2015-06-01T00:00:00Z", 3.0, 0.2),))
    assert ScenarioSpec.from_json(spec.to_json()) == spec
    with pytest.raises(ValueError):
        ScenarioSpec.from_dict({"n_countys": 3})
    with pytest.raises(ValueError):
        ScenarioSpec(event_rate=-1)


def test_fips_are_unique_and_valid():
    f = ScenarioSpec(n_counties=3000).fips
    assert len(set(f)) == 3000 and all(len(x) == 5 and x.isdigit() for x in f)


def test_labeled_data():
    spec = ScenarioSpec(seed=4)
    a = generate_labeled(spec, 5.0, n_rows=500)
    b = generate_labeled(spec, 5.0, n_rows=500)
    assert np.array_equal(a.X, b.X) and np.array_equal(a.y, b.y)
    assert a.X.shape == (500, 14) and a.X.min() >= 0 and a.X.max() <= 1
    assert 0.5 < a.y.mean() < 0.9
    j = FEATURE_NAMES.index(PLANTED_FEATURES[0])
    hi = a.X[:, j] > np.median(a.X[:, j])
    assert a.y[hi].mean() > a.y[~hi].mean() + 0.2
    null = generate_labeled(spec, 0.0, n_rows=4000)
    assert np.array_equal(null.X, generate_labeled(spec, 3.0, n_rows=4000).X)
    assert abs(np.corrcoef(null.X[:, j], null.y)[0, 1]) < 0.05
    with pytest.raises(ValueError):
        generate_labeled(spec, -1.0)


def test_write_scenario(small_scenario, tmp_path):
    paths = write_scenario(small_scenario, tmp_path)
    for p in paths.values():
        assert pd.read_csv(p).shape[0] > 0
    parsed = parse_records(paths["records"])
    assert parsed.n_rejected == 0
    for c in small_scenario.counties:
        s = parsed.streams[c.fips]
        assert np.array_equal(s.timestamps, c.timestamps)
        assert np.array_equal(s.customers_out, c.customers_out)
    assert read_customer_base(paths["customers"]) == small_scenario.customer_base()
    spec = json.loads((tmp_path / "scenario.json").read_text())
    assert ScenarioSpec.from_dict(spec) == small_scenario.spec


@pytest.mark.parametrize("truth", [True, False])
def test_streamed_scenario_files_are_identical(small_scenario, tmp_path, truth):
    spec = small_scenario.spec
    a = write_scenario(generate_stream(spec, with_truth=truth), tmp_path / "a", truth=truth)
    b, n = stream_scenario(spec, tmp_path / "b", truth=truth)
    assert a.keys() == b.keys()
    for k in a:
        assert open(a[k], "rb").read() == open(b[k], "rb").read(), k
    assert n == sum(len(c.timestamps) for c in small_scenario.counties)


def test_unplanted_features_get_small_weights():
    from psvi.explain import global_importance, weights_from_shap
    from psvi.model import smote, split_train_test, train_gbdt

    ds = generate_labeled(ScenarioSpec(seed=0), 10.0, n_rows=3000)
    train, _ = split_train_test(ds, 0.2, 0)
    bal = smote(train, seed=0)
    model = train_gbdt(bal.X, bal.y, seed=0, feature_names=FEATURE_NAMES)
    w = weights_from_shap(global_importance(model, ds.X), "absolute")
    planted = [FEATURE_NAMES.index(f) for f in PLANTED_FEATURES]
    others = np.delete(w.weights, planted)
    assert np.abs(others).max() < 0.05
    assert w.weights[planted].min() > np.abs(others).max()
