import json
import shutil
import subprocess
import sys

import pandas as pd
import pytest

from psvi.cli import main
from psvi.config import ConfigError, PipelineConfig


def _config(tmp_path, out, **extra):
    p = tmp_path / f"config-{out.name}.json"
    p.write_text(json.dumps({"synth": {"n_counties": 20}, "out": str(out), **extra}))
    return p


@pytest.fixture(scope="module")
def pipeline_run(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("cli")
    out = tmp / "run"
    cfg = _config(tmp, out)
    assert main(["synth", "--config", str(cfg), "-q"]) == 0
    assert main(["all", "--config", str(cfg), "-q"]) == 0
    return tmp, out, cfg


def test_complete_output_tree(pipeline_run):
    _, out, _ = pipeline_run
    idx = pd.read_csv(out / "index/index.csv", dtype={"fips": str})
    assert len(idx) == 20 and idx["fips"].is_unique
    assert list(idx.columns) == ["fips", "period", "value", "score", "rating"]
    annual = pd.read_csv(out / "annual/index_annual.csv", dtype={"fips": str})
    assert len(annual) == 40
    for rel in ("explain/weights.json", "model/model.json", "analysis/report.json",
                "annual/hotspots.csv", "features/features.csv", "events/events.csv"):
        assert (out / rel).stat().st_size > 0


def test_manifest_outputs_exist(pipeline_run):
    _, out, cfg = pipeline_run
    m = json.loads((out / "run_manifest.json").read_text())
    assert m["config_hash"] == PipelineConfig.load(cfg).digest()
    assert set(m["stages"]) >= {"synth", "ingest", "events", "features", "train", "explain",
                                "index", "annual", "analyze"}
    for stage in m["stages"].values():
        for rel in stage["outputs"]:
            assert (out / rel).stat().st_size > 0, rel
    timings = json.loads((out / "run_timings.json").read_text())
    assert set(timings) == set(m["stages"])
    assert m["stages"]["ingest"]["counts"]["rejected"] == 0


def test_rerun_is_byte_identical(pipeline_run, tmp_path):
    _, out, _ = pipeline_run
    out2 = tmp_path / "run2"
    cfg = _config(tmp_path, out2)
    assert main(["synth", "--config", str(cfg), "-q"]) == 0
    assert main(["all", "--config", str(cfg), "-q"]) == 0
    for rel in ("index/index.csv", "annual/index_annual.csv", "model/model.json",
                "explain/importance.csv", "analysis/report.json"):
        assert (out / rel).read_bytes() == (out2 / rel).read_bytes(), rel
    m1 = json.loads((out / "run_manifest.json").read_text())
    m2 = json.loads((out2 / "run_manifest.json").read_text())
    m1.pop("out", None), m2.pop("out", None)
    assert m1 == m2


def test_stage_rerun_reproduces_output(pipeline_run, tmp_path):
    _, out, cfg = pipeline_run
    before = (out / "index/index.csv").read_bytes()
    assert main(["index", "--config", str(cfg), "-q"]) == 0
    assert (out / "index/index.csv").read_bytes() == before


def test_missing_prior_stage_exits_2(tmp_path, capsys):
    cfg = _config(tmp_path, tmp_path / "empty")
    assert main(["features", "--config", str(cfg), "-q"]) == 2
    assert "events" in capsys.readouterr().err
    assert main(["all", "--config", str(tmp_path / "nope.json")]) == 2


def test_schema_and_config_errors_exit_3(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"thresholds": {"event_rate": -1}}))
    assert main(["ingest", "--config", str(bad)]) == 3
    bad.write_text("{not json")
    assert main(["ingest", "--config", str(bad)]) == 3
    bad.write_text(json.dumps({"colour": 1}))
    assert main(["ingest", "--config", str(bad)]) == 3
    out = tmp_path / "schema"
    (out / "synth").mkdir(parents=True)
    (out / "synth/records.csv").write_text("fips,when,customers_out\n01001,x,1\n")
    (out / "synth/customers.csv").write_text("fips,year,customers_total\n01001,2015,10\n")
    assert main(["ingest", "--config", str(_config(tmp_path, out))]) == 3


def test_corrupt_model_exits_4(pipeline_run, tmp_path):
    _, out, _ = pipeline_run
    copy = tmp_path / "copy"
    shutil.copytree(out, copy)
    model = json.loads((copy / "model/model.json").read_text())
    model["trees"][0]["cover"] = 0.0
    (copy / "model/model.json").write_text(json.dumps(model))
    assert main(["explain", "--config", str(_config(tmp_path, copy))]) == 4


def test_config_round_trip_and_digest(tmp_path):
    cfg = PipelineConfig.from_dict({"seed": 7, "thresholds": {"gap_tolerance": 2},
                                    "index": {"weight_mode": "minmax"}})
    cfg.save(tmp_path / "c.json")
    back = PipelineConfig.load(tmp_path / "c.json")
    assert back == cfg and back.to_json() == cfg.to_json()
    moved = PipelineConfig.from_dict({**cfg.to_dict(), "out": "elsewhere", "threads": 4})
    assert moved.digest() == cfg.digest()
    assert PipelineConfig.from_dict({**cfg.to_dict(), "seed": 8}).digest() != cfg.digest()
    with pytest.raises(ConfigError):
        PipelineConfig.from_dict({"index": {"weight_mode": "median"}})


def test_console_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "psvi.cli", "--help"], capture_output=True,
                         text=True)
    assert res.returncode == 0 and "--threads" in res.stdout
