"""Pipeline stages: each reads the previous stage's files and writes its own."""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from itertools import chain
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .analysis import GroupAssignment, read_energy_mix, run_analysis, write_report
from .config import PipelineConfig
from .events import extract_events, read_events, write_events
from .explain import (ModelIntegrityError, WeightVector, global_importance, weights_from_shap,
                      write_importance)
from .features import (FEATURE_NAMES, FeatureMatrix, Period, compute_features,
                       minmax_normalize, monthly_sums, read_feature_frames, write_feature_frames)
from .index import build_index, hotspots, index_frame, state_means, write_hotspots, write_index
from .ingest import (MissingDenominatorError, SchemaError, default_partitions,
                     denominators_for, partition_records, read_customer_base, read_partition,
                     year_of)
from .model import (LabeledDataset, evaluate, label_from_nri, random_search_cv, read_nri, smote,
                    split_train_test, train_gbdt, vif)
from .model.gbdt import TreeEnsemble
from .model.search import space_from_config

log = logging.getLogger(__name__)

STAGES = ("ingest", "events", "features", "train", "explain", "index", "annual", "analyze")
COMMANDS = STAGES + ("synth", "all")
PARTITION_BYTES = 32 * 2**20


class MissingInputError(FileNotFoundError):
    def __init__(self, path, hint: str = ""):
        self.path = str(path)
        super().__init__(f"missing input: {self.path}" + (f" ({hint})" if hint else ""))


class InvariantError(RuntimeError):
    pass


def _require(path: Path, hint: str = "") -> Path:
    if not Path(path).exists():
        raise MissingInputError(path, hint)
    return Path(path)


def _month_label(idx) -> list[str]:
    idx = np.asarray(idx, dtype=np.int64)
    return [f"{1970 + m // 12:04d}-{m % 12 + 1:02d}" for m in idx.tolist()]


def _month_index(labels) -> np.ndarray:
    s = pd.Series(labels, dtype=str)
    return ((s.str[:4].astype(int) - 1970) * 12 + s.str[5:7].astype(int) - 1).to_numpy(np.int64)


class Run:
    """Output directory, manifest bookkeeping and stage implementations."""

    def __init__(self, config: PipelineConfig, out: Path | None = None):
        self.cfg = config
        self.out = Path(out or config.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.inputs = config.inputs.resolve(self.out)
        self.manifest_path = self.out / "run_manifest.json"
        self.timings_path = self.out / "run_timings.json"
        self.manifest = self._load(self.manifest_path) or {}
        self.timings = self._load(self.timings_path) or {}
        self.manifest.update({"config_hash": config.digest(), "seed": config.seed,
                              "version": __version__})
        self.manifest.setdefault("stages", {})
        self._stage = None

    @staticmethod
    def _load(path: Path):
        return json.loads(path.read_text()) if path.exists() else None

    def path(self, rel: str) -> Path:
        p = self.out / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    # -- bookkeeping ------------------------------------------------------------------
    @contextmanager
    def stage(self, name: str):
        log.info("stage %s: start", name)
        self._stage = {"outputs": {}, "counts": {}}
        t0 = time.perf_counter()
        yield self._stage
        self.manifest["stages"][name] = self._stage
        self.timings[name] = round(time.perf_counter() - t0, 3)
        self._stage = None
        self._flush()
        log.info("stage %s: done in %.1fs", name, self.timings[name])

    def _flush(self) -> None:
        self.manifest_path.write_text(json.dumps(self.manifest, indent=2, sort_keys=True) + "\n")
        self.timings_path.write_text(json.dumps(self.timings, indent=2, sort_keys=True) + "\n")

    def record(self, rel: str, rows: int | None = None) -> None:
        self._stage["outputs"][rel] = {"rows": rows}

    def count(self, **kw) -> None:
        self._stage["counts"].update({k: (int(v) if isinstance(v, (int, np.integer)) else v)
                                      for k, v in kw.items()})

    def write_csv(self, df: pd.DataFrame, rel: str) -> None:
        df.to_csv(self.path(rel), index=False, lineterminator="\n")
        self.record(rel, len(df))

    def write_json(self, obj, rel: str) -> None:
        self.path(rel).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
        self.record(rel)

    # -- helpers ------------------------------------------------------------------------
    def _map(self, fn, items):
        if self.cfg.threads > 1 and len(items) > 1:
            with ThreadPoolExecutor(self.cfg.threads) as pool:
                return list(pool.map(fn, items))
        return [fn(i) for i in items]

    def _years(self) -> tuple[int, int]:
        if self.cfg.years:
            return int(self.cfg.years[0]), int(self.cfg.years[1])
        counties = pd.read_csv(_require(self.out / "events/counties.csv", "run events first"))
        if counties.empty:
            raise InvariantError("no county has records")
        return int(counties["first_year"].min()), int(counties["last_year"].max())

    def _labels(self) -> dict[str, int]:
        res = label_from_nri(read_nri(_require(self.inputs["nri"])))
        return res.labels

    def _dataset(self, normalized: FeatureMatrix, labels: dict[str, int]) -> LabeledDataset:
        keep = [i for i, f in enumerate(normalized.fips) if f in labels]
        if len(keep) < len(normalized.fips):
            log.warning("%d counties lack an NRI label and are left out of training",
                        len(normalized.fips) - len(keep))
        ids = [normalized.fips[i] for i in keep]
        return LabeledDataset(normalized.values[keep], [labels[f] for f in ids], ids,
                              normalized.names)

    def _fit(self, ds: LabeledDataset, seed: int):
        """Split, balance, (optionally) search, train; returns model, metrics and split."""
        m = self.cfg.model
        if min(ds.class_counts()) < 3:
            raise InvariantError(f"need at least 3 counties per class, got {ds.class_counts()}")
        train, test = split_train_test(ds, m.test_fraction, seed)
        params = self.cfg.hyperparams
        search = None
        if m.search:
            s = dict(m.search)
            search = random_search_cv(train, space_from_config(s.get("space", {})),
                                      n_trials=int(s.get("n_trials", 20)),
                                      folds=int(s.get("folds", 10)), seed=seed,
                                      smote_k=m.smote_k, n_jobs=self.cfg.threads)
            params = search.best
        balanced = smote(train, k=m.smote_k, seed=seed)
        model = train_gbdt(balanced.X, balanced.y, params, seed=seed, feature_names=ds.feature_names)
        metrics = {"test": evaluate(test.y, model.predict_proba(test.X)).to_dict(),
                   "train": evaluate(train.y, model.predict_proba(train.X)).to_dict(),
                   "n_train": len(train), "n_test": len(test), "n_balanced": len(balanced),
                   "hyperparams": params.to_dict()}
        split = pd.DataFrame({"fips": train.ids + test.ids,
                              "set": ["train"] * len(train) + ["test"] * len(test),
                              "label": np.concatenate([train.y, test.y])})
        return model, metrics, split.sort_values("fips", kind="stable"), search

    def _weights(self, model: TreeEnsemble, normalized: FeatureMatrix):
        ic = self.cfg.index
        table = global_importance(model, normalized.values, normalized.names,
                                  signing=ic.importance_signing)
        try:
            weights = weights_from_shap(table, ic.weight_mode)
        except ValueError as exc:
            raise InvariantError(f"cannot derive weights: {exc}") from None
        return table, weights

    def _normalized(self, matrix: FeatureMatrix):
        norm = minmax_normalize(matrix)
        if norm.constant_columns:
            log.warning("constant feature column(s) in %s: %s", matrix.period,
                        ", ".join(norm.constant_columns))
        return norm

    # -- stages -------------------------------------------------------------------------
    def synth(self) -> None:
        from .synth import ScenarioSpec, stream_scenario
        opts = dict(self.cfg.synth)
        truth = bool(opts.pop("truth", True))
        opts["seed"] = self.cfg.seed
        spec = ScenarioSpec.from_dict(opts)
        with self.stage("synth"):
            paths, n_records = stream_scenario(spec, self.out / "synth", truth=truth)
            for p in paths.values():
                self.record(str(Path(p).relative_to(self.out)))
            self.count(counties=spec.n_counties, records=n_records)

    def ingest(self) -> None:
        records = _require(self.inputs["records"])
        _require(self.inputs["customers"])
        read_customer_base(self.inputs["customers"])  # schema check up front
        # enough partitions that one holds roughly PARTITION_BYTES of CSV at most
        n_parts = self.cfg.partitions or max(default_partitions(self.cfg.threads),
                                             -(-records.stat().st_size // PARTITION_BYTES))
        with self.stage("ingest"):
            summary = partition_records(records, self.path("ingest"), n_partitions=n_parts,
                                        chunksize=self.cfg.chunksize)
            for name in summary.partitions:
                self.record(f"ingest/{name}")
            self.record("ingest/rejects.csv", summary.n_rejected)
            self.count(rows=summary.n_rows, accepted=summary.n_accepted,
                       rejected=summary.n_rejected, snapped=summary.n_snapped)
            self.write_json({"n_rows": summary.n_rows, "n_accepted": summary.n_accepted,
                             "n_rejected": summary.n_rejected, "n_snapped": summary.n_snapped,
                             "partitions": summary.partitions}, "ingest/summary.json")

    def events(self) -> None:
        summary = json.loads(_require(self.out / "ingest/summary.json", "run ingest first")
                             .read_text())
        base = read_customer_base(_require(self.inputs["customers"]))
        thr = self.cfg.thresholds

        def one(name):
            streams, n_dup = read_partition(_require(self.out / "ingest" / name))
            res = []
            for fips in sorted(streams):
                s = streams[fips]
                years = np.unique(year_of(s.timestamps)).tolist()
                try:
                    den = denominators_for(base, fips, years)
                except MissingDenominatorError:
                    res.append((fips, None, None, None, None))
                    continue
                ev = extract_events(s, den, thr.event_rate, thr.gap_tolerance)
                months, sums = monthly_sums(s)
                info = (len(s), years[0], years[-1])
                res.append((fips, ev, (months, sums), den, info))
            return res, n_dup

        with self.stage("events"):
            results = self._map(one, summary["partitions"])
            rows = sorted((r for part, _ in results for r in part), key=lambda r: r[0])
            missing = [r[0] for r in rows if r[1] is None]
            rows = [r for r in rows if r[1] is not None]
            if missing:
                log.warning("%d counties without a customer base were skipped", len(missing))
            write_events([r[1] for r in rows], self.path("events/events.csv"))
            n_events = sum(len(r[1]) for r in rows)
            self.record("events/events.csv", n_events)
            monthly = pd.DataFrame({
                "fips": np.concatenate([[r[0]] * len(r[2][0]) for r in rows] or [[]]),
                "month": list(chain.from_iterable(_month_label(r[2][0]) for r in rows)),
                "customers_out": np.concatenate([r[2][1] for r in rows] or [[]]).astype(np.int64),
            })
            self.write_csv(monthly, "events/monthly.csv")
            self.write_csv(pd.DataFrame(
                [(r[0], y, t) for r in rows for y, t in r[3].items()],
                columns=["fips", "year", "customers_total"]), "events/denominators.csv")
            self.write_csv(pd.DataFrame(
                [(r[0], *r[4]) for r in rows],
                columns=["fips", "n_records", "first_year", "last_year"]), "events/counties.csv")
            self.write_csv(pd.DataFrame({"fips": missing}), "events/missing_denominators.csv")
            self.count(counties=len(rows), events=n_events, missing_denominators=len(missing),
                       duplicates=sum(n for _, n in results))

    def features(self) -> None:
        events_path = _require(self.out / "events/events.csv", "run events first")
        monthly_path = _require(self.out / "events/monthly.csv", "run events first")
        counties = pd.read_csv(_require(self.out / "events/counties.csv", "run events first"),
                               dtype={"fips": str})
        first, last = self._years()
        thr = self.cfg.thresholds
        with self.stage("features"):
            series = read_events(events_path)
            monthly = pd.read_csv(monthly_path, dtype={"fips": str, "month": str})
            by_county = {f: (_month_index(g["month"]), g["customers_out"].to_numpy(np.int64))
                         for f, g in monthly.groupby("fips", sort=True)}
            empty = (np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64))
            from .events import EventSeries

            def matrix(period: Period) -> FeatureMatrix:
                vecs = {}
                for f in counties["fips"]:
                    ev = series.get(f) or EventSeries.empty(f)
                    vecs[f] = compute_features(ev, None, period, monthly=by_county.get(f, empty),
                                               cum_mode=self.cfg.cum_mode,
                                               large_rate=thr.large_event_rate,
                                               long_hours=thr.long_event_hours)
                return FeatureMatrix.from_vectors(vecs, period.label)

            decade = matrix(Period.years(first, last))
            write_feature_frames([decade], self.path("features/features.csv"))
            self.record("features/features.csv", len(decade))
            annual = [matrix(Period.year(y)) for y in range(first, last + 1)]
            write_feature_frames(annual, self.path("features/annual.csv"))
            self.record("features/annual.csv", sum(len(m) for m in annual))
            self.count(counties=len(decade), years=last - first + 1)

    def _decade(self) -> FeatureMatrix:
        frames = read_feature_frames(_require(self.out / "features/features.csv",
                                              "run features first"))
        if len(frames) != 1:
            raise InvariantError("features.csv must hold exactly one period")
        return next(iter(frames.values()))

    def train(self) -> None:
        decade = self._decade()
        labels = self._labels()
        with self.stage("train"):
            norm = self._normalized(decade)
            ds = self._dataset(norm.matrix, labels)
            try:
                v = vif(np.delete(ds.X, np.flatnonzero(norm.constant), axis=1))
                vifs = np.full(len(FEATURE_NAMES), np.inf)
                vifs[~norm.constant] = v
            except ValueError as exc:
                log.warning("VIF skipped: %s", exc)
                vifs = np.full(len(FEATURE_NAMES), np.nan)
            high = [n for n, x in zip(FEATURE_NAMES, vifs) if x > self.cfg.model.vif_warn]
            if high:
                log.warning("VIF above %g: %s", self.cfg.model.vif_warn, ", ".join(high))
            self.write_csv(pd.DataFrame({"feature": FEATURE_NAMES, "vif": vifs}), "model/vif.csv")
            model, metrics, split, search = self._fit(ds, self.cfg.seed)
            model.save(self.path("model/model.json"))
            self.record("model/model.json")
            self.write_json(metrics, "model/metrics.json")
            self.write_csv(split, "model/split.csv")
            if search is not None:
                self.write_csv(search.table, "model/search.csv")
            self.write_json({"mins": norm.mins.tolist(), "maxs": norm.maxs.tolist(),
                             "constant": norm.constant.tolist(), "names": list(FEATURE_NAMES)},
                            "model/normalization.json")
            self.count(labeled=len(ds), class_0=ds.class_counts()[0], class_1=ds.class_counts()[1],
                       trees=len(model.trees))

    def explain(self) -> None:
        model = TreeEnsemble.load(_require(self.out / "model/model.json", "run train first"))
        decade = self._decade()
        with self.stage("explain"):
            norm = self._normalized(decade)
            try:
                table, weights = self._weights(model, norm.matrix)
            except ModelIntegrityError as exc:
                raise InvariantError(str(exc)) from None
            write_importance(table, weights, self.path("explain/importance.csv"))
            self.record("explain/importance.csv", len(table.names))
            self.write_json(weights.to_dict(), "explain/weights.json")
            self.write_json({"totals": table.dimension_totals(), "shares_pct": table.dimension_shares()},
                            "explain/dimensions.json")
            self.count(rows=len(decade))

    def index(self) -> None:
        weights = WeightVector.from_dict(json.loads(
            _require(self.out / "explain/weights.json", "run explain first").read_text()))
        decade = self._decade()
        ic = self.cfg.index
        with self.stage("index"):
            norm = self._normalized(decade)
            res = build_index(norm.matrix, weights, k=ic.k, seed=self.cfg.seed,
                              n_init=ic.n_init, rescale=ic.rescale)
            write_index(res.rows, self.path("index/index.csv"))
            self.record("index/index.csv", len(res.rows))
            self.write_csv(state_means(res.rows), "index/state_means.csv")
            counts = index_frame(res.rows)["rating"].value_counts()
            self.write_json({"silhouette": res.silhouette, "centroids": res.centroids.tolist(),
                             "rating_counts": {k: int(counts.get(k, 0)) for k in
                                               ("minor", "moderate", "major", "severe", "extreme")}},
                            "index/summary.json")
            self.count(counties=len(res.rows))

    def annual(self) -> None:
        frames = read_feature_frames(_require(self.out / "features/annual.csv",
                                              "run features first"))
        ic = self.cfg.index
        fixed = None
        labels = None
        if ic.annual_reuse_weights:
            fixed = WeightVector.from_dict(json.loads(
                _require(self.out / "explain/weights.json", "run explain first").read_text()))
        else:
            labels = self._labels()
        with self.stage("annual"):
            rows, weight_rows, metric_rows = [], [], []
            for label in sorted(frames):
                norm = self._normalized(frames[label])
                seed = self.cfg.seed + int(label)
                if fixed is None:
                    model, metrics, _, _ = self._fit(self._dataset(norm.matrix, labels), seed)
                    _, weights = self._weights(model, norm.matrix)
                    metric_rows.append({"period": label, **{k: metrics["test"][k] for k in
                                                            ("f1", "accuracy", "auc_roc")}})
                else:
                    weights = fixed
                weight_rows.append({"period": label, **dict(zip(weights.names, weights.weights))})
                res = build_index(norm.matrix, weights, k=ic.k, seed=self.cfg.seed,
                                  n_init=ic.n_init, rescale=ic.rescale)
                rows.extend(res.rows)
            write_index(rows, self.path("annual/index_annual.csv"))
            self.record("annual/index_annual.csv", len(rows))
            self.write_csv(pd.DataFrame(weight_rows), "annual/weights_annual.csv")
            if metric_rows:
                self.write_csv(pd.DataFrame(metric_rows), "annual/metrics_annual.csv")
            table = {}
            for r in rows:
                table.setdefault(r.fips, {})[r.period] = r.rating
            flags = hotspots(table)
            write_hotspots(flags, self.path("annual/hotspots.csv"))
            self.record("annual/hotspots.csv", len(flags))
            self.count(years=len(frames), hotspots=sum(1 for h in flags if h.tier))

    def analyze(self) -> None:
        idx = pd.read_csv(_require(self.out / "index/index.csv", "run index first"),
                          dtype={"fips": str}, float_precision="round_trip")
        values = dict(zip(idx["fips"], idx["value"].astype(float)))
        explicit = self.cfg.inputs

        def optional(path, configured: bool):
            # configured paths must exist; scenario defaults are skipped when absent
            if Path(path).exists():
                return Path(path)
            if configured:
                raise MissingInputError(path)
            log.warning("optional input %s not found; skipped", path)
            return None

        assignments = []
        for scheme, p in sorted(self.inputs["groups"].items()):
            if optional(p, bool(explicit.groups)):
                assignments.append(GroupAssignment.read_csv(p, scheme))
        energy = optional(self.inputs["energy"], bool(explicit.energy))
        uf = optional(self.inputs["urban_form"], bool(explicit.urban_form))
        with self.stage("analyze"):
            feats = self._decade().to_frame().set_index("fips")[list(FEATURE_NAMES)]
            urban = None
            if uf is not None:
                urban = pd.read_csv(uf, dtype={"fips": str}).set_index("fips")
            report = run_analysis(values, assignments,
                                  read_energy_mix(energy) if energy is not None else None,
                                  feats, urban)
            write_report(report, self.path("analysis/report.json"))
            self.record("analysis/report.json")
            for g in report["groups"]:
                self.write_csv(pd.DataFrame(g["summary"]),
                               f"analysis/group_summary_{g['scheme']}.csv")
            self.count(counties=len(values), schemes=len(assignments))

    def run(self, command: str) -> None:
        if command == "all":
            for s in STAGES:
                getattr(self, s)()
        else:
            getattr(self, command)()


__all__ = ["COMMANDS", "STAGES", "InvariantError", "MissingInputError", "Run", "SchemaError"]
