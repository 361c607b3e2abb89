"""Pipeline configuration stored as JSON."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

from .model.gbdt import Hyperparams

INPUT_FILES = {
    "records": "records.csv",
    "customers": "customers.csv",
    "nri": "nri.csv",
    "energy": "energy.csv",
    "urban_form": "urban_form.csv",
}
GROUP_FILES = {"urban_rural": "groups_urban_rural.csv", "rto": "groups_rto.csv",
               "state": "groups_state.csv"}


class ConfigError(ValueError):
    pass


@dataclass
class Inputs:
    """Input paths; any left empty default to the synthetic scenario under ``<out>/synth``."""

    records: str = ""
    customers: str = ""
    nri: str = ""
    energy: str = ""
    urban_form: str = ""
    groups: dict = field(default_factory=dict)  # scheme -> path

    def resolve(self, out_dir: Path) -> dict[str, Any]:
        synth = out_dir / "synth"
        paths = {k: Path(getattr(self, k)) if getattr(self, k) else synth / f
                 for k, f in INPUT_FILES.items()}
        groups = {k: synth / f for k, f in GROUP_FILES.items()} if not self.groups else {}
        groups.update({k: Path(v) for k, v in self.groups.items()})
        paths["groups"] = groups
        return paths


@dataclass
class Thresholds:
    event_rate: float = 0.001
    large_event_rate: float = 0.05
    long_event_hours: float = 12.0
    gap_tolerance: int = 1


@dataclass
class ModelConfig:
    hyperparams: dict = field(default_factory=lambda: Hyperparams().to_dict())
    search: dict | None = None  # {"n_trials": .., "folds": .., "space": {...}}
    test_fraction: float = 0.2
    smote_k: int = 5
    vif_warn: float = 10.0


@dataclass
class IndexConfig:
    weight_mode: str = "signed"
    importance_signing: str = "directional"
    k: int = 5
    n_init: int = 20
    rescale: bool = False
    annual_reuse_weights: bool = False


@dataclass
class PipelineConfig:
    inputs: Inputs = field(default_factory=Inputs)
    thresholds: Thresholds = field(default_factory=Thresholds)
    cum_mode: str = "peak"
    model: ModelConfig = field(default_factory=ModelConfig)
    index: IndexConfig = field(default_factory=IndexConfig)
    years: list | None = None  # [first, last]; inferred from records when absent
    synth: dict = field(default_factory=dict)  # scenario fields for the synth stage
    seed: int = 0
    out: str = "out"
    threads: int = 1
    partitions: int | None = None
    chunksize: int = 250_000

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        t = self.thresholds
        if not (t.event_rate > 0 and t.large_event_rate > 0 and t.long_event_hours > 0):
            raise ConfigError("thresholds must be positive")
        if t.gap_tolerance < 0:
            raise ConfigError("gap_tolerance must be >= 0")
        if self.cum_mode not in ("peak", "sample"):
            raise ConfigError("cum_mode must be 'peak' or 'sample'")
        if self.index.weight_mode not in ("signed", "absolute", "minmax"):
            raise ConfigError("weight_mode must be signed, absolute or minmax")
        if self.index.importance_signing not in ("directional", "mean"):
            raise ConfigError("importance_signing must be directional or mean")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if self.years is not None and (len(self.years) != 2 or self.years[0] > self.years[1]):
            raise ConfigError("years must be [first, last]")
        try:
            Hyperparams.from_dict(self.model.hyperparams)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad hyperparameters: {exc}") from None

    @property
    def hyperparams(self) -> Hyperparams:
        return Hyperparams.from_dict(self.model.hyperparams)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        nested = {"inputs": Inputs, "thresholds": Thresholds, "model": ModelConfig,
                  "index": IndexConfig}
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config key(s): {sorted(unknown)}")
        kw = {}
        for k, v in d.items():
            if k in nested:
                sub = nested[k]
                bad = set(v) - {f.name for f in fields(sub)}
                if bad:
                    raise ConfigError(f"unknown key(s) in {k}: {sorted(bad)}")
                kw[k] = sub(**v)
            else:
                kw[k] = v
        return cls(**kw)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "PipelineConfig":
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        return cls.from_json(Path(path).read_text())

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    def digest(self) -> str:
        """SHA-256 of the canonical config, ignoring output location and thread count."""
        d = self.to_dict()
        d.pop("out")
        d.pop("threads")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()
