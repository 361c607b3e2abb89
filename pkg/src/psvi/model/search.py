"""Random hyperparameter search with stratified k-fold cross-validation."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Mapping

import numpy as np
import pandas as pd

from .data import LabeledDataset, smote, stratified_folds
from .gbdt import Hyperparams, train_gbdt
from .metrics import evaluate


@dataclass(frozen=True)
class Uniform:
    low: float
    high: float

    def sample(self, rng):
        return float(rng.uniform(self.low, self.high))


@dataclass(frozen=True)
class LogUniform:
    low: float
    high: float

    def sample(self, rng):
        return float(math.exp(rng.uniform(math.log(self.low), math.log(self.high))))


@dataclass(frozen=True)
class IntRange:
    """Integers ``low..high`` inclusive."""

    low: int
    high: int

    def sample(self, rng):
        return int(rng.integers(self.low, self.high + 1))


@dataclass(frozen=True)
class Choice:
    values: tuple

    def sample(self, rng):
        return self.values[int(rng.integers(len(self.values)))]


DEFAULT_SEARCH_SPACE = {
    "gamma": Uniform(0.0, 1.0),
    "learning_rate": LogUniform(0.01, 0.3),
    "max_depth": IntRange(3, 10),
    "min_child_weight": IntRange(1, 10),
    "n_estimators": IntRange(50, 300),
    "reg_lambda": Uniform(0.5, 2.0),
    "subsample": Uniform(0.5, 1.0),
}

_KINDS = {"uniform": Uniform, "loguniform": LogUniform, "int": IntRange}


def space_from_config(spec: Mapping[str, Any]) -> dict:
    """Build a search space from JSON-style entries.

    Each value is a scalar (fixed), a list (choice) or
    ``{"kind": "uniform"|"loguniform"|"int", "low": ..., "high": ...}``.
    Parameters not mentioned keep their default ranges.
    """
    space = dict(DEFAULT_SEARCH_SPACE)
    for name, v in spec.items():
        if name not in DEFAULT_SEARCH_SPACE:
            raise ValueError(f"unknown hyperparameter {name!r}")
        if isinstance(v, Mapping):
            space[name] = _KINDS[v["kind"]](v["low"], v["high"])
        elif isinstance(v, (list, tuple)):
            space[name] = Choice(tuple(v))
        else:
            space[name] = Choice((v,))
    return space


def space_to_config(space: Mapping[str, Any]) -> dict:
    out = {}
    kinds = {v: k for k, v in _KINDS.items()}
    for name, dim in space.items():
        if isinstance(dim, Choice):
            out[name] = list(dim.values)
        else:
            out[name] = {"kind": kinds[type(dim)], "low": dim.low, "high": dim.high}
    return out


@dataclass
class SearchResult:
    best: Hyperparams
    table: pd.DataFrame  # one row per trial: params, mean_f1, std_f1, fold f1s


def cross_validate(dataset: LabeledDataset, params: Hyperparams, folds: int = 10, seed: int = 0,
                   smote_k: int = 5, n_jobs: int = 1) -> np.ndarray:
    """F1 per validation fold; SMOTE touches training folds only."""
    splits = stratified_folds(dataset.y, folds, seed)
    seeds = np.random.SeedSequence(seed).generate_state(folds)

    def run(i):
        tr, va = splits[i]
        train = smote(dataset.take(tr), k=smote_k, seed=int(seeds[i]))
        model = train_gbdt(train.X, train.y, params, seed=int(seeds[i]))
        return evaluate(dataset.y[va], model.predict_proba(dataset.X[va])).f1

    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as pool:
            return np.array(list(pool.map(run, range(folds))))
    return np.array([run(i) for i in range(folds)])


def random_search_cv(dataset: LabeledDataset, search_space: Mapping[str, Any] | None = None,
                     n_trials: int = 20, folds: int = 10, seed: int = 0, smote_k: int = 5,
                     n_jobs: int = 1) -> SearchResult:
    """Pick the hyperparameter draw with the highest mean cross-validated F1.

    Draws are independent uniform samples from ``search_space``; ties keep the
    earliest trial. The fold assignment is shared by all trials.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    space = dict(DEFAULT_SEARCH_SPACE if search_space is None else search_space)
    for name in DEFAULT_SEARCH_SPACE:
        space.setdefault(name, DEFAULT_SEARCH_SPACE[name])
    rng = np.random.default_rng(seed)
    rows = []
    best, best_f1 = None, -np.inf
    for trial in range(n_trials):
        draw = {name: space[name].sample(rng) for name in DEFAULT_SEARCH_SPACE}
        params = Hyperparams.from_dict(draw)
        f1s = cross_validate(dataset, params, folds, seed, smote_k, n_jobs)
        mean = float(f1s.mean())
        rows.append({"trial": trial, **params.to_dict(), "mean_f1": mean,
                     "std_f1": float(f1s.std()),
                     **{f"fold{i}_f1": float(v) for i, v in enumerate(f1s)}})
        if mean > best_f1:
            best, best_f1 = params, mean
    return SearchResult(best, pd.DataFrame(rows))
