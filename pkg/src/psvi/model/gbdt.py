"""Second-order gradient-boosted trees with logistic loss."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy.special import expit

from .. import kernels


@dataclass(frozen=True)
class Hyperparams:
    gamma: float = 0.1507
    learning_rate: float = 0.0646
    max_depth: int = 9
    min_child_weight: float = 2.0
    n_estimators: int = 139
    reg_lambda: float = 1.0
    subsample: float = 0.7128

    def __post_init__(self):
        if not 0 < self.learning_rate <= 1:
            raise ValueError("learning_rate must be in (0, 1]")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if not 0 < self.subsample <= 1:
            raise ValueError("subsample must be in (0, 1]")
        if self.n_estimators < 0:
            raise ValueError("n_estimators must be >= 0")
        if min(self.gamma, self.reg_lambda, self.min_child_weight) < 0:
            raise ValueError("gamma, reg_lambda and min_child_weight must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "Hyperparams":
        return cls(gamma=float(d["gamma"]), learning_rate=float(d["learning_rate"]),
                   max_depth=int(d["max_depth"]), min_child_weight=float(d["min_child_weight"]),
                   n_estimators=int(d["n_estimators"]), reg_lambda=float(d["reg_lambda"]),
                   subsample=float(d["subsample"]))


#: Tuned values published for the county model.
PUBLISHED_HYPERPARAMS = Hyperparams()

_NODE_FIELDS = ("feature", "threshold", "left", "right", "value", "cover", "grad", "hess", "gain")


@dataclass(eq=False)
class Tree:
    """Binary tree in flat breadth-first arrays; ``feature < 0`` marks a leaf.

    ``cover`` counts training rows through a node; ``grad``/``hess`` are the
    gradient and hessian sums and ``gain`` the split gain of internal nodes.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    cover: np.ndarray
    grad: np.ndarray = None
    hess: np.ndarray = None
    gain: np.ndarray = None

    def __post_init__(self):
        n = len(self.feature)
        for name in _NODE_FIELDS:
            arr = getattr(self, name)
            if arr is None:
                arr = np.zeros(n)
            dtype = np.int64 if name in ("feature", "left", "right") else np.float64
            setattr(self, name, np.ascontiguousarray(arr, dtype=dtype))

    def __eq__(self, other):
        return isinstance(other, Tree) and all(
            np.array_equal(getattr(self, k), getattr(other, k)) for k in _NODE_FIELDS)

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    @property
    def is_leaf(self) -> np.ndarray:
        return self.feature < 0

    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for nd in range(self.n_nodes):
            if self.feature[nd] >= 0:
                depth[self.left[nd]] = depth[self.right[nd]] = depth[nd] + 1
        return int(depth.max()) if self.n_nodes else 0

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by each row of ``X``."""
        X = np.atleast_2d(X)
        nd = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        internal = self.feature[nd] >= 0
        while internal.any():
            cur = nd[internal]
            go_left = X[rows[internal], self.feature[cur]] < self.threshold[cur]
            nd[internal] = np.where(go_left, self.left[cur], self.right[cur])
            internal = self.feature[nd] >= 0
        return nd

    def to_dict(self, node: int = 0) -> dict:
        base = {"cover": float(self.cover[node]), "grad": float(self.grad[node]),
                "hess": float(self.hess[node])}
        if self.feature[node] < 0:
            return {"weight": float(self.value[node]), **base}
        return {"feature": int(self.feature[node]), "threshold": float(self.threshold[node]),
                **base, "gain": float(self.gain[node]),
                "left": self.to_dict(int(self.left[node])),
                "right": self.to_dict(int(self.right[node]))}

    @classmethod
    def from_dict(cls, root: dict) -> "Tree":
        cols = {k: [] for k in _NODE_FIELDS}
        queue = [root]
        # breadth-first ids, matching the builder's layout
        while queue:
            nxt = []
            for node in queue:
                leaf = "weight" in node
                cols["feature"].append(-1 if leaf else int(node["feature"]))
                cols["threshold"].append(0.0 if leaf else float(node["threshold"]))
                cols["value"].append(float(node["weight"]) if leaf else 0.0)
                cols["cover"].append(float(node["cover"]))
                cols["grad"].append(float(node.get("grad", 0.0)))
                cols["hess"].append(float(node.get("hess", 0.0)))
                cols["gain"].append(0.0 if leaf else float(node.get("gain", 0.0)))
                cols["left"].append(-1)
                cols["right"].append(-1)
                if not leaf:
                    nxt.extend([node["left"], node["right"]])
            queue = nxt
        child = 1
        for i, f in enumerate(cols["feature"]):
            if f >= 0:
                cols["left"][i], cols["right"][i] = child, child + 1
                child += 2
        return cls(**cols)

    @classmethod
    def stump(cls, feature: int, threshold: float, left_value: float, right_value: float,
              left_cover: float = 1.0, right_cover: float = 1.0) -> "Tree":
        return cls(feature=[feature, -1, -1], threshold=[threshold, 0, 0], left=[1, -1, -1],
                   right=[2, -1, -1], value=[0.0, left_value, right_value],
                   cover=[left_cover + right_cover, left_cover, right_cover])


@dataclass(eq=False)
class TreeEnsemble:
    base_score: float
    trees: list[Tree] = field(default_factory=list)
    feature_names: tuple[str, ...] = ()

    def __eq__(self, other):
        return (isinstance(other, TreeEnsemble) and self.base_score == other.base_score
                and tuple(self.feature_names) == tuple(other.feature_names)
                and len(self.trees) == len(other.trees)
                and all(a == b for a, b in zip(self.trees, other.trees)))

    @property
    def n_features(self) -> int:
        if self.feature_names:
            return len(self.feature_names)
        used = [int(t.feature.max()) for t in self.trees if t.n_nodes]
        return max(used, default=-1) + 1

    @cached_property
    def packed(self) -> dict:
        """Concatenated node arrays with absolute child indices, for the kernels."""
        offsets, acc = [], 0
        for t in self.trees:
            offsets.append(acc)
            acc += t.n_nodes
        if not self.trees:
            z = np.zeros(0, dtype=np.int64)
            return {"roots": z, "depths": z, "feature": z, "threshold": np.zeros(0),
                    "left": z, "right": z, "value": np.zeros(0), "cover": np.zeros(0)}

        def cat(name, shift=False):
            parts = []
            for off, t in zip(offsets, self.trees):
                a = getattr(t, name)
                parts.append(np.where(a >= 0, a + off, -1) if shift else a)
            return np.ascontiguousarray(np.concatenate(parts))

        return {
            "roots": np.asarray(offsets, dtype=np.int64),
            "depths": np.asarray([t.depth() for t in self.trees], dtype=np.int64),
            "feature": cat("feature"), "threshold": cat("threshold"),
            "left": cat("left", True), "right": cat("right", True),
            "value": cat("value"), "cover": cat("cover"),
        }

    def _check_X(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if self.feature_names and X.shape[1] != len(self.feature_names):
            raise ValueError(f"expected {len(self.feature_names)} features, got {X.shape[1]}")
        need = max((int(t.feature.max()) for t in self.trees if t.n_nodes), default=-1) + 1
        if X.shape[1] < need:
            raise ValueError(f"expected at least {need} features, got {X.shape[1]}")
        return np.ascontiguousarray(X)

    def predict_margin(self, X) -> np.ndarray:
        X = self._check_X(X)
        p = self.packed
        return kernels.predict_margin(X, p["roots"], p["feature"], p["threshold"], p["left"],
                                      p["right"], p["value"], float(self.base_score))

    def predict_proba(self, X) -> np.ndarray:
        return expit(self.predict_margin(X))

    def expected_margin(self) -> float:
        """Cover-weighted mean margin (the attribution base value)."""
        total = float(self.base_score)
        for t in self.trees:
            leaf = t.is_leaf
            total += float(np.sum(t.value[leaf] * t.cover[leaf]) / t.cover[0])
        return total

    def to_dict(self) -> dict:
        return {"base_score": float(self.base_score), "feature_names": list(self.feature_names),
                "trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_dict(cls, d: dict) -> "TreeEnsemble":
        return cls(float(d["base_score"]), [Tree.from_dict(t) for t in d["trees"]],
                   tuple(d.get("feature_names", ())))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "TreeEnsemble":
        return cls.from_dict(json.loads(text))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path) -> "TreeEnsemble":
        with open(path) as fh:
            return cls.from_json(fh.read())


def logistic_loss(y: np.ndarray, margin: np.ndarray) -> float:
    """Mean negative log-likelihood, computed stably from margins."""
    return float(np.mean(np.logaddexp(0.0, margin) - y * margin))


def train_gbdt(X, y, params: Hyperparams = PUBLISHED_HYPERPARAMS, seed: int = 0, *,
               feature_names: Sequence[str] = (), allow_single_class: bool = False,
               history: list | None = None) -> TreeEnsemble:
    """Fit a boosted tree classifier by Newton boosting on logistic loss.

    Each round fits one tree to gradients ``p - y`` and hessians ``p(1 - p)``
    with exact greedy splits, on a row subsample drawn without replacement.
    Leaf weights are ``-G / (H + reg_lambda)`` shrunk by the learning rate.
    The initial margin is the log-odds of the training prevalence.

    ``history``, if given, receives the training loss before the first round
    and after every round.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != y.size:
        raise ValueError("X must be 2-D with one row per label")
    if not np.isin(y, (0.0, 1.0)).all():
        raise ValueError("labels must be 0/1")
    if feature_names and len(feature_names) != X.shape[1]:
        raise ValueError("feature_names length does not match X")
    n = y.size
    prevalence = y.mean() if n else 0.5
    if prevalence in (0.0, 1.0):
        if not allow_single_class:
            raise ValueError("training data contains a single class")
        prevalence = min(max(prevalence, 1e-6), 1 - 1e-6)
    base = float(np.log(prevalence / (1 - prevalence)))

    order = np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T.astype(np.intp))
    rng = np.random.default_rng(seed)
    margin = np.full(n, base)
    trees = []
    if history is not None:
        history.append(logistic_loss(y, margin))
    n_sub = max(1, int(round(params.subsample * n)))
    for _ in range(params.n_estimators):
        p = expit(margin)
        g = p - y
        h = p * (1.0 - p)
        active = np.zeros(n, dtype=np.uint8)
        if n_sub < n:
            active[rng.choice(n, size=n_sub, replace=False)] = 1
        else:
            active[:] = 1
        nodes = kernels.build_tree(X, order, g, h, active, int(params.max_depth),
                                   float(params.min_child_weight), float(params.reg_lambda),
                                   float(params.gamma), float(params.learning_rate))
        tree = Tree(**nodes)
        trees.append(tree)
        margin += tree.value[tree.apply(X)]
        if history is not None:
            history.append(logistic_loss(y, margin))
    return TreeEnsemble(base, trees, tuple(feature_names))


def split_gain(gl: float, hl: float, gr: float, hr: float, reg_lambda: float, gamma: float) -> float:
    return 0.5 * (gl * gl / (hl + reg_lambda) + gr * gr / (hr + reg_lambda)
                  - (gl + gr) ** 2 / (hl + hr + reg_lambda)) - gamma
