"""Time the compiled kernels against the pure-Python fallback.

Usage::

    python benchmarks/bench_kernels.py [--repeat 3] [--scale 1.0] [--json out.json]

Both backends get identical inputs; outputs are compared before timing so a
speedup is never reported for a kernel that disagrees.
"""

from __future__ import annotations

import argparse
import json
import statistics
import sys
import time

import numpy as np

from psvi import _fallback
from psvi.model import Hyperparams, train_gbdt

try:
    from psvi import _kernels as compiled
except ImportError:
    sys.exit("compiled extension not built; run `python setup.py build_ext --inplace` first")


def _time(fn, repeat: int) -> float:
    runs = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        runs.append(time.perf_counter() - t0)
    return statistics.median(runs)


def _same(a, b) -> bool:
    if isinstance(a, dict):
        return a.keys() == b.keys() and all(_same(a[k], b[k]) for k in a)
    if isinstance(a, (tuple, list)):
        return len(a) == len(b) and all(_same(x, y) for x, y in zip(a, b))
    if a is None or b is None:
        return a is b
    return np.array_equal(np.asarray(a), np.asarray(b))


def cases(scale: float, rng: np.random.Generator):
    # one long stream with ~30% outage samples and occasional reporting gaps
    n = int(1_000_000 * scale)
    ts = 1577836800 + np.cumsum(rng.choice([1, 1, 1, 1, 1, 2, 3], n)).astype(np.int64) * 900
    out = np.where(rng.random(n) < 0.7, rng.integers(0, 2, n), rng.integers(0, 400, n))
    den = np.full(n, 5000, dtype=np.int64)
    yield ("scan_events", f"{n} samples",
           lambda impl: impl.scan_events(ts, out.astype(np.int64), den, 0.001, 1800, None))

    rows = int(3000 * scale)
    X = np.ascontiguousarray(rng.random((rows, 14)))
    y = (X[:, 0] + X[:, 3] - X[:, 7] + rng.normal(0, 0.3, rows) > 0.5).astype(float)
    order = np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T.astype(np.intp))
    p = np.full(rows, y.mean())
    g, h = p - y, p * (1 - p)
    active = (rng.random(rows) < 0.7128).astype(np.uint8)
    yield ("build_tree", f"{rows}x14, depth 9",
           lambda impl: impl.build_tree(X, order, g, h, active, 9, 2.0, 1.0, 0.1507, 0.0646))

    model = train_gbdt(X, y.astype(int), Hyperparams(), seed=0)
    pk = model.packed
    Xq = np.ascontiguousarray(rng.random((int(20_000 * scale), 14)))
    yield ("predict_margin", f"{len(Xq)} rows, {len(model.trees)} trees",
           lambda impl: impl.predict_margin(Xq, pk["roots"], pk["feature"], pk["threshold"],
                                            pk["left"], pk["right"], pk["value"],
                                            float(model.base_score)))

    Xs = np.ascontiguousarray(X[: max(1, int(100 * scale))])
    yield ("tree_shap", f"{len(Xs)} rows, {len(model.trees)} trees",
           lambda impl: impl.tree_shap(Xs, pk["roots"], pk["depths"], pk["feature"],
                                       pk["threshold"], pk["left"], pk["right"], pk["value"],
                                       pk["cover"]))


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--scale", type=float, default=1.0, help="multiplier on input sizes")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--json", help="also write results to this file")
    args = ap.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    results = []
    print(f"{'kernel':<16}{'input':<28}{'compiled s':>12}{'python s':>12}{'speedup':>10}")
    for name, desc, call in cases(args.scale, rng):
        if not _same(call(compiled), call(_fallback)):
            print(f"{name}: compiled and fallback outputs differ", file=sys.stderr)
            return 1
        tc = _time(lambda: call(compiled), args.repeat)
        tp = _time(lambda: call(_fallback), args.repeat)
        results.append({"kernel": name, "input": desc, "compiled_s": tc, "python_s": tp,
                        "speedup": tp / tc if tc > 0 else float("inf")})
        print(f"{name:<16}{desc:<28}{tc:>12.4f}{tp:>12.4f}{tp / tc:>9.1f}x")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(results, fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
