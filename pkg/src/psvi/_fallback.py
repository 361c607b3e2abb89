"""Pure-Python/numpy versions of the compiled kernels.

Each function has the same signature and return layout as its counterpart in
``_kernels.pyx``. The split search reproduces the compiled accumulation order
(sequential cumulative sums over a stable sort) so both paths grow the same
trees bit for bit.
"""

from __future__ import annotations

import numpy as np


def scan_events(ts, out, den, threshold, max_step, state=None):
    if state is None:
        in_run, start, last, run_den, peak, sum_rate, sum_out, cnt = (
            False, 0, 0, 1, 0, 0.0, 0, 0)
    else:
        in_run, start, last, run_den, peak, sum_rate, sum_out, cnt = state
    cols = ([], [], [], [], [], [], [])

    def close():
        for col, v in zip(cols, (start, last, peak, sum_rate, sum_out, cnt, run_den)):
            col.append(v)

    for t, o, d in zip(ts.tolist(), out.tolist(), den.tolist()):
        if in_run:
            if t - last > max_step:
                close()
                in_run = False
            else:
                rate = float(o) / float(run_den)
                if rate > threshold:
                    last = t
                    peak = max(peak, o)
                    sum_rate += rate
                    sum_out += o
                    cnt += 1
                    continue
                # closes the run; the sample may still open one under its own year
                close()
                in_run = False
        rate = float(o) / float(d)
        if rate > threshold:
            in_run = True
            start, last, run_den, peak = t, t, d, o
            sum_rate, sum_out, cnt = rate, o, 1

    dtypes = (np.int64, np.int64, np.int64, np.float64, np.int64, np.int64, np.int64)
    events = tuple(np.asarray(c, dtype=dt) for c, dt in zip(cols, dtypes))
    return events, (bool(in_run), start, last, run_den, peak, sum_rate, sum_out, cnt)


def build_tree(X, order, g, h, active, max_depth, min_child_weight, reg_lambda,
               gamma, learning_rate):
    n, m = X.shape
    active = np.asarray(active, dtype=bool)
    rows0 = np.flatnonzero(active)
    if rows0.size == 0:
        raise ValueError("no active rows")
    nodes = {k: [] for k in ("feature", "threshold", "left", "right", "value",
                             "cover", "grad", "hess", "gain")}

    def new_node(G, H, C):
        for k, v in (("feature", -1), ("threshold", 0.0), ("left", -1), ("right", -1),
                     ("value", 0.0), ("cover", C), ("grad", G), ("hess", H), ("gain", 0.0)):
            nodes[k].append(v)
        return len(nodes["feature"]) - 1

    root = new_node(float(np.cumsum(g[rows0])[-1]), float(np.cumsum(h[rows0])[-1]),
                    float(rows0.size))
    level = [(root, rows0)]
    depth = 0
    while level and depth < max_depth:
        nxt = []
        for nd, rows in level:
            G, H = nodes["grad"][nd], nodes["hess"][nd]
            best = (0.0, -1, 0.0, 0.0, 0.0, 0.0)
            for f in range(m):
                xs = X[rows, f]
                srt = np.argsort(xs, kind="stable")
                xs = xs[srt]
                gl = np.cumsum(g[rows][srt])
                hl = np.cumsum(h[rows][srt])
                # candidate k splits after position k (left = first k+1 rows)
                cand = np.flatnonzero(xs[1:] != xs[:-1])
                if cand.size == 0:
                    continue
                GL, HL = gl[cand], hl[cand]
                GR, HR = G - GL, H - HL
                ok = (HL >= min_child_weight) & (HR >= min_child_weight)
                if not ok.any():
                    continue
                gain = 0.5 * (GL * GL / (HL + reg_lambda) + GR * GR / (HR + reg_lambda)
                              - G * G / (H + reg_lambda)) - gamma
                gain = np.where(ok, gain, -np.inf)
                j = int(np.argmax(gain))
                if gain[j] > best[0]:
                    k = cand[j]
                    lo, hi = xs[k], xs[k + 1]
                    mid = 0.5 * (lo + hi)
                    if mid <= lo:
                        mid = hi
                    best = (float(gain[j]), f, float(mid), float(GL[j]), float(HL[j]),
                            float(k + 1))
            gbest, f, thr, gl_, hl_, cl_ = best
            if f < 0:
                continue
            nodes["feature"][nd] = f
            nodes["threshold"][nd] = thr
            nodes["gain"][nd] = gbest
            go_left = X[rows, f] < thr
            li = new_node(gl_, hl_, cl_)
            ri = new_node(G - gl_, H - hl_, nodes["cover"][nd] - cl_)
            nodes["left"][nd] = li
            nodes["right"][nd] = ri
            nxt.append((li, rows[go_left]))
            nxt.append((ri, rows[~go_left]))
        level = nxt
        depth += 1

    out = {
        "feature": np.asarray(nodes["feature"], dtype=np.int64),
        "threshold": np.asarray(nodes["threshold"], dtype=np.float64),
        "left": np.asarray(nodes["left"], dtype=np.int64),
        "right": np.asarray(nodes["right"], dtype=np.int64),
        "cover": np.asarray(nodes["cover"], dtype=np.float64),
        "grad": np.asarray(nodes["grad"], dtype=np.float64),
        "hess": np.asarray(nodes["hess"], dtype=np.float64),
        "gain": np.asarray(nodes["gain"], dtype=np.float64),
    }
    leaf = out["feature"] < 0
    value = np.zeros(leaf.size)
    value[leaf] = -out["grad"][leaf] / (out["hess"][leaf] + reg_lambda) * learning_rate
    out["value"] = value
    return out


def predict_margin(X, roots, feature, threshold, left, right, value, base_score):
    n = X.shape[0]
    out = np.full(n, base_score, dtype=np.float64)
    idx = np.arange(n)
    for root in roots:
        nd = np.full(n, root, dtype=np.int64)
        internal = feature[nd] >= 0
        while internal.any():
            cur = nd[internal]
            go_left = X[idx[internal], feature[cur]] < threshold[cur]
            nd[internal] = np.where(go_left, left[cur], right[cur])
            internal = feature[nd] >= 0
        out += value[nd]
    return out


def _extend(path, zero, one, feat):
    depth = len(path)
    path.append([feat, zero, one, 1.0 if depth == 0 else 0.0])
    for i in range(depth - 1, -1, -1):
        path[i + 1][3] += one * path[i][3] * (i + 1) / (depth + 1)
        path[i][3] = zero * path[i][3] * (depth - i) / (depth + 1)


def _unwind(path, idx):
    depth = len(path) - 1
    one, zero = path[idx][2], path[idx][1]
    nxt = path[depth][3]
    for i in range(depth - 1, -1, -1):
        if one != 0:
            tmp = path[i][3]
            path[i][3] = nxt * (depth + 1) / ((i + 1) * one)
            nxt = tmp - path[i][3] * zero * (depth - i) / (depth + 1)
        else:
            path[i][3] = path[i][3] * (depth + 1) / (zero * (depth - i))
    for i in range(idx, depth):
        path[i][0], path[i][1], path[i][2] = path[i + 1][0], path[i + 1][1], path[i + 1][2]
    path.pop()


def _unwound_sum(path, idx):
    depth = len(path) - 1
    one, zero = path[idx][2], path[idx][1]
    nxt = path[depth][3]
    total = 0.0
    for i in range(depth - 1, -1, -1):
        if one != 0:
            tmp = nxt * (depth + 1) / ((i + 1) * one)
            total += tmp
            nxt = path[i][3] - tmp * zero * ((depth - i) / (depth + 1))
        else:
            total += (path[i][3] / zero) / ((depth - i) / (depth + 1))
    return total


def _recurse(x, tree, phi, node, parent, zero, one, pfeat):
    feature, threshold, left, right, value, cover = tree
    path = [list(el) for el in parent]
    _extend(path, zero, one, pfeat)
    f = feature[node]
    if f < 0:
        for i in range(1, len(path)):
            w = _unwound_sum(path, i)
            phi[path[i][0]] += w * (path[i][2] - path[i][1]) * value[node]
        return
    if x[f] < threshold[node]:
        hot, cold = left[node], right[node]
    else:
        hot, cold = right[node], left[node]
    inc_zero = inc_one = 1.0
    for idx in range(len(path)):
        if path[idx][0] == f:
            inc_zero, inc_one = path[idx][1], path[idx][2]
            _unwind(path, idx)
            break
    _recurse(x, tree, phi, hot, path, cover[hot] / cover[node] * inc_zero, inc_one, f)
    _recurse(x, tree, phi, cold, path, cover[cold] / cover[node] * inc_zero, 0.0, f)


def tree_shap(X, roots, depths, feature, threshold, left, right, value, cover):
    n, m = X.shape
    phi = np.zeros((n, m))
    tree = (feature.tolist(), threshold.tolist(), left.tolist(), right.tolist(),
            value.tolist(), cover.tolist())
    for i in range(n):
        x = X[i].tolist()
        row = [0.0] * m
        for root in roots.tolist():
            if tree[0][root] < 0:
                continue
            _recurse(x, tree, row, root, [], 1.0, 1.0, -1)
        phi[i] = row
    return phi
