# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops. ``psvi._fallback`` mirrors every function here."""

import numpy as np
cimport numpy as cnp
from libc.stdlib cimport malloc, free

cnp.import_array()

ctypedef cnp.int64_t i64


def scan_events(const i64[::1] ts, const i64[::1] out, const i64[::1] den,
                double threshold, i64 max_step, state=None):
    """Run-length scan of one time-ordered chunk.

    ``state`` is ``None`` or the 8-tuple returned by a previous call, so a
    stream may be fed in arbitrary contiguous chunks.
    """
    cdef Py_ssize_t n = ts.shape[0], i, k = 0
    cdef bint in_run = False
    cdef i64 start = 0, last = 0, run_den = 1, peak = 0, sum_out = 0, cnt = 0
    cdef double sum_rate = 0.0, rate
    if state is not None:
        in_run, start, last, run_den, peak, sum_rate, sum_out, cnt = state

    cap = n + 1
    cdef i64[::1] e_start = np.empty(cap, dtype=np.int64)
    cdef i64[::1] e_end = np.empty(cap, dtype=np.int64)
    cdef i64[::1] e_peak = np.empty(cap, dtype=np.int64)
    cdef double[::1] e_srate = np.empty(cap, dtype=np.float64)
    cdef i64[::1] e_sout = np.empty(cap, dtype=np.int64)
    cdef i64[::1] e_cnt = np.empty(cap, dtype=np.int64)
    cdef i64[::1] e_den = np.empty(cap, dtype=np.int64)

    with nogil:
        for i in range(n):
            if in_run:
                if ts[i] - last > max_step:
                    e_start[k] = start; e_end[k] = last; e_peak[k] = peak
                    e_srate[k] = sum_rate; e_sout[k] = sum_out; e_cnt[k] = cnt
                    e_den[k] = run_den
                    k += 1
                    in_run = False
                else:
                    rate = (<double>out[i]) / (<double>run_den)
                    if rate > threshold:
                        last = ts[i]
                        if out[i] > peak:
                            peak = out[i]
                        sum_rate += rate
                        sum_out += out[i]
                        cnt += 1
                        continue
                    # closes the run; the sample may still open one under its own year
                    e_start[k] = start; e_end[k] = last; e_peak[k] = peak
                    e_srate[k] = sum_rate; e_sout[k] = sum_out; e_cnt[k] = cnt
                    e_den[k] = run_den
                    k += 1
                    in_run = False
            rate = (<double>out[i]) / (<double>den[i])
            if rate > threshold:
                in_run = True
                start = ts[i]; last = ts[i]; run_den = den[i]; peak = out[i]
                sum_rate = rate; sum_out = out[i]; cnt = 1

    events = (
        np.asarray(e_start[:k]).copy(), np.asarray(e_end[:k]).copy(),
        np.asarray(e_peak[:k]).copy(), np.asarray(e_srate[:k]).copy(),
        np.asarray(e_sout[:k]).copy(), np.asarray(e_cnt[:k]).copy(),
        np.asarray(e_den[:k]).copy(),
    )
    return events, (bool(in_run), start, last, run_den, peak, sum_rate, sum_out, cnt)


def build_tree(const double[:, ::1] X, const cnp.intp_t[:, ::1] order,
               const double[::1] g, const double[::1] h, const cnp.uint8_t[::1] active,
               int max_depth, double min_child_weight, double reg_lambda,
               double gamma, double learning_rate):
    """Level-wise exact greedy tree on gradient/hessian statistics.

    ``order[f]`` is a stable argsort of column ``f`` over all rows; inactive
    rows (``active == 0``) are skipped. Returns a dict of node arrays in
    breadth-first order.
    """
    cdef Py_ssize_t n = X.shape[0], m = X.shape[1]
    cdef Py_ssize_t r, kk, f, nd, lvl_start, lvl_end, next_id, depth
    cdef Py_ssize_t n_active = 0
    for r in range(n):
        if active[r]:
            n_active += 1
    if n_active == 0:
        raise ValueError("no active rows")
    cdef Py_ssize_t cap = 2 * n_active - 1
    if max_depth < 30 and (1 << (max_depth + 1)) - 1 < cap:
        cap = (1 << (max_depth + 1)) - 1

    feature_a = np.full(cap, -1, dtype=np.int64)
    threshold_a = np.zeros(cap, dtype=np.float64)
    left_a = np.full(cap, -1, dtype=np.int64)
    right_a = np.full(cap, -1, dtype=np.int64)
    value_a = np.zeros(cap, dtype=np.float64)
    cover_a = np.zeros(cap, dtype=np.float64)
    grad_a = np.zeros(cap, dtype=np.float64)
    hess_a = np.zeros(cap, dtype=np.float64)
    gain_a = np.zeros(cap, dtype=np.float64)
    cdef i64[::1] feature = feature_a
    cdef double[::1] threshold = threshold_a
    cdef i64[::1] left = left_a
    cdef i64[::1] right = right_a
    cdef double[::1] value = value_a
    cdef double[::1] cover = cover_a
    cdef double[::1] G = grad_a
    cdef double[::1] H = hess_a
    cdef double[::1] gain_rec = gain_a

    cdef double[::1] GL = np.zeros(cap, dtype=np.float64)
    cdef double[::1] HL = np.zeros(cap, dtype=np.float64)
    cdef double[::1] CL = np.zeros(cap, dtype=np.float64)
    cdef double[::1] lastx = np.zeros(cap, dtype=np.float64)
    cdef double[::1] best_gain = np.zeros(cap, dtype=np.float64)
    cdef i64[::1] best_feat = np.full(cap, -1, dtype=np.int64)
    cdef double[::1] best_thr = np.zeros(cap, dtype=np.float64)
    cdef double[::1] best_GL = np.zeros(cap, dtype=np.float64)
    cdef double[::1] best_HL = np.zeros(cap, dtype=np.float64)
    cdef double[::1] best_CL = np.zeros(cap, dtype=np.float64)
    cdef i64[::1] row_node = np.full(n, -1, dtype=np.int64)

    cdef double gsum = 0.0, hsum = 0.0, x, gr, hr, gn, gain, mid
    with nogil:
        for r in range(n):
            if active[r]:
                row_node[r] = 0
                gsum += g[r]
                hsum += h[r]
        G[0] = gsum
        H[0] = hsum
        cover[0] = <double>n_active

        lvl_start = 0
        lvl_end = 1
        next_id = 1
        depth = 0
        while lvl_start < lvl_end and depth < max_depth:
            for nd in range(lvl_start, lvl_end):
                best_gain[nd] = 0.0
                best_feat[nd] = -1
            for f in range(m):
                for nd in range(lvl_start, lvl_end):
                    GL[nd] = 0.0
                    HL[nd] = 0.0
                    CL[nd] = 0.0
                for kk in range(n):
                    r = order[f, kk]
                    nd = row_node[r]
                    if nd < lvl_start:
                        continue
                    x = X[r, f]
                    if CL[nd] > 0 and x != lastx[nd]:
                        gr = G[nd] - GL[nd]
                        hr = H[nd] - HL[nd]
                        if HL[nd] >= min_child_weight and hr >= min_child_weight:
                            gn = G[nd]
                            gain = 0.5 * (GL[nd] * GL[nd] / (HL[nd] + reg_lambda)
                                          + gr * gr / (hr + reg_lambda)
                                          - gn * gn / (H[nd] + reg_lambda)) - gamma
                            if gain > best_gain[nd]:
                                mid = 0.5 * (lastx[nd] + x)
                                if mid <= lastx[nd]:
                                    mid = x
                                best_gain[nd] = gain
                                best_feat[nd] = f
                                best_thr[nd] = mid
                                best_GL[nd] = GL[nd]
                                best_HL[nd] = HL[nd]
                                best_CL[nd] = CL[nd]
                    GL[nd] += g[r]
                    HL[nd] += h[r]
                    CL[nd] += 1.0
                    lastx[nd] = x
            for nd in range(lvl_start, lvl_end):
                if best_feat[nd] >= 0:
                    feature[nd] = best_feat[nd]
                    threshold[nd] = best_thr[nd]
                    gain_rec[nd] = best_gain[nd]
                    left[nd] = next_id
                    right[nd] = next_id + 1
                    G[next_id] = best_GL[nd]
                    H[next_id] = best_HL[nd]
                    cover[next_id] = best_CL[nd]
                    G[next_id + 1] = G[nd] - best_GL[nd]
                    H[next_id + 1] = H[nd] - best_HL[nd]
                    cover[next_id + 1] = cover[nd] - best_CL[nd]
                    next_id += 2
            for r in range(n):
                nd = row_node[r]
                if nd >= lvl_start and best_feat[nd] >= 0:
                    if X[r, best_feat[nd]] < best_thr[nd]:
                        row_node[r] = left[nd]
                    else:
                        row_node[r] = right[nd]
            lvl_start = lvl_end
            lvl_end = next_id
            depth += 1

        for nd in range(next_id):
            if feature[nd] < 0:
                value[nd] = -G[nd] / (H[nd] + reg_lambda) * learning_rate

    k = next_id
    return {
        "feature": feature_a[:k].copy(), "threshold": threshold_a[:k].copy(),
        "left": left_a[:k].copy(), "right": right_a[:k].copy(),
        "value": value_a[:k].copy(), "cover": cover_a[:k].copy(),
        "grad": grad_a[:k].copy(), "hess": hess_a[:k].copy(), "gain": gain_a[:k].copy(),
    }


def predict_margin(const double[:, ::1] X, const i64[::1] roots, const i64[::1] feature,
                   const double[::1] threshold, const i64[::1] left, const i64[::1] right,
                   const double[::1] value, double base_score):
    cdef Py_ssize_t n = X.shape[0], t, i
    cdef Py_ssize_t n_trees = roots.shape[0]
    cdef i64 nd
    out_a = np.full(n, base_score, dtype=np.float64)
    cdef double[::1] out = out_a
    with nogil:
        for i in range(n):
            for t in range(n_trees):
                nd = roots[t]
                while feature[nd] >= 0:
                    if X[i, feature[nd]] < threshold[nd]:
                        nd = left[nd]
                    else:
                        nd = right[nd]
                out[i] += value[nd]
    return out_a


cdef struct PathEl:
    i64 feature
    double zero
    double one
    double pweight


cdef inline void _extend(PathEl* path, Py_ssize_t depth, double zero, double one,
                         i64 feature) noexcept nogil:
    cdef Py_ssize_t i
    path[depth].feature = feature
    path[depth].zero = zero
    path[depth].one = one
    path[depth].pweight = 1.0 if depth == 0 else 0.0
    for i in range(depth - 1, -1, -1):
        path[i + 1].pweight += one * path[i].pweight * (i + 1) / <double>(depth + 1)
        path[i].pweight = zero * path[i].pweight * (depth - i) / <double>(depth + 1)


cdef inline void _unwind(PathEl* path, Py_ssize_t depth, Py_ssize_t idx) noexcept nogil:
    cdef double one = path[idx].one, zero = path[idx].zero
    cdef double nxt = path[depth].pweight, tmp
    cdef Py_ssize_t i
    for i in range(depth - 1, -1, -1):
        if one != 0:
            tmp = path[i].pweight
            path[i].pweight = nxt * (depth + 1) / ((i + 1) * one)
            nxt = tmp - path[i].pweight * zero * (depth - i) / <double>(depth + 1)
        else:
            path[i].pweight = path[i].pweight * (depth + 1) / (zero * (depth - i))
    for i in range(idx, depth):
        path[i].feature = path[i + 1].feature
        path[i].zero = path[i + 1].zero
        path[i].one = path[i + 1].one


cdef inline double _unwound_sum(PathEl* path, Py_ssize_t depth, Py_ssize_t idx) noexcept nogil:
    cdef double one = path[idx].one, zero = path[idx].zero
    cdef double nxt = path[depth].pweight, total = 0.0, tmp
    cdef Py_ssize_t i
    for i in range(depth - 1, -1, -1):
        if one != 0:
            tmp = nxt * (depth + 1) / ((i + 1) * one)
            total += tmp
            nxt = path[i].pweight - tmp * zero * ((depth - i) / <double>(depth + 1))
        else:
            total += (path[i].pweight / zero) / ((depth - i) / <double>(depth + 1))
    return total


cdef void _recurse(const double[::1] x, const i64[::1] feature, const double[::1] threshold,
                   const i64[::1] left, const i64[::1] right, const double[::1] value,
                   const double[::1] cover, double* phi, i64 node, Py_ssize_t depth,
                   PathEl* parent, double zero, double one, i64 pfeat) noexcept nogil:
    cdef PathEl* path = parent + depth + 1
    cdef Py_ssize_t i, idx
    cdef double w, inc_zero = 1.0, inc_one = 1.0
    cdef i64 hot, cold, f
    for i in range(depth + 1):
        path[i] = parent[i]
    _extend(path, depth, zero, one, pfeat)
    f = feature[node]
    if f < 0:
        for i in range(1, depth + 1):
            w = _unwound_sum(path, depth, i)
            phi[path[i].feature] += w * (path[i].one - path[i].zero) * value[node]
        return
    if x[f] < threshold[node]:
        hot = left[node]
        cold = right[node]
    else:
        hot = right[node]
        cold = left[node]
    idx = 0
    while idx <= depth:
        if path[idx].feature == f:
            break
        idx += 1
    if idx != depth + 1:
        inc_zero = path[idx].zero
        inc_one = path[idx].one
        _unwind(path, depth, idx)
        depth -= 1
    _recurse(x, feature, threshold, left, right, value, cover, phi, hot, depth + 1, path,
             cover[hot] / cover[node] * inc_zero, inc_one, f)
    _recurse(x, feature, threshold, left, right, value, cover, phi, cold, depth + 1, path,
             cover[cold] / cover[node] * inc_zero, 0.0, f)


def tree_shap(const double[:, ::1] X, const i64[::1] roots, const i64[::1] depths,
              const i64[::1] feature, const double[::1] threshold, const i64[::1] left,
              const i64[::1] right, const double[::1] value, const double[::1] cover):
    """Path-dependent TreeSHAP attributions, one row of ``X`` at a time."""
    cdef Py_ssize_t n = X.shape[0], m = X.shape[1], i, t
    cdef Py_ssize_t n_trees = roots.shape[0], max_d = 0
    for t in range(n_trees):
        if depths[t] > max_d:
            max_d = depths[t]
    cdef Py_ssize_t buf_len = (max_d + 2) * (max_d + 3) // 2
    phi_a = np.zeros((n, m), dtype=np.float64)
    cdef double[:, ::1] phi = phi_a
    cdef PathEl* buf = <PathEl*>malloc(buf_len * sizeof(PathEl))
    if buf == NULL:
        raise MemoryError()
    try:
        for i in range(n):
            for t in range(n_trees):
                if feature[roots[t]] < 0:
                    continue
                _recurse(X[i], feature, threshold, left, right, value, cover,
                         &phi[i, 0], roots[t], 0, buf, 1.0, 1.0, -1)
    finally:
        free(buf)
    return phi_a
