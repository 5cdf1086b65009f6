"""Compiled inner loops for tree growth and prediction.

Labels are coded 0 = lawful, 1 = unlawful. Trees are stored as flat arrays
(one slot per node) and grown breadth-first, so nodes are numbered in the
order they are created and the random stream is consumed level by level.
"""

import numpy as np
from numba import njit

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0

# minimum gain for a split to count as an improvement; also the tie margin
GAIN_EPS = 1e-12


@njit(cache=True, nogil=True)
def _next(state):
    state[0] += _GOLDEN
    z = state[0]
    z = (z ^ (z >> _S30)) * _MIX1
    z = (z ^ (z >> _S27)) * _MIX2
    return z ^ (z >> _S31)


@njit(cache=True, nogil=True)
def _below(state, n):
    u = np.float64(_next(state) >> _S11) * _INV53
    k = np.int64(u * n)
    if k >= n:
        k = n - 1
    return k


@njit(cache=True, nogil=True)
def draw_bootstrap(n, size, seed):
    """Per-row in-bag multiplicity for a with-replacement sample."""
    state = np.empty(1, dtype=np.uint64)
    state[0] = np.uint64(seed)
    counts = np.zeros(n, dtype=np.int64)
    for _ in range(size):
        counts[_below(state, n)] += 1
    return counts, state[0]


@njit(cache=True, nogil=True)
def presort(x):
    """Row order of every column, shape (m, n); shared by all trees of a fit."""
    m = x.shape[1]
    order = np.empty((m, x.shape[0]), dtype=np.int64)
    for f in range(m):
        order[f] = np.argsort(x[:, f], kind="mergesort")
    return order


@njit(cache=True, nogil=True)
def node_best_split(x, y, w, idx, start, end, features, order, row_node, node_id):
    """Scan every candidate feature at every midpoint between distinct values.

    ``idx[start:end]`` are the distinct rows at the node, ``w`` their in-bag
    multiplicities. Large nodes walk the presorted column and filter on
    ``row_node``; small nodes sort their own values.

    Returns (feature, threshold, decrease); feature -1 when no split gains.
    Candidates are visited in the order given, thresholds ascending, and a
    later candidate only replaces the incumbent when strictly better by
    GAIN_EPS, so ties resolve to the first feature and lowest threshold.
    """
    n_rows = end - start
    n = 0
    c1 = 0
    for i in range(start, end):
        r = idx[i]
        n += w[r]
        c1 += w[r] * y[r]
    c0 = n - c1
    best_f = -1
    best_t = 0.0
    best_gain = GAIN_EPS
    if c0 == 0 or c1 == 0:
        return best_f, best_t, 0.0
    parent = 2.0 * c0 * c1 / (n * n)
    n_total = order.shape[1]
    use_presort = 6 * n_rows >= n_total
    seq = np.empty(n_total if use_presort else n_rows, dtype=np.int64)
    vals = np.empty(n_rows, dtype=np.float64)
    for fi in range(features.shape[0]):
        f = features[fi]
        k = 0
        if use_presort:
            for j in range(n_total):
                r = order[f, j]
                if row_node[r] == node_id:
                    seq[k] = r
                    k += 1
        else:
            for i in range(n_rows):
                vals[i] = x[idx[start + i], f]
            srt = np.argsort(vals, kind="mergesort")
            for i in range(n_rows):
                seq[i] = idx[start + srt[i]]
            k = n_rows
        nl = 0
        left1 = 0
        prev = x[seq[0], f]
        for j in range(k):
            r = seq[j]
            v = x[r, f]
            if j > 0 and prev < v:
                nr = n - nl
                right1 = c1 - left1
                child = (2.0 * (nl - left1) * left1 / nl + 2.0 * (nr - right1) * right1 / nr) / n
                gain = parent - child
                if gain > best_gain + (0.0 if best_f < 0 else GAIN_EPS):
                    best_gain = gain
                    best_f = f
                    t = 0.5 * (prev + v)
                    if t >= v or t < prev:
                        t = prev
                    best_t = t
            nl += w[r]
            left1 += w[r] * y[r]
            prev = v
    if best_f < 0:
        return -1, 0.0, 0.0
    return best_f, best_t, best_gain


@njit(cache=True, nogil=True)
def grow_tree(x, y, order, inbag, mtry, max_depth, min_samples_split, seed):
    """Grow one tree on the rows given by ``inbag`` multiplicities.

    max_depth < 0 means unlimited. Returns the node arrays.
    """
    n_total, m = x.shape
    row_node = np.full(n_total, -1, dtype=np.int64)
    n_distinct = 0
    for i in range(n_total):
        if inbag[i] > 0:
            n_distinct += 1
    idx = np.empty(n_distinct, dtype=np.int64)
    p = 0
    for i in range(n_total):
        if inbag[i] > 0:
            idx[p] = i
            row_node[i] = 0
            p += 1

    cap = 2 * n_distinct + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap, dtype=np.float64)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    counts = np.zeros((cap, 2), dtype=np.int64)
    decrease = np.zeros(cap, dtype=np.float64)
    n_node = np.zeros(cap, dtype=np.int64)
    node_start = np.zeros(cap, dtype=np.int64)
    node_end = np.zeros(cap, dtype=np.int64)
    depth = np.zeros(cap, dtype=np.int64)

    state = np.empty(1, dtype=np.uint64)
    state[0] = np.uint64(seed)
    perm = np.arange(m)
    cand = np.empty(mtry, dtype=np.int64)

    node_end[0] = n_distinct
    n_nodes = 1
    cur = 0
    while cur < n_nodes:
        s = node_start[cur]
        e = node_end[cur]
        n = 0
        c1 = 0
        for i in range(s, e):
            n += inbag[idx[i]]
            c1 += inbag[idx[i]] * y[idx[i]]
        counts[cur, 0] = n - c1
        counts[cur, 1] = c1
        n_node[cur] = n
        splittable = (
            c1 > 0 and c1 < n and n >= min_samples_split
            and (max_depth < 0 or depth[cur] < max_depth)
        )
        if splittable:
            for j in range(mtry):
                r = j + _below(state, m - j)
                tmp = perm[j]
                perm[j] = perm[r]
                perm[r] = tmp
            for j in range(mtry):
                cand[j] = perm[j]
            cand.sort()
            f, t, gain = node_best_split(x, y, inbag, idx, s, e, cand, order, row_node, cur)
            if f >= 0:
                # in-place partition: left block keeps x <= t
                lo = s
                hi = e - 1
                while lo <= hi:
                    if x[idx[lo], f] <= t:
                        row_node[idx[lo]] = n_nodes
                        lo += 1
                    else:
                        row_node[idx[lo]] = n_nodes + 1
                        tmp = idx[lo]
                        idx[lo] = idx[hi]
                        idx[hi] = tmp
                        hi -= 1
                feature[cur] = f
                threshold[cur] = t
                decrease[cur] = gain
                left[cur] = n_nodes
                right[cur] = n_nodes + 1
                node_start[n_nodes] = s
                node_end[n_nodes] = lo
                node_start[n_nodes + 1] = lo
                node_end[n_nodes + 1] = e
                depth[n_nodes] = depth[cur] + 1
                depth[n_nodes + 1] = depth[cur] + 1
                n_nodes += 2
        cur += 1

    return (
        feature[:n_nodes].copy(),
        threshold[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        counts[:n_nodes].copy(),
        decrease[:n_nodes].copy(),
        n_node[:n_nodes].copy(),
    )


@njit(cache=True, nogil=True)
def predict_trees(x, feature, threshold, left, right, leaf_label, roots):
    """Per-tree hard predictions, shape (n_trees, n_rows)."""
    n_trees = roots.shape[0]
    n = x.shape[0]
    out = np.empty((n_trees, n), dtype=np.int8)
    for t in range(n_trees):
        root = roots[t]
        for i in range(n):
            node = root
            while feature[node] >= 0:
                if x[i, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            out[t, i] = leaf_label[node]
    return out


@njit(cache=True, nogil=True)
def count_votes(x, feature, threshold, left, right, leaf_label, roots):
    """Number of trees voting unlawful for each row."""
    n = x.shape[0]
    votes = np.zeros(n, dtype=np.int64)
    for t in range(roots.shape[0]):
        root = roots[t]
        for i in range(n):
            node = root
            while feature[node] >= 0:
                if x[i, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            votes[i] += leaf_label[node]
    return votes
