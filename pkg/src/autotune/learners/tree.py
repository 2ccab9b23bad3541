"""Weighted least-squares CART used as the weak learner for boosting.

Columns are argsorted once per training matrix (:func:`presort`) and the
orderings are partitioned stably as the tree grows, so a boosting run of
thousands of stages never re-sorts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit


@dataclass(frozen=True)
class Tree:
    """Array-encoded binary tree. Leaves have ``feature == -1``."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_node: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def leaves(self) -> np.ndarray:
        return np.flatnonzero(self.feature < 0)

    @property
    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=int)
        for node in range(self.n_nodes):
            if self.feature[node] >= 0:
                depth[self.left[node]] = depth[node] + 1
                depth[self.right[node]] = depth[node] + 1
        return int(depth.max())

    def predict(self, x) -> np.ndarray:
        x = np.ascontiguousarray(x, dtype=np.float64)
        return self.value[self.apply(x)]

    def apply(self, x) -> np.ndarray:
        """Leaf index reached by each row."""
        x = np.ascontiguousarray(x, dtype=np.float64)
        return _apply(x, self.feature, self.threshold, self.left, self.right)

    def with_values(self, value: np.ndarray) -> "Tree":
        return Tree(self.feature, self.threshold, self.left, self.right,
                    np.asarray(value, dtype=np.float64), self.n_node)

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "n_node": self.n_node.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Tree":
        return cls(
            np.asarray(doc["feature"], dtype=np.int64),
            np.asarray(doc["threshold"], dtype=np.float64),
            np.asarray(doc["left"], dtype=np.int64),
            np.asarray(doc["right"], dtype=np.int64),
            np.asarray(doc["value"], dtype=np.float64),
            np.asarray(doc["n_node"], dtype=np.int64),
        )


def presort(x: np.ndarray) -> np.ndarray:
    """Per-column stable argsort, shape (n_features, n_rows)."""
    x = np.asarray(x, dtype=np.float64)
    return np.ascontiguousarray(np.argsort(x, axis=0, kind="stable").T.astype(np.int64))


@njit(cache=True, nogil=True)
def _apply(x, feature, threshold, left, right):
    out = np.empty(x.shape[0], dtype=np.int64)
    for i in range(x.shape[0]):
        node = 0
        while feature[node] >= 0:
            if x[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out


@njit(cache=True, nogil=True)
def _grow_ws(order, xs0, y, w, max_depth, min_obs, idx, xs, buf, vbuf, go_left, stack,
             feature, threshold, left, right, value, n_node, leaf_of):
    """Grow one tree into caller-owned buffers; returns the node count."""
    p, n = order.shape
    for f in range(p):
        for pos in range(n):
            idx[f, pos] = order[f, pos]
            xs[f, pos] = xs0[f, pos]

    feature[0] = -1
    stack[0, 0] = 0
    stack[0, 1] = 0
    stack[0, 2] = n
    stack[0, 3] = 0
    top = 1
    n_nodes = 1

    while top > 0:
        top -= 1
        node = stack[top, 0]
        start = stack[top, 1]
        end = stack[top, 2]
        depth = stack[top, 3]
        count = end - start

        wsum = 0.0
        ssum = 0.0
        qsum = 0.0
        plain = 0.0
        for pos in range(start, end):
            r = idx[0, pos]
            wsum += w[r]
            ssum += w[r] * y[r]
            qsum += w[r] * y[r] * y[r]
            plain += y[r]
        feature[node] = -1
        threshold[node] = 0.0
        left[node] = -1
        right[node] = -1
        n_node[node] = count
        if wsum > 0.0:
            value[node] = ssum / wsum
        else:
            value[node] = plain / count

        best_f = -1
        best_pos = -1
        best_thr = 0.0
        if depth < max_depth and count >= 2 * min_obs and wsum > 0.0:
            parent = ssum * ssum / wsum
            best_gain = 1e-12 * qsum
            if qsum - parent > best_gain:
                for f in range(p):
                    wl = 0.0
                    sl = 0.0
                    for pos in range(start, end - 1):
                        r = idx[f, pos]
                        wl += w[r]
                        sl += w[r] * y[r]
                        if pos - start + 1 < min_obs:
                            continue
                        if end - pos - 1 < min_obs:
                            break
                        xc = xs[f, pos]
                        xn = xs[f, pos + 1]
                        if xn <= xc:
                            continue
                        wr = wsum - wl
                        sr = ssum - sl
                        if wl > 0.0 and wr > 0.0:
                            # score > target without dividing, as both weights are positive
                            if sl * sl * wr + sr * sr * wl <= (best_gain + parent) * wl * wr:
                                continue
                            score = sl * sl / wl + sr * sr / wr
                        elif wl > 0.0:
                            score = sl * sl / wl
                        elif wr > 0.0:
                            score = sr * sr / wr
                        else:
                            continue
                        gain = score - parent
                        if gain > best_gain:
                            best_gain = gain
                            best_f = f
                            best_pos = pos
                            best_thr = 0.5 * (xc + xn)

        if best_f < 0:
            for pos in range(start, end):
                leaf_of[idx[0, pos]] = node
            continue

        for pos in range(start, end):
            go_left[idx[best_f, pos]] = pos <= best_pos
        nl = best_pos - start + 1
        for f in range(p):
            a = start
            b = start + nl
            for pos in range(start, end):
                r = idx[f, pos]
                if go_left[r]:
                    buf[a] = r
                    vbuf[a] = xs[f, pos]
                    a += 1
                else:
                    buf[b] = r
                    vbuf[b] = xs[f, pos]
                    b += 1
            for pos in range(start, end):
                idx[f, pos] = buf[pos]
                xs[f, pos] = vbuf[pos]

        lchild = n_nodes
        rchild = n_nodes + 1
        n_nodes += 2
        feature[node] = best_f
        threshold[node] = best_thr
        left[node] = lchild
        right[node] = rchild
        stack[top, 0] = rchild
        stack[top, 1] = start + nl
        stack[top, 2] = end
        stack[top, 3] = depth + 1
        top += 1
        stack[top, 0] = lchild
        stack[top, 1] = start
        stack[top, 2] = start + nl
        stack[top, 3] = depth + 1
        top += 1
    return n_nodes


def node_capacity(n_rows: int, max_depth: int, min_obs: int) -> int:
    """Upper bound on the node count of a tree grown with these limits."""
    by_rows = 2 * max(1, n_rows // max(min_obs, 1)) - 1
    by_depth = 2 ** (min(max_depth, 40) + 1) - 1
    return max(1, min(by_rows, by_depth))


@njit(cache=True, nogil=True)
def sorted_values(x, order):
    p, n = order.shape
    xs = np.empty((p, n))
    for f in range(p):
        for pos in range(n):
            xs[f, pos] = x[order[f, pos], f]
    return xs


@njit(cache=True, nogil=True)
def _grow(x, order, y, w, max_depth, min_obs, cap):
    p, n = order.shape
    xs0 = sorted_values(x, order)
    idx = np.empty((p, n), dtype=np.int64)
    xs = np.empty((p, n))
    buf = np.empty(n, dtype=np.int64)
    vbuf = np.empty(n)
    go_left = np.zeros(n, dtype=np.bool_)
    stack = np.empty((cap + 1, 4), dtype=np.int64)
    feature = np.empty(cap, dtype=np.int64)
    threshold = np.empty(cap)
    left = np.empty(cap, dtype=np.int64)
    right = np.empty(cap, dtype=np.int64)
    value = np.empty(cap)
    n_node = np.empty(cap, dtype=np.int64)
    leaf_of = np.empty(n, dtype=np.int64)
    nn = _grow_ws(order, xs0, y, w, max_depth, min_obs, idx, xs, buf, vbuf, go_left, stack,
                  feature, threshold, left, right, value, n_node, leaf_of)
    return (feature[:nn].copy(), threshold[:nn].copy(), left[:nn].copy(),
            right[:nn].copy(), value[:nn].copy(), n_node[:nn].copy(), leaf_of)


def grow_tree(x, order, targets, weights, max_depth: int, min_obs: int):
    """Fit a tree on presorted data; returns ``(tree, leaf_index_per_row)``."""
    min_obs = max(int(min_obs), 1)
    f, t, l, r, v, c, leaf_of = _grow(
        x, order,
        np.ascontiguousarray(targets, dtype=np.float64),
        np.ascontiguousarray(weights, dtype=np.float64),
        int(max_depth), min_obs, node_capacity(x.shape[0], int(max_depth), min_obs),
    )
    return Tree(f, t, l, r, v, c), leaf_of


def fit_tree(features, targets, weights=None, max_depth: int = 1, min_obs: int = 1) -> Tree:
    """Greedy weighted least-squares CART.

    Each split minimises the weighted squared error of a two-mean fit over
    midpoints between consecutive distinct values; ties go to the lowest
    column and then the lowest threshold. Growth stops at ``max_depth``,
    when a node has fewer than ``2 * min_obs`` rows, or when no split
    lowers the error. Leaves predict the weighted mean target.
    """
    x = np.ascontiguousarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("features must be a 2-D matrix")
    y = np.asarray(targets, dtype=np.float64)
    if len(y) != x.shape[0]:
        raise ValueError("targets length does not match feature rows")
    w = np.ones(len(y)) if weights is None else np.asarray(weights, dtype=np.float64)
    if np.any(w < 0):
        raise ValueError("weights must be non-negative")
    tree, _ = grow_tree(x, presort(x), y, w, max_depth, min_obs)
    return tree
