"""CART regression trees stored as flat node arrays.

Nodes are numbered level by level with the root at index 0. Leaves
carry ``feature == -1`` and ``left == right == -1``. A row is routed left when
``x[feature] < threshold``. Every node keeps its training cover, which the
SHAP code needs for conditional expectations.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numba import njit

LEAF = -1


@dataclass(frozen=True, eq=False)
class RegressionTree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    cover: np.ndarray
    value: np.ndarray
    max_depth: int
    n_features: int

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def is_leaf(self) -> np.ndarray:
        return self.feature == LEAF

    def depth(self) -> int:
        depths = np.zeros(self.n_nodes, dtype=int)
        for node in range(self.n_nodes):
            if self.feature[node] != LEAF:
                depths[self.left[node]] = depths[node] + 1
                depths[self.right[node]] = depths[node] + 1
        return int(depths.max())

    def used_features(self) -> set[int]:
        return {int(f) for f in self.feature if f != LEAF}

    def apply(self, X) -> np.ndarray:
        """Index of the leaf each row of ``X`` lands in."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        node = np.zeros(len(X), dtype=np.intp)
        rows = np.arange(len(X))
        for _ in range(self.max_depth + 1):
            feat = self.feature[node]
            internal = feat != LEAF
            if not internal.any():
                break
            go_left = X[rows, np.maximum(feat, 0)] < self.threshold[node]
            nxt = np.where(go_left, self.left[node], self.right[node])
            node = np.where(internal, nxt, node)
        return node

    def predict(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "cover": self.cover.tolist(),
            "value": self.value.tolist(),
            "max_depth": int(self.max_depth),
            "n_features": int(self.n_features),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RegressionTree":
        return cls(
            feature=np.asarray(d["feature"], dtype=np.intp),
            threshold=np.asarray(d["threshold"], dtype=float),
            left=np.asarray(d["left"], dtype=np.intp),
            right=np.asarray(d["right"], dtype=np.intp),
            cover=np.asarray(d["cover"], dtype=float),
            value=np.asarray(d["value"], dtype=float),
            max_depth=int(d["max_depth"]),
            n_features=int(d["n_features"]),
        )

    @classmethod
    def constant(cls, value: float, cover: float, n_features: int, max_depth: int = 0):
        return cls(
            feature=np.array([LEAF], dtype=np.intp),
            threshold=np.zeros(1),
            left=np.array([LEAF], dtype=np.intp),
            right=np.array([LEAF], dtype=np.intp),
            cover=np.array([float(cover)]),
            value=np.array([float(value)]),
            max_depth=max_depth,
            n_features=n_features,
        )


def predict_tree(tree: RegressionTree, x) -> float:
    x = np.asarray(x, dtype=float)
    return float(tree.predict(x.reshape(1, -1))[0])


class Presorted(NamedTuple):
    """Per-feature stable sort order of X and the sorted values, both shape (D, M)."""

    idx: np.ndarray
    values: np.ndarray


def presort(X: np.ndarray) -> Presorted:
    """Sort every feature column once; reusable across trees fitted on the same X."""
    X = np.asarray(X, dtype=float)
    idx = np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T)
    values = np.ascontiguousarray(np.take_along_axis(X.T, idx, axis=1))
    return Presorted(idx, values)


@njit(cache=True)
def _node_stats(node_of, targets, n_nodes):
    cnt = np.zeros(n_nodes)
    tot = np.zeros(n_nodes)
    lo = np.full(n_nodes, np.inf)
    hi = np.full(n_nodes, -np.inf)
    for r in range(len(node_of)):
        k = node_of[r]
        t = targets[r]
        cnt[k] += 1.0
        tot[k] += t
        if t < lo[k]:
            lo[k] = t
        if t > hi[k]:
            hi[k] = t
    return cnt, tot, lo, hi


@njit(cache=True)
def _level_splits(sorted_x, sorted_idx, targets, node_of, cnt, tot, splittable, min_leaf):
    """Exact best split of every splittable node, scanning each feature once in sorted order.

    Ties go to the lowest feature index, then the lowest threshold.
    """
    D, M = sorted_idx.shape
    K = len(cnt)
    best_gain = np.full(K, -np.inf)
    best_f = np.full(K, -1, dtype=np.int64)
    best_thr = np.zeros(K)
    left_cnt = np.zeros(K)
    left_sum = np.zeros(K)
    last_x = np.zeros(K)
    for f in range(D):
        left_cnt[:] = 0.0
        left_sum[:] = 0.0
        for j in range(M):
            r = sorted_idx[f, j]
            k = node_of[r]
            if not splittable[k]:
                continue
            x = sorted_x[f, j]
            nl = left_cnt[k]
            if nl > 0 and x > last_x[k]:
                nr = cnt[k] - nl
                if nl >= min_leaf and nr >= min_leaf:
                    sl = left_sum[k]
                    sr = tot[k] - sl
                    g = sl * sl / nl + sr * sr / nr - tot[k] * tot[k] / cnt[k]
                    if g > best_gain[k]:
                        best_gain[k] = g
                        best_f[k] = f
                        thr = 0.5 * (last_x[k] + x)
                        if not (last_x[k] < thr and thr <= x):
                            thr = x
                        best_thr[k] = thr
            left_cnt[k] = nl + 1.0
            left_sum[k] += targets[r]
            last_x[k] = x
    return best_f, best_thr, best_gain


def fit_tree_leaves(X, targets, max_depth=3, min_samples_leaf=1, sorted_idx=None):
    """Fit a tree and also return the leaf index of every training row.

    Pass ``sorted_idx`` from :func:`presort` to reuse the feature ordering
    across many trees fitted on the same ``X``.
    """
    X = np.asarray(X, dtype=float)
    targets = np.ascontiguousarray(targets, dtype=float)
    M, D = X.shape
    if len(targets) != M:
        raise ValueError("X and targets have different lengths")
    if M == 0:
        raise ValueError("cannot fit a tree on zero rows")
    if min_samples_leaf < 1:
        raise ValueError("min_samples_leaf must be >= 1")
    if M < 2 * min_samples_leaf and max_depth > 0:
        raise ValueError(f"need at least {2 * min_samples_leaf} rows, got {M}")
    if sorted_idx is None:
        sorted_idx = presort(X)
    XT = X.T

    node_of = np.zeros(M, dtype=np.int64)
    feature = [LEAF]
    threshold = [0.0]
    left = [LEAF]
    right = [LEAF]
    level = [0]
    cnt, tot, lo, hi = _node_stats(node_of, targets, 1)
    cover = list(cnt)
    value = list(tot / cnt)
    for depth in range(max_depth):
        n_nodes = len(feature)
        splittable = np.zeros(n_nodes, dtype=np.bool_)
        for k in level:
            splittable[k] = cnt[k] >= 2 * min_samples_leaf and hi[k] > lo[k]
        if not splittable.any():
            break
        best_f, best_thr, _ = _level_splits(
            sorted_idx.values, sorted_idx.idx, targets, node_of, cnt, tot, splittable, float(min_samples_leaf)
        )
        child_left = np.full(n_nodes, -1, dtype=np.int64)
        child_right = np.full(n_nodes, -1, dtype=np.int64)
        next_level = []
        for k in level:
            if best_f[k] < 0:
                continue
            feature[k] = int(best_f[k])
            threshold[k] = float(best_thr[k])
            for side in (child_left, child_right):
                side[k] = len(feature)
                next_level.append(len(feature))
                feature.append(LEAF)
                threshold.append(0.0)
                left.append(LEAF)
                right.append(LEAF)
            left[k] = int(child_left[k])
            right[k] = int(child_right[k])
        if not next_level:
            break
        f_rows = best_f[node_of]
        split_rows = f_rows >= 0
        go_left = XT[np.maximum(f_rows, 0), np.arange(M)] < best_thr[node_of]
        node_of = np.where(
            split_rows, np.where(go_left, child_left[node_of], child_right[node_of]), node_of
        )
        cnt, tot, lo, hi = _node_stats(node_of, targets, len(feature))
        for k in next_level:
            cover.append(cnt[k])
            value.append(tot[k] / cnt[k])
        level = next_level

    tree = RegressionTree(
        feature=np.asarray(feature, dtype=np.intp),
        threshold=np.asarray(threshold, dtype=float),
        left=np.asarray(left, dtype=np.intp),
        right=np.asarray(right, dtype=np.intp),
        cover=np.asarray(cover, dtype=float),
        value=np.asarray(value, dtype=float),
        max_depth=int(max_depth),
        n_features=D,
    )
    return tree, node_of.astype(np.intp)


def fit_tree(X, targets, max_depth=3, min_samples_leaf=1, sorted_idx=None) -> RegressionTree:
    """Greedy squared-error CART with exact midpoint split search."""
    return fit_tree_leaves(X, targets, max_depth, min_samples_leaf, sorted_idx)[0]
