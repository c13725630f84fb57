"""Binary-partitioning decision trees grown on gini or entropy impurity.

Trees live as flat preorder arrays (feature, threshold, left, right, class,
class counts); leaves carry feature index -1. Routing sends x left when
``x[feature] <= threshold``.
"""

from dataclasses import dataclass

import numpy as np

from .. import _kernels as kernels
from ..errors import ConfigError

CRITERIA = {"gini": kernels.GINI, "entropy": kernels.ENTROPY}


def impurity(counts, criterion):
    """Two-class impurity from raw counts: gini 1 - sum p^2, entropy
    -sum p log2 p (with 0 log 0 = 0)."""
    if criterion not in CRITERIA:
        raise ConfigError(f"unknown criterion {criterion!r}")
    counts = np.asarray(counts, dtype=np.int64)
    n = counts.sum()
    if criterion == "gini":
        out = 1.0
        for c in counts:
            p = c / n
            out -= p * p
        return out
    out = 0.0
    for c in counts:
        if c > 0:
            p = c / n
            out -= p * np.log2(p)
    return float(out)


def best_split(X, y, candidate_features, criterion="gini"):
    """Best (feature, threshold, gain) over the candidates, or None.

    Thresholds are midpoints between consecutive distinct sorted values; the
    winner maximizes the impurity decrease weighted by child sizes, ties
    going to the lower feature index and then the lower threshold. None when
    no split reduces impurity.
    """
    crit = CRITERIA[criterion]
    y = np.asarray(y, dtype=np.int64)
    n1 = int(y.sum())
    parent = impurity((len(y) - n1, n1), criterion)
    best = None  # (weighted child impurity, feature, threshold)
    for f in sorted(int(c) for c in candidate_features):
        col = X[:, f]
        order = np.argsort(col)
        found, w, thr = kernels.split_scan(col[order], y[order], crit)
        if found and (best is None or w < best[0]):
            best = (w, f, thr)
    if best is None or not best[0] < parent:
        return None
    return best[1], best[2], parent - best[0]


@dataclass
class Tree:
    feature: np.ndarray    # int32, -1 marks a leaf
    threshold: np.ndarray  # float64
    left: np.ndarray       # int32
    right: np.ndarray      # int32
    klass: np.ndarray      # uint8, argmax of counts (tie -> 0)
    n0: np.ndarray         # int64 class-0 count at the node
    n1: np.ndarray         # int64

    @property
    def n_nodes(self):
        return len(self.feature)

    def apply(self, X):
        return kernels.tree_apply(self.feature, self.threshold, self.left,
                                  self.right, self.klass,
                                  np.ascontiguousarray(X, dtype=np.float64))

    def max_depth(self):
        deepest = 0
        work = [(0, 0)]
        while work:
            i, depth = work.pop()
            if self.feature[i] < 0:
                deepest = max(deepest, depth)
            else:
                work.append((self.left[i], depth + 1))
                work.append((self.right[i], depth + 1))
        return deepest

    def used_features(self):
        return set(int(f) for f in self.feature if f >= 0)


def grow_tree(X, y, criterion="gini", max_depth=None, max_features=None, rng=None):
    """Grow one tree. ``max_features`` candidates are drawn per node without
    replacement from ``rng`` (all features when unset)."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    d = X.shape[1]
    if max_features is None or max_features >= d:
        mf = None
    else:
        mf = int(max_features)
        if mf < 1:
            raise ConfigError("max_features must be >= 1")
    nodes = {"feature": [], "threshold": [], "left": [], "right": [],
             "klass": [], "n0": [], "n1": []}

    def add_node():
        for v in nodes.values():
            v.append(0)
        return len(nodes["feature"]) - 1

    def fill_leaf(i, c0, c1):
        nodes["feature"][i] = -1
        nodes["threshold"][i] = 0.0
        nodes["left"][i] = -1
        nodes["right"][i] = -1
        nodes["klass"][i] = 1 if c1 > c0 else 0
        nodes["n0"][i] = c0
        nodes["n1"][i] = c1

    # explicit stack, preorder numbering: pushing right before left makes the
    # left subtree contiguous after its parent
    work = [(np.arange(len(y)), 0, -1, "left")]
    while work:
        idx, depth, parent, side = work.pop()
        i = add_node()
        if parent >= 0:
            nodes[side][parent] = i
        c1 = int(y[idx].sum())
        c0 = len(idx) - c1
        if (len(idx) < 2 or c0 == 0 or c1 == 0
                or (max_depth is not None and depth >= max_depth)):
            fill_leaf(i, c0, c1)
            continue
        cand = rng.choice(d, size=mf, replace=False) if mf is not None else range(d)
        split = best_split(X[idx], y[idx], cand, criterion)
        if split is None:
            fill_leaf(i, c0, c1)
            continue
        f, thr, _ = split
        go_left = X[idx, f] <= thr
        nodes["feature"][i] = f
        nodes["threshold"][i] = thr
        nodes["klass"][i] = 1 if c1 > c0 else 0
        nodes["n0"][i] = c0
        nodes["n1"][i] = c1
        work.append((idx[~go_left], depth + 1, i, "right"))
        work.append((idx[go_left], depth + 1, i, "left"))
    return Tree(np.array(nodes["feature"], dtype=np.int32),
                np.array(nodes["threshold"], dtype=np.float64),
                np.array(nodes["left"], dtype=np.int32),
                np.array(nodes["right"], dtype=np.int32),
                np.array(nodes["klass"], dtype=np.uint8),
                np.array(nodes["n0"], dtype=np.int64),
                np.array(nodes["n1"], dtype=np.int64))


def tree_to_records(tree):
    """JSON-ready node records: {f, t, l, r} internals, {c, n0, n1} leaves."""
    recs = []
    for i in range(tree.n_nodes):
        if tree.feature[i] < 0:
            recs.append({"c": int(tree.klass[i]),
                         "n0": int(tree.n0[i]), "n1": int(tree.n1[i])})
        else:
            recs.append({"f": int(tree.feature[i]), "t": float(tree.threshold[i]),
                         "l": int(tree.left[i]), "r": int(tree.right[i])})
    return recs


def tree_from_records(recs):
    n = len(recs)
    feature = np.full(n, -1, dtype=np.int32)
    threshold = np.zeros(n, dtype=np.float64)
    left = np.full(n, -1, dtype=np.int32)
    right = np.full(n, -1, dtype=np.int32)
    klass = np.zeros(n, dtype=np.uint8)
    n0 = np.zeros(n, dtype=np.int64)
    n1 = np.zeros(n, dtype=np.int64)
    for i, rec in enumerate(recs):
        if "f" in rec:
            feature[i] = rec["f"]
            threshold[i] = rec["t"]
            left[i] = rec["l"]
            right[i] = rec["r"]
        else:
            klass[i] = rec["c"]
            n0[i] = rec.get("n0", 0)
            n1[i] = rec.get("n1", 0)
    return Tree(feature, threshold, left, right, klass, n0, n1)
