"""CART decision trees, bootstrap forests, and per-node specialist members.

Trees are grown greedily on weighted Gini impurity with exhaustive threshold
search (midpoints between consecutive distinct feature values).  Routing is
"go left iff feature <= threshold".  Ties between splits are broken toward
the lowest feature index, then the lowest threshold, so fitting is fully
deterministic.  Impure nodes are split even when the best split has zero
impurity decrease; growth stops only at purity, the depth limit, the minimum
leaf size, or when no feature varies.  Trees are built and routed with
explicit stacks because noisy data can produce very deep chains.

A specialist is an ensemble member tied to one internal node: it predicts the
tree's leaf label for examples routed through that node and abstains (0)
elsewhere.  The root specialist is the whole tree, so an ensemble never needs
a duplicate row for "the tree itself".
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from muffle.data import as_feature_matrix, as_label_vector


@dataclass
class Node:
    feature: int = -1
    threshold: float = 0.0
    left: int = -1
    right: int = -1
    label: float = 0.0
    weight_pos: float = 0.0
    weight_neg: float = 0.0

    @property
    def is_leaf(self) -> bool:
        return self.left < 0


@dataclass
class DecisionTree:
    """Nodes in preorder; node 0 is the root."""

    nodes: list[Node]
    n_features: int

    def internal_ids(self) -> list[int]:
        return [i for i, nd in enumerate(self.nodes) if not nd.is_leaf]

    def predict(self, X) -> np.ndarray:
        X = as_feature_matrix(X)
        self._check_dim(X)
        out = np.empty(X.shape[0])
        stack = [(0, np.arange(X.shape[0]))]
        while stack:
            nid, rows = stack.pop()
            nd = self.nodes[nid]
            if nd.is_leaf:
                out[rows] = nd.label
                continue
            go_left = X[rows, nd.feature] <= nd.threshold
            left_rows = rows[go_left]
            right_rows = rows[~go_left]
            if left_rows.size:
                stack.append((nd.left, left_rows))
            if right_rows.size:
                stack.append((nd.right, right_rows))
        return out

    def visited_rows(self, X) -> list[np.ndarray | None]:
        """Per node, the row indices routed through it (None if unvisited)."""
        X = as_feature_matrix(X)
        self._check_dim(X)
        visited: list[np.ndarray | None] = [None] * len(self.nodes)
        stack = [(0, np.arange(X.shape[0]))]
        while stack:
            nid, rows = stack.pop()
            visited[nid] = rows
            nd = self.nodes[nid]
            if nd.is_leaf:
                continue
            go_left = X[rows, nd.feature] <= nd.threshold
            stack.append((nd.left, rows[go_left]))
            stack.append((nd.right, rows[~go_left]))
        return visited

    def _check_dim(self, X):
        if X.shape[1] != self.n_features:
            raise ValueError(
                f"tree was fit on {self.n_features} features, got {X.shape[1]}"
            )

    def to_dict(self) -> dict:
        return {
            "n_features": self.n_features,
            "nodes": [
                {"feature": nd.feature, "threshold": nd.threshold,
                 "left": nd.left, "right": nd.right}
                if not nd.is_leaf else
                {"label": nd.label,
                 "counts": [nd.weight_neg, nd.weight_pos]}
                for nd in self.nodes
            ],
        }

    @staticmethod
    def from_dict(doc: dict) -> "DecisionTree":
        nodes = []
        for nd in doc["nodes"]:
            if "label" in nd:
                nodes.append(Node(label=float(nd["label"]),
                                  weight_neg=float(nd["counts"][0]),
                                  weight_pos=float(nd["counts"][1])))
            else:
                nodes.append(Node(feature=int(nd["feature"]),
                                  threshold=float(nd["threshold"]),
                                  left=int(nd["left"]), right=int(nd["right"])))
        return DecisionTree(nodes=nodes, n_features=int(doc["n_features"]))


def _best_split(xs, wpos, wneg, min_leaf):
    """Exhaustive weighted-Gini split search on one node's rows.

    Returns (criterion, feature, threshold) or None when no split exists.
    The criterion is the weighted sum of child impurities, comparable across
    candidates because the parent mass is fixed.
    """
    k, d = xs.shape
    best = None
    for f in range(d):
        order = np.argsort(xs[:, f], kind="stable")
        xv = xs[order, f]
        cut = np.nonzero(xv[:-1] < xv[1:])[0]
        if min_leaf > 1 and cut.size:
            cut = cut[(cut + 1 >= min_leaf) & (k - cut - 1 >= min_leaf)]
        if cut.size == 0:
            continue
        cp = np.cumsum(wpos[order])
        cn = np.cumsum(wneg[order])
        lp, ln = cp[cut], cn[cut]
        rp, rn = cp[-1] - lp, cn[-1] - ln
        wl, wr = lp + ln, rp + rn
        crit = (wl - (lp * lp + ln * ln) / wl) + (wr - (rp * rp + rn * rn) / wr)
        j = int(np.argmin(crit))
        if best is None or crit[j] < best[0]:
            thr = 0.5 * (xv[cut[j]] + xv[cut[j] + 1])
            best = (float(crit[j]), f, thr)
    return best


def fit_tree(x, y, w=None, depth_limit=None, min_leaf=1) -> DecisionTree:
    """Grow a CART tree.  Rows with zero weight are invisible to the fit."""
    x = as_feature_matrix(x)
    y = as_label_vector(y)
    if w is None:
        w = np.ones(x.shape[0])
    w = np.asarray(w, dtype=np.float64).ravel()
    if w.shape[0] != x.shape[0] or y.shape[0] != x.shape[0]:
        raise ValueError("x, y, w must have matching lengths")
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    keep = w > 0
    x, y, w = x[keep], y[keep], w[keep]
    if x.shape[0] == 0:
        raise ValueError("no rows with positive weight")
    if min_leaf < 1:
        raise ValueError("min_leaf must be >= 1")

    wpos = w * (y > 0)
    wneg = w * (y < 0)
    nodes: list[Node] = []
    # stack of (rows, depth, parent id, am-I-the-left-child); LIFO with the
    # right task pushed first keeps the node list in preorder
    stack = [(np.arange(x.shape[0]), 0, -1, False)]
    while stack:
        rows, depth, parent, is_left = stack.pop()
        nid = len(nodes)
        if parent >= 0:
            if is_left:
                nodes[parent].left = nid
            else:
                nodes[parent].right = nid
        tp = float(wpos[rows].sum())
        tn = float(wneg[rows].sum())
        split = None
        grown_out = (depth_limit is not None and depth >= depth_limit)
        if tp > 0 and tn > 0 and not grown_out and rows.size >= 2 * min_leaf:
            split = _best_split(x[rows], wpos[rows], wneg[rows], min_leaf)
        if split is None:
            nodes.append(Node(label=1.0 if tp >= tn else -1.0,
                              weight_pos=tp, weight_neg=tn))
            continue
        _, f, thr = split
        nodes.append(Node(feature=f, threshold=thr, left=-2, right=-2,
                          weight_pos=tp, weight_neg=tn))
        go_left = x[rows, f] <= thr
        stack.append((rows[~go_left], depth + 1, nid, False))
        stack.append((rows[go_left], depth + 1, nid, True))
    return DecisionTree(nodes=nodes, n_features=x.shape[1])


@dataclass(frozen=True)
class TreeMember:
    """A whole tree as an always-awake ensemble member."""

    tree: DecisionTree
    tree_index: int = 0

    @property
    def node_id(self) -> int:
        return 0

    def predict(self, X) -> np.ndarray:
        return self.tree.predict(X)


@dataclass(frozen=True)
class NodeSpecialist:
    """Predicts the tree's output on rows routed through one internal node."""

    tree: DecisionTree
    node_id: int
    tree_index: int = 0

    def predict(self, X) -> np.ndarray:
        X = as_feature_matrix(X)
        out = np.zeros(X.shape[0])
        rows = self.tree.visited_rows(X)[self.node_id]
        if rows is not None and rows.size:
            out[rows] = self.tree.predict(X[rows])
        return out


def extract_specialists(tree: DecisionTree, tree_index: int = 0):
    """One specialist per internal node, in preorder.  Root node included;
    a tree that is a single leaf yields no specialists."""
    return [NodeSpecialist(tree=tree, node_id=nid, tree_index=tree_index)
            for nid in tree.internal_ids()]


def build_prediction_matrix(members, X) -> tuple[np.ndarray, np.ndarray]:
    """Stack member predictions on X into F (rows = members).

    Trees shared by several specialists are routed once.  Returns (F, n_awake)
    where n_awake[i] counts the nonzero entries of row i.
    """
    X = as_feature_matrix(X)
    n = X.shape[0]
    F = np.zeros((len(members), n))
    by_tree: dict[int, list[int]] = {}
    for i, mem in enumerate(members):
        by_tree.setdefault(id(mem.tree), []).append(i)
    for idxs in by_tree.values():
        tree = members[idxs[0]].tree
        full = tree.predict(X)
        visited = None
        for i in idxs:
            mem = members[i]
            if isinstance(mem, NodeSpecialist) and mem.node_id != 0:
                if visited is None:
                    visited = tree.visited_rows(X)
                rows = visited[mem.node_id]
                if rows is not None and rows.size:
                    F[i, rows] = full[rows]
            else:
                F[i, :] = full
    n_awake = np.count_nonzero(F, axis=1)
    return F, n_awake


@dataclass
class Forest:
    trees: list[DecisionTree]
    seed: int
    bootstrap_indices: list[np.ndarray] = field(default_factory=list)


def fit_forest(x, y, p: int, seed: int, depth_limit=None, min_leaf=1) -> Forest:
    """p CART trees on independent bootstrap resamples (deterministic in seed)."""
    if p < 1:
        raise ValueError("forest needs at least one tree")
    x = as_feature_matrix(x)
    y = as_label_vector(y)
    rng = np.random.default_rng(seed)
    k = x.shape[0]
    forest = Forest(trees=[], seed=seed)
    for _ in range(p):
        idx = rng.integers(0, k, size=k)
        forest.bootstrap_indices.append(idx)
        forest.trees.append(fit_tree(x[idx], y[idx],
                                     depth_limit=depth_limit, min_leaf=min_leaf))
    return forest
