"""CART trees, forests, node specialists, and the prediction matrix."""

import sys

import numpy as np
import pytest

from muffle.trees import (DecisionTree, NodeSpecialist, TreeMember,
                          build_prediction_matrix, extract_specialists,
                          fit_forest, fit_tree)

FOUR_POINTS_X = np.array([[0.0], [1.0], [2.0], [3.0]])
FOUR_POINTS_Y = np.array([-1.0, -1.0, 1.0, 1.0])


def gini_of_split(x, y, w, feature, threshold):
    """Exhaustive-search oracle: weighted Gini impurity after one split."""
    left = x[:, feature] <= threshold
    total = 0.0
    for mask in (left, ~left):
        wm = w[mask]
        if wm.sum() == 0:
            return np.inf
        pos = wm[y[mask] > 0].sum()
        neg = wm[y[mask] < 0].sum()
        tot = pos + neg
        total += tot * (1.0 - (pos / tot) ** 2 - (neg / tot) ** 2)
    return total


def test_fit_tree_single_split_toy():
    tree = fit_tree(FOUR_POINTS_X, FOUR_POINTS_Y)
    root = tree.nodes[0]
    assert root.feature == 0
    assert root.threshold == pytest.approx(1.5)
    assert np.array_equal(tree.predict(FOUR_POINTS_X), FOUR_POINTS_Y)


def test_fit_tree_pure_input_is_single_leaf():
    tree = fit_tree(np.zeros((5, 2)), np.ones(5))
    assert len(tree.nodes) == 1
    assert tree.nodes[0].is_leaf
    assert tree.predict(np.ones((3, 2))).tolist() == [1.0, 1.0, 1.0]


def test_zero_weight_rows_are_invisible():
    y_flipped = FOUR_POINTS_Y.copy()
    y_flipped[0] = 1.0
    w = np.array([0.0, 1.0, 1.0, 1.0])
    tree = fit_tree(FOUR_POINTS_X, y_flipped, w)
    ref = fit_tree(FOUR_POINTS_X[1:], FOUR_POINTS_Y[1:])
    assert tree.nodes[0].threshold == ref.nodes[0].threshold
    assert np.array_equal(tree.predict(FOUR_POINTS_X), ref.predict(FOUR_POINTS_X))


def test_fit_tree_rejects_empty_and_zero_weight():
    with pytest.raises(ValueError):
        fit_tree(np.zeros((0, 1)), np.zeros(0))
    with pytest.raises(ValueError):
        fit_tree(FOUR_POINTS_X, FOUR_POINTS_Y, np.zeros(4))


def test_boundary_routes_left():
    tree = fit_tree(FOUR_POINTS_X, FOUR_POINTS_Y)
    assert tree.predict(np.array([[1.5]]))[0] == -1.0
    assert tree.predict(np.array([[0.2]]))[0] == -1.0
    assert tree.predict(np.array([[1.6]]))[0] == 1.0


def test_fit_tree_solves_xor_with_zero_gain_splits():
    x = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
    y = np.array([-1.0, 1.0, 1.0, -1.0])
    tree = fit_tree(x, y)
    assert np.array_equal(tree.predict(x), y)


def test_split_matches_exhaustive_search_small_instances():
    rng = np.random.default_rng(10)
    for trial in range(60):
        k = int(rng.integers(4, 13))
        d = int(rng.integers(1, 3))
        x = rng.normal(size=(k, d)).round(1)  # coarse grid forces ties
        y = rng.choice([-1.0, 1.0], size=k)
        w = rng.uniform(0.1, 1.0, size=k)
        if np.all(y == y[0]):
            continue
        tree = fit_tree(x, y, w, depth_limit=1)
        if tree.nodes[0].is_leaf:
            continue
        chosen = gini_of_split(x, y, w, tree.nodes[0].feature,
                               tree.nodes[0].threshold)
        best = np.inf
        for f in range(d):
            vals = np.unique(x[:, f])
            for lo, hi in zip(vals[:-1], vals[1:]):
                best = min(best, gini_of_split(x, y, w, f, (lo + hi) / 2.0))
        assert chosen <= best + 1e-9, trial


def test_tie_break_lowest_feature_then_threshold():
    # two identical features: both give identical gains everywhere
    x = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
    tree = fit_tree(x, FOUR_POINTS_Y, depth_limit=1)
    assert tree.nodes[0].feature == 0
    # duplicated boundary: thresholds 0.5 and 2.5 both separate one example;
    # with symmetric labels the gains tie and the lower threshold must win
    x2 = np.array([[0.0], [1.0], [2.0], [3.0]])
    y2 = np.array([1.0, -1.0, -1.0, 1.0])
    t2 = fit_tree(x2, y2, depth_limit=1)
    assert t2.nodes[0].threshold == pytest.approx(0.5)


def test_depth_limit_and_min_leaf():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(60, 2))
    y = rng.choice([-1.0, 1.0], size=60)
    stump = fit_tree(x, y, depth_limit=1)
    assert len(stump.internal_ids()) <= 1
    big = fit_tree(x, y, min_leaf=20)
    counts = [nd.weight_pos + nd.weight_neg for nd in big.nodes if nd.is_leaf]
    assert min(counts) >= 20


def test_deep_chain_does_not_hit_recursion_limit():
    # strictly increasing 1-D feature with alternating labels grows a
    # comb-shaped tree whose depth is O(k)
    k = min(3000, sys.getrecursionlimit() * 2)
    x = np.arange(k, dtype=np.float64).reshape(-1, 1)
    y = np.where(np.arange(k) % 2 == 0, 1.0, -1.0)
    tree = fit_tree(x, y)
    assert np.array_equal(tree.predict(x), y)


def test_partition_property_and_column_consistency():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(200, 3))
    y = rng.choice([-1.0, 1.0], size=200)
    tree = fit_tree(x, y, depth_limit=4)
    specs = extract_specialists(tree)
    assert specs and specs[0].node_id == 0  # root included, preorder first
    xq = rng.normal(size=(50, 3))
    full = tree.predict(xq)
    preds = np.array([sp.predict(xq) for sp in specs])
    for j in range(xq.shape[0]):
        awake = preds[:, j] != 0
        # every awake specialist of one tree repeats the routed leaf label
        assert np.all(preds[awake, j] == full[j])
        # awake set = nodes on the routing path: root is always there
        assert awake[0]
    # sibling exclusivity: children of one internal node never fire together
    by_node = {sp.node_id: preds[i] for i, sp in enumerate(specs)}
    for nid in tree.internal_ids():
        nd = tree.nodes[nid]
        left, right = by_node.get(nd.left), by_node.get(nd.right)
        if left is not None and right is not None:
            assert not np.any((left != 0) & (right != 0))


def test_extract_specialists_counts():
    tree = fit_tree(FOUR_POINTS_X, FOUR_POINTS_Y)  # one split
    assert len(extract_specialists(tree)) == 1
    leaf = fit_tree(np.zeros((3, 1)), np.ones(3))
    assert extract_specialists(leaf) == []


def test_prediction_matrix_shape_and_awake_counts():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(120, 2))
    y = np.sign(x[:, 0] + 0.3 * rng.normal(size=120))
    y[y == 0] = 1.0
    tree = fit_tree(x, y, depth_limit=3)
    members = extract_specialists(tree)
    xq = rng.normal(size=(40, 2))
    F, n_awake = build_prediction_matrix(members, xq)
    assert F.shape == (len(members), 40)
    assert np.all(np.isin(F, (-1.0, 0.0, 1.0)))
    assert n_awake.tolist() == [int(np.count_nonzero(F[i]))
                                for i in range(F.shape[0])]
    # the root row equals the full tree everywhere
    assert np.array_equal(F[0], tree.predict(xq))
    ft, _ = build_prediction_matrix([TreeMember(tree)], xq)
    assert np.array_equal(ft[0], F[0])


def test_forest_bootstrap_cardinality_and_determinism():
    rng = np.random.default_rng(6)
    x = rng.normal(size=(50, 2))
    y = rng.choice([-1.0, 1.0], size=50)
    f1 = fit_forest(x, y, p=7, seed=99)
    f2 = fit_forest(x, y, p=7, seed=99)
    assert len(f1.trees) == 7
    for idx1, idx2 in zip(f1.bootstrap_indices, f2.bootstrap_indices):
        assert idx1.shape == (50,)
        assert np.array_equal(idx1, idx2)
    for t1, t2 in zip(f1.trees, f2.trees):
        assert t1.to_dict() == t2.to_dict()
    f3 = fit_forest(x, y, p=7, seed=100)
    assert any(not np.array_equal(a, b) for a, b in
               zip(f1.bootstrap_indices, f3.bootstrap_indices))


def test_tree_dict_roundtrip():
    rng = np.random.default_rng(8)
    x = rng.normal(size=(80, 3))
    y = rng.choice([-1.0, 1.0], size=80)
    tree = fit_tree(x, y, depth_limit=4)
    clone = DecisionTree.from_dict(tree.to_dict())
    xq = rng.normal(size=(30, 3))
    assert np.array_equal(tree.predict(xq), clone.predict(xq))
    assert clone.to_dict() == tree.to_dict()


def test_specialist_asleep_value_is_zero():
    tree = fit_tree(FOUR_POINTS_X, FOUR_POINTS_Y)
    deeper = fit_tree(np.array([[0.0], [1.0], [2.0], [3.0], [4.0], [5.0]]),
                      np.array([-1.0, -1.0, 1.0, 1.0, -1.0, -1.0]))
    internal = [i for i in deeper.internal_ids() if i != 0]
    assert internal, "toy should have a non-root internal node"
    sp = NodeSpecialist(deeper, internal[0])
    vals = sp.predict(np.array([[0.0], [5.0], [2.5]]))
    assert set(np.unique(vals)) <= {-1.0, 0.0, 1.0}
    assert np.any(vals == 0.0)


def test_predict_dimension_check():
    tree = fit_tree(FOUR_POINTS_X, FOUR_POINTS_Y)
    with pytest.raises(ValueError):
        tree.predict(np.zeros((2, 3)))
