"""Oracle mixture, stump argmax, coordinate identity, boosting variants."""

import numpy as np
import pytest

from muffle.boosters import (build_oracle_dataset, coordinate_objectives,
                             fit_stump, marvin, marvin_coordinate_check,
                             oracle_best)
from muffle.data import LabeledSet, UnlabeledSet
from muffle.trees import DecisionTree, Node
from helpers import gaussian_pair

L4 = LabeledSet(x=np.array([[0.0], [1.0]]), y=np.array([1.0, -1.0]))
U4 = UnlabeledSet(x=np.array([[2.0], [3.0], [4.0], [5.0]]))


def leaf_tree(label, n_features=1):
    return DecisionTree(nodes=[Node(label=label)], n_features=n_features)


def stump_tree(theta, left_label=1.0, n_features=1):
    return DecisionTree(
        nodes=[Node(feature=0, threshold=theta, left=1, right=2),
               Node(label=left_label), Node(label=-left_label)],
        n_features=n_features)


# ---------------------------------------------------------------- mixture

def test_oracle_dataset_hand_instance():
    # scores: hedged, clipped at the boundary, clipped beyond, hedged
    data = build_oracle_dataset(L4, U4, np.array([0.5, 1.0, -2.0, 0.0]))
    assert data.x.shape == (4, 1)  # 2 labeled + 2 clipped
    np.testing.assert_array_equal(data.x.ravel(), [0.0, 1.0, 3.0, 4.0])
    # true labels, then the bet-against labels -sign(score)
    np.testing.assert_array_equal(data.y, [1.0, -1.0, -1.0, 1.0])
    np.testing.assert_allclose(data.w, [0.5, 0.5, 0.25, 0.25])
    np.testing.assert_array_equal(data.from_unlabeled,
                                  [False, False, True, True])


def test_oracle_dataset_all_hedged_keeps_only_labeled():
    data = build_oracle_dataset(L4, U4, np.zeros(4))
    assert data.x.shape == (2, 1)
    assert not data.from_unlabeled.any()
    np.testing.assert_allclose(data.w.sum(), 1.0)


def test_oracle_dataset_rejects_bad_shapes():
    with pytest.raises(ValueError):
        build_oracle_dataset(L4, U4, np.zeros(3))
    with pytest.raises(ValueError):
        build_oracle_dataset(LabeledSet(x=np.zeros((0, 1)), y=np.zeros(0)),
                             U4, np.zeros(4))


# ---------------------------------------------------------------- stumps

def test_stump_separable_toy():
    x = np.array([0.0, 1.0, 2.0, 3.0])
    y = np.array([1.0, 1.0, -1.0, -1.0])
    tree, obj = fit_stump(x, y, np.full(4, 0.25))
    assert obj == pytest.approx(1.0)
    root = tree.nodes[0]
    assert (root.feature, root.threshold) == (0, 1.5)
    assert tree.nodes[root.left].label == 1.0
    np.testing.assert_array_equal(tree.predict(x.reshape(-1, 1)), y)


def test_stump_constant_fallback():
    # indistinct feature values force the everything-left stump
    tree, obj = fit_stump(np.array([5.0, 5.0]), np.array([1.0, 1.0]),
                          np.array([0.5, 0.5]))
    assert obj == pytest.approx(1.0)
    assert tree.nodes[0].threshold == 5.0
    assert np.all(tree.predict(np.array([[5.0], [9.0]])) == [1.0, -1.0])


def test_stump_negative_polarity():
    tree, obj = fit_stump(np.array([0.0, 1.0]), np.array([-1.0, 1.0]),
                          np.array([0.5, 0.5]))
    assert obj == pytest.approx(1.0)
    assert tree.nodes[tree.nodes[0].left].label == -1.0


def test_stump_matches_exhaustive_search():
    rng = np.random.default_rng(21)
    for _ in range(30):
        n, d = int(rng.integers(3, 12)), int(rng.integers(1, 3))
        x = rng.normal(size=(n, d)).round(1)  # coarse grid provokes ties
        y = rng.choice([-1.0, 1.0], size=n)
        w = rng.uniform(0.1, 1.0, size=n)
        w /= w.sum()
        _, obj = fit_stump(x, y, w)
        best = 0.0
        for f in range(d):
            for thr in np.unique(x[:, f]):
                pred = np.where(x[:, f] <= thr + 1e-9, 1.0, -1.0)
                best = max(best, abs(np.sum(w * y * pred)))
        assert obj == pytest.approx(best, abs=1e-12)


def test_oracle_dispatch_and_unknown_learner():
    data = build_oracle_dataset(L4, U4, np.array([2.0, -2.0, 2.0, -2.0]))
    assert oracle_best(data, learner="stump").nodes
    assert oracle_best(data, learner="tree", depth_limit=2).nodes
    with pytest.raises(ValueError):
        oracle_best(data, learner="svm")


# ----------------------------------------------------- coordinate identity

def test_objective_is_minus_directional_derivative():
    rng = np.random.default_rng(31)
    preds_L = rng.choice([-1.0, 1.0], size=(6, 9))
    y = rng.choice([-1.0, 1.0], size=9)
    preds_U = rng.choice([-1.0, 0.0, 1.0], size=(6, 14))
    scores = rng.uniform(-2, 2, size=14)
    objective, derivative = coordinate_objectives(preds_L, y, preds_U, scores)
    np.testing.assert_array_equal(objective, -derivative)
    assert marvin_coordinate_check(preds_L, y, preds_U, scores) == (
        int(np.argmax(objective)))


def test_coordinate_check_breaks_ties_low():
    preds_L = np.ones((3, 4))
    y = np.ones(4)
    preds_U = np.zeros((3, 5))
    assert marvin_coordinate_check(preds_L, y, preds_U, np.zeros(5)) == 0


# ---------------------------------------------------------------- boosting

def test_marvin_rejects_unknown_variant():
    with pytest.raises(ValueError):
        marvin(L4, U4, T=1, variant="turbo")


def test_marvin_zero_rounds_abstains():
    res = marvin(*gaussian_pair(20, 50, seed=1)[:2], T=0)
    assert res.predictor.is_abstaining
    assert res.members == []
    assert res.trajectory == [(0, 1.0, 0)]


def test_marvin_stops_after_five_dead_rounds():
    # a member wrong on half of L gets a nonpositive bound: weight stays 0
    x = np.linspace(0, 1, 40).reshape(-1, 1)
    y = np.concatenate([np.ones(20), -np.ones(20)])
    L = LabeledSet(x=x, y=y)
    U = UnlabeledSet(x=x.copy())
    res = marvin(L, U, member_sequence=[leaf_tree(1.0)] * 9)
    assert res.stopped_early
    assert len(res.trajectory) == 6  # initial row plus five dead rounds
    assert np.all(res.sigma == 0.0)
    assert res.predictor.is_abstaining


def test_marvin_free_run_descends_monotonically():
    L, U, _ = gaussian_pair(60, 400, seed=5)
    res = marvin(L, U, T=12, learner="stump", seed=2)
    g = [row[1] for row in res.trajectory]
    assert g[0] == 1.0
    assert all(a >= c for a, c in zip(g, g[1:]))
    assert g[-1] < 0.9
    assert not res.predictor.is_abstaining


def test_marvin_score_cache_never_drifts():
    L, U, _ = gaussian_pair(60, 400, seed=5)
    res = marvin(L, U, T=10, variant="tc", learner="stump", seed=2)
    again = res.predictor.raw_scores(U.x)
    assert np.max(np.abs(res.scores - again)) <= 1e-10
    assert res.trajectory[-1][2] == int(np.count_nonzero(np.abs(again) >= 1.0))


def test_total_correction_beats_plain_on_fixed_pool():
    # greedy coordinate weights park on early stumps; re-minimizing over the
    # whole pool discovers that the true-boundary stump alone is better
    rng = np.random.default_rng(0)
    xs = np.sort(rng.uniform(0, 3, 240))
    L = LabeledSet(x=xs.reshape(-1, 1), y=np.where(xs <= 1.5, 1.0, -1.0))
    U = UnlabeledSet(x=rng.uniform(0, 3, 500).reshape(-1, 1))
    pool = [stump_tree(t) for t in (0.5, 2.5, 1.5, 0.9, 2.1)]
    final = {}
    for variant in ("plain", "tc"):
        res = marvin(L, U, variant=variant, member_sequence=pool, seed=0)
        g = [row[1] for row in res.trajectory]
        assert all(a >= c for a, c in zip(g, g[1:])), variant
        final[variant] = g[-1]
    assert final["plain"] == pytest.approx(0.136039, abs=1e-4)
    assert final["tc"] == pytest.approx(0.044105, abs=1e-4)
    assert final["tc"] < final["plain"] - 0.05


def test_overconfident_bound_is_rejected_not_chased():
    # two members flawless on an all-positive labeled set but disagreeing on
    # half the pool: their estimated bounds sum past anything achievable, a
    # joint weighting would push the slack below zero, and a negative slack
    # is impossible in any game an adversary can actually play
    m = 100
    L = LabeledSet(x=np.linspace(0.0, 1.0, m).reshape(-1, 1), y=np.ones(m))
    U = UnlabeledSet(x=np.concatenate([np.linspace(0, 1, 50),
                                       np.linspace(2, 3, 50)]).reshape(-1, 1))
    pool = [leaf_tree(1.0), stump_tree(1.5)]
    for variant in ("plain", "tc"):
        res = marvin(L, U, variant=variant, member_sequence=pool, seed=0)
        assert res.stopped_early, variant
        g = [row[1] for row in res.trajectory]
        assert all(v >= 0.0 for v in g), variant
        # the second member is refused; the first keeps its honest weight
        np.testing.assert_allclose(res.sigma, [1.0, 0.0], atol=1e-4)
        assert g[-1] == pytest.approx(1.0 - res.b[0], abs=1e-4)


def test_trees_variant_registers_pruned_specialists():
    L, U, _ = gaussian_pair(80, 300, seed=7)
    res = marvin(L, U, T=6, variant="trees", depth_limit=3, seed=3)
    assert res.mow, "depth-limited trees should expose internal nodes"
    kept_specialists = sum(row.kept for row in res.mow)
    whole_trees = len(res.members) - kept_specialists
    assert whole_trees >= 1
    for row in res.mow:
        assert row.node >= 1  # the root is the tree itself, never a row
        assert 0 <= row.tree < len(res.members)
        assert row.kept == (row.b > 0.0)
    # every registered specialist's bound is positive by construction
    specialist_b = res.b[whole_trees:] if whole_trees else res.b
    assert np.all(specialist_b > 0.0) or kept_specialists == 0


def test_marvin_streaming_batches_smoke():
    L, U, _ = gaussian_pair(50, 600, seed=9)
    res = marvin(L, U, T=8, learner="stump", batch_size=64, stride=3, seed=4)
    assert res.scores.shape == (64,)
    twin = marvin(L, U, T=8, learner="stump", batch_size=64, stride=3, seed=4)
    np.testing.assert_array_equal(res.sigma, twin.sigma)
    g = [row[1] for row in res.trajectory]
    assert all(a >= c for a, c in zip(g, g[1:]))
