"""Boosting with hallucinated labels on the clipped unlabeled examples.

Each round scores the unlabeled pool with the current ensemble.  Examples
whose score has left the hedged band (|s| >= 1) are handed to the weak
learner with the label the ensemble is betting against, weighted 1/n, next
to the true labeled data weighted 1/m; hedged examples are left out entirely.
Maximizing weighted agreement on that mixture is exactly steepest coordinate
descent on the slack, with the labeled average standing in for the unknown
correlation bound of the candidate.

Variants: "plain" adds one member per round with a line-searched weight;
"tc" (total correction) re-minimizes the slack over all weights after each
round; "trees" additionally registers every internal node of a new tree as a
specialist member (Wilson-pruned) before the correction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from muffle.core import hallucinate, slack
from muffle.data import LabeledSet, UnlabeledSet, minibatch_stream
from muffle.estimation import (MemberStats, WilsonParams, estimate_b,
                               mow_rows, prune_members)
from muffle.optimize import LineSearchSpec, line_search, total_correct
from muffle.predictors import EnsemblePredictor
from muffle.trees import (DecisionTree, Node, TreeMember, extract_specialists,
                          fit_tree)

VARIANTS = ("plain", "tc", "trees")
CONSECUTIVE_ZERO_STEPS = 5


@dataclass(frozen=True)
class OracleDataset:
    """Weighted training mixture handed to the weak-learner oracle."""

    x: np.ndarray
    y: np.ndarray
    w: np.ndarray
    from_unlabeled: np.ndarray  # bool per row


def build_oracle_dataset(L: LabeledSet, U: UnlabeledSet, scores) -> OracleDataset:
    """Labeled rows (weight 1/m, true labels) plus clipped unlabeled rows
    (weight 1/n, hallucinated labels).  Hedged unlabeled rows are dropped."""
    if L.m == 0:
        raise ValueError("empty labeled set")
    if U.n == 0:
        raise ValueError("empty unlabeled batch")
    scores = np.asarray(scores, dtype=np.float64).ravel()
    if scores.shape[0] != U.n:
        raise ValueError(f"{U.n} unlabeled rows but {scores.shape[0]} scores")
    fake = hallucinate(scores)
    take = fake != 0.0
    x = np.vstack([L.x, U.x[take]])
    y = np.concatenate([L.y, fake[take]])
    w = np.concatenate([np.full(L.m, 1.0 / L.m), np.full(int(take.sum()), 1.0 / U.n)])
    src = np.concatenate([np.zeros(L.m, dtype=bool), np.ones(int(take.sum()), dtype=bool)])
    return OracleDataset(x=x, y=y, w=w, from_unlabeled=src)


def fit_stump(x, y, w) -> tuple[DecisionTree, float]:
    """Exact argmax of sum_i w_i y_i h(x_i) over axis-aligned stumps.

    Candidate thresholds are the midpoints between consecutive distinct
    values plus the maximum value itself (an everything-left, i.e. constant,
    stump).  Ties go to the lowest feature, lowest threshold, +1 polarity.
    Returns the stump as a depth-1 tree along with its objective value.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    y = np.asarray(y, dtype=np.float64).ravel()
    w = np.asarray(w, dtype=np.float64).ravel()
    if x.shape[0] == 0:
        raise ValueError("empty stump training set")
    best = None  # (objective, feature, threshold, polarity)
    for f in range(x.shape[1]):
        order = np.argsort(x[:, f], kind="stable")
        xv = x[order, f]
        cum = np.cumsum((w * y)[order])
        total = cum[-1]
        pos = np.nonzero(xv[:-1] < xv[1:])[0]
        thresholds = 0.5 * (xv[pos] + xv[pos + 1])
        # always include the constant stump: threshold at the max value
        pos = np.concatenate([pos, [xv.size - 1]])
        thresholds = np.concatenate([thresholds, [xv[-1]]])
        signed = 2.0 * cum[pos] - total
        objective = np.abs(signed)
        j = int(np.argmax(objective))
        if best is None or objective[j] > best[0]:
            polarity = 1.0 if signed[j] >= 0 else -1.0
            best = (float(objective[j]), f, float(thresholds[j]), polarity)
    obj, f, thr, pol = best
    go_left = x[:, f] <= thr
    wp, wn = w * (y > 0), w * (y < 0)
    nodes = [
        Node(feature=f, threshold=thr, left=1, right=2,
             weight_pos=float(wp.sum()), weight_neg=float(wn.sum())),
        Node(label=pol, weight_pos=float(wp[go_left].sum()),
             weight_neg=float(wn[go_left].sum())),
        Node(label=-pol, weight_pos=float(wp[~go_left].sum()),
             weight_neg=float(wn[~go_left].sum())),
    ]
    return DecisionTree(nodes=nodes, n_features=x.shape[1]), obj


def oracle_best(data: OracleDataset, learner: str = "tree",
                depth_limit=None) -> DecisionTree:
    """Weak-learner oracle: the stump is an exact argmax of the weighted
    agreement; the tree is CART's greedy approximation of it."""
    if learner == "stump":
        return fit_stump(data.x, data.y, data.w)[0]
    if learner == "tree":
        return fit_tree(data.x, data.y, data.w, depth_limit=depth_limit)
    raise ValueError(f"unknown learner {learner!r} (want 'tree' or 'stump')")


def coordinate_objectives(preds_L, y, preds_U, scores):
    """Oracle objective and slack directional derivative for a member pool.

    objective_i = (1/m) sum y h_i(x) + (1/n) sum y~ h_i(x) over the pool;
    derivative_i is the one-sided slack derivative along coordinate i at
    weight 0+, with the labeled average standing in for b_i.  The two arrays
    are exact negatives of each other.
    """
    preds_L = np.asarray(preds_L, dtype=np.float64)
    preds_U = np.asarray(preds_U, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    scores = np.asarray(scores, dtype=np.float64).ravel()
    fake = hallucinate(scores)
    labeled_avg = preds_L @ y / y.shape[0]
    objective = labeled_avg + preds_U @ fake / scores.shape[0]
    derivative = -labeled_avg + preds_U @ (-fake) / scores.shape[0]
    return objective, derivative


def marvin_coordinate_check(preds_L, y, preds_U, scores) -> int:
    """Index the oracle would pick from a finite pool; asserts that the
    agreement argmax coincides with the steepest slack coordinate.  Ties go
    to the lowest index."""
    objective, derivative = coordinate_objectives(preds_L, y, preds_U, scores)
    best = int(np.argmax(objective))
    steepest = int(np.argmin(derivative))
    if best != steepest:
        raise AssertionError(
            f"oracle argmax {best} != steepest descent coordinate {steepest}")
    return best


@dataclass
class BoostResult:
    predictor: EnsemblePredictor
    sigma: np.ndarray
    b: np.ndarray
    members: list
    trajectory: list[tuple[int, float, int]]
    mow: list = field(default_factory=list)
    stopped_early: bool = False
    scores: np.ndarray | None = None


def _scores_of(members, sigma, X) -> np.ndarray:
    from muffle.trees import build_prediction_matrix
    if not members:
        return np.zeros(X.shape[0])
    F, _ = build_prediction_matrix(members, X)
    return F.T @ np.asarray(sigma)


def marvin(L: LabeledSet, U: UnlabeledSet, T: int = 100, variant: str = "plain",
           learner: str = "tree", wilson: WilsonParams | None = None,
           spec: LineSearchSpec = LineSearchSpec(), correction_budget: int = 100,
           seed: int = 0, batch_size: int | None = None, stride: int = 100,
           single_replacement: bool = False, depth_limit=None,
           member_sequence: list[DecisionTree] | None = None) -> BoostResult:
    """Grow an aggregated ensemble for T rounds.

    Every round: hallucinate labels for the clipped unlabeled scores, ask the
    weak-learner oracle for the best member on the weighted mixture, bound
    its correlation with a Wilson interval on L, and give it the weight found
    by a golden-section line search (never increasing the slack).  Variant
    "tc" then re-minimizes the slack over all weights; variant "trees" first
    adds the new tree's internal nodes as Wilson-pruned specialists.  Stops
    early after 5 consecutive zero-weight rounds.

    `member_sequence` (testing hook) replaces the oracle with a fixed list of
    trees so variants can be compared on identical members.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r} (want one of {VARIANTS})")
    if wilson is None:
        wilson = WilsonParams(0.01)
    if member_sequence is not None:
        T = len(member_sequence)

    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xB005]))
    opt_seed = int(rng.integers(2 ** 31))
    stream = None
    batch = U
    if batch_size is not None and batch_size < U.n:
        stream = minibatch_stream(U, batch_size, int(rng.integers(2 ** 31)),
                                  single_replacement=single_replacement)
        batch = next(stream)

    members: list = []
    rows: list[np.ndarray] = []
    sigma = np.zeros(0)
    b = np.zeros(0)
    scores = np.zeros(batch.n)
    gamma = 1.0
    traj: list[tuple[int, float, int]] = [(0, gamma, 0)]
    mow: list = []
    zero_rounds = 0
    stopped = False

    for t in range(1, T + 1):
        if stream is not None and t > 1 and (t - 1) % max(1, stride) == 0:
            batch = next(stream)
            rows = [mem.predict(batch.x) for mem in members]
            scores = np.array(rows).T @ sigma if rows else np.zeros(batch.n)
            gamma = slack(sigma, b, np.array(rows)) if rows else 1.0

        if member_sequence is not None:
            h = member_sequence[t - 1]
        else:
            data = build_oracle_dataset(L, batch, scores)
            h = oracle_best(data, learner=learner, depth_limit=depth_limit)

        new_member = TreeMember(tree=h, tree_index=len(members))
        preds_L = h.predict(L.x)
        errors = int(np.count_nonzero(preds_L != L.y))
        b_new = estimate_b(MemberStats(m_awake=L.m, errors=errors,
                                       n_awake=batch.n, n_total=batch.n), wilson)
        row = h.predict(batch.x)

        members.append(new_member)
        rows.append(row)
        sigma = np.append(sigma, 0.0)
        b = np.append(b, b_new)
        F = np.array(rows)

        direction = np.zeros(sigma.shape[0])
        direction[-1] = 1.0
        step = line_search(sigma, direction, b, F, spec)
        infeasible = False
        if step > 0:
            cand = sigma.copy()
            cand[-1] = step
            cand_gamma = slack(cand, b, F)
            if cand_gamma < 0.0:
                # A feasible game keeps min gamma = 2V >= 0, so dipping below
                # zero certifies the estimated b is over-optimistic for this
                # ensemble.  Reject the update and stop boosting: every
                # further step would inflate weights against constraints no
                # adversary can satisfy.
                infeasible = True
                zero_rounds += 1
            elif cand_gamma < gamma:
                sigma, gamma = cand, cand_gamma
                scores = scores + step * row
                zero_rounds = 0
            else:
                zero_rounds += 1
        else:
            zero_rounds += 1

        if variant == "trees":
            spec_members = [sp for sp in extract_specialists(h, tree_index=new_member.tree_index)
                            if sp.node_id != 0]
            if spec_members:
                stats = []
                spec_rows = []
                visited_L = h.visited_rows(L.x)
                visited_B = h.visited_rows(batch.x)
                full_B = row
                for sp in spec_members:
                    rows_L = visited_L[sp.node_id]
                    rows_B = visited_B[sp.node_id]
                    m_awake = 0 if rows_L is None else int(rows_L.size)
                    err = 0
                    if m_awake:
                        err = int(np.count_nonzero(preds_L[rows_L] != L.y[rows_L]))
                    n_awake = 0 if rows_B is None else int(rows_B.size)
                    stats.append(MemberStats(m_awake=m_awake, errors=err,
                                             n_awake=n_awake, n_total=batch.n))
                    r = np.zeros(batch.n)
                    if rows_B is not None and rows_B.size:
                        r[rows_B] = full_B[rows_B]
                    spec_rows.append(r)
                b_spec = np.array([estimate_b(st, wilson) for st in stats])
                _, _, kept = prune_members(spec_members, b_spec)
                mow.extend(mow_rows(stats, b_spec, kept, wilson,
                                    tree_ids=[new_member.tree_index] * len(spec_members),
                                    node_ids=[sp.node_id for sp in spec_members]))
                for k, sp in enumerate(spec_members):
                    if kept[k]:
                        members.append(sp)
                        rows.append(spec_rows[k])
                        sigma = np.append(sigma, 0.0)
                        b = np.append(b, b_spec[k])
                F = np.array(rows)

        if variant in ("tc", "trees") and not infeasible:
            res = total_correct(b, F, sigma, budget=correction_budget,
                                spec=spec, seed=opt_seed)
            if res.gamma < 0.0:
                infeasible = True  # reject the correction, same reasoning
            elif res.gamma < gamma:
                sigma, gamma = res.sigma, res.gamma
            scores = F.T @ sigma

        # ensemble growth is slack-neutral, so a recorded rise can only be
        # floating-point reassociation noise; carry the minimum forward
        gamma = min(gamma, traj[-1][1])
        traj.append((t, gamma, int(np.count_nonzero(np.abs(scores) >= 1.0))))

        if infeasible or zero_rounds >= CONSECUTIVE_ZERO_STEPS:
            stopped = True
            break

    predictor = EnsemblePredictor(members=members, sigma=sigma, b=b)
    return BoostResult(predictor=predictor, sigma=sigma, b=b, members=members,
                       trajectory=traj, mow=mow, stopped_early=stopped,
                       scores=scores)
