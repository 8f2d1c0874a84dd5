"""Mow a random forest down to its trustworthy nodes, then aggregate.

The labeled data is split once: a quarter grows a bootstrap forest and the
remaining three quarters estimate, for every tree and every internal node
specialist, a Wilson lower bound on its label correlation.  The full variant
keeps only members with a strictly positive bound ("mowing"); the roots
variant keeps exactly the p whole trees no matter their bound and discards
all other specialists.  Aggregation weights then come from minimizing the
slack over the unlabeled scores, starting from zero weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from muffle.data import LabeledSet, UnlabeledSet, minibatch_stream
from muffle.estimation import (MemberStats, WilsonParams, estimate_b,
                               mow_rows, prune_members)
from muffle.optimize import LineSearchSpec, minimize_slack
from muffle.predictors import EnsemblePredictor
from muffle.trees import TreeMember, build_prediction_matrix, extract_specialists, fit_forest

VARIANTS = ("full", "roots")


@dataclass(frozen=True)
class HedgeMowerConfig:
    p: int = 100
    alpha: float = 0.01
    variant: str = "full"
    budget: int = 500
    depth_limit: int | None = None
    min_leaf: int = 1
    line: LineSearchSpec = LineSearchSpec()
    batch_size: int | None = None
    stride: int = 100
    single_replacement: bool = False


@dataclass
class HedgeMowerResult:
    predictor: EnsemblePredictor
    sigma: np.ndarray
    b: np.ndarray
    members: list
    mow: list
    kept: int
    total: int
    trajectory: list[tuple[int, float, int]]
    abstaining: bool = False
    train_rows: int = 0
    estimate_rows: int = 0
    trees: int = 0


def _member_stats(members, L_est: LabeledSet, n_awake, n_total):
    """Awake counts and disagreement counts on the estimation set."""
    stats = []
    if L_est.m:
        P, _ = build_prediction_matrix(members, L_est.x)
    else:
        P = np.zeros((len(members), 0))
    for i in range(len(members)):
        row = P[i]
        awake = row != 0.0
        m_awake = int(awake.sum())
        errors = int(np.count_nonzero(row[awake] != L_est.y[awake])) if m_awake else 0
        stats.append(MemberStats(m_awake=m_awake, errors=errors,
                                 n_awake=int(n_awake[i]), n_total=int(n_total)))
    return stats


def run_hedgemower(L: LabeledSet, U: UnlabeledSet, config: HedgeMowerConfig,
                   seed: int = 0) -> HedgeMowerResult:
    if config.variant not in VARIANTS:
        raise ValueError(f"unknown variant {config.variant!r} (want one of {VARIANTS})")
    if L.m < 1:
        raise ValueError("need at least one labeled example")
    if U.n < 1:
        raise ValueError("need at least one unlabeled example")

    ss = np.random.SeedSequence([seed, 0x4ED6E])
    part_seed, forest_seed, opt_seed, stream_seed = (
        int(s.generate_state(1)[0]) for s in ss.spawn(4))

    # quarter to grow, three quarters to measure
    m1 = max(1, L.m // 4)
    perm = np.random.default_rng(part_seed).permutation(L.m)
    grow, measure = perm[:m1], perm[m1:]
    L_grow = LabeledSet(L.x[grow], L.y[grow])
    L_est = LabeledSet(L.x[measure], L.y[measure]) if measure.size else \
        LabeledSet(np.zeros((0, L.dim)), np.zeros(0))

    forest = fit_forest(L_grow.x, L_grow.y, config.p, forest_seed,
                        depth_limit=config.depth_limit, min_leaf=config.min_leaf)

    members: list = []
    root_mask: list[bool] = []
    for t, tree in enumerate(forest.trees):
        specs = extract_specialists(tree, tree_index=t)
        if specs:
            members.extend(specs)
            root_mask.extend(nid == 0 for nid in (sp.node_id for sp in specs))
        else:  # a single-leaf tree has no internal nodes; keep it whole
            members.append(TreeMember(tree=tree, tree_index=t))
            root_mask.append(True)
    root_mask = np.array(root_mask, dtype=bool)

    stream = None
    batch = U
    if config.batch_size is not None and config.batch_size < U.n:
        stream = minibatch_stream(U, config.batch_size, stream_seed,
                                  single_replacement=config.single_replacement)
        batch = next(stream)

    F, n_awake = build_prediction_matrix(members, batch.x)
    params = WilsonParams(config.alpha)
    stats = _member_stats(members, L_est, n_awake, batch.n)
    b_all = np.array([estimate_b(st, params) for st in stats])
    # the unlabeled-independent part of each bound, for streaming refreshes
    with np.errstate(divide="ignore", invalid="ignore"):
        c_lower = np.where(n_awake > 0, b_all * batch.n / np.maximum(n_awake, 1), b_all)

    if config.variant == "roots":
        kept = root_mask.copy()  # whole trees stay regardless of their bound
    else:
        _, _, kept = prune_members(members, b_all)

    rows = mow_rows(stats, b_all, kept, params,
                    tree_ids=[m.tree_index for m in members],
                    node_ids=[m.node_id for m in members])

    survivors = [m for m, k in zip(members, kept) if k]
    result = HedgeMowerResult(
        predictor=EnsemblePredictor(members=[], sigma=np.zeros(0), b=np.zeros(0)),
        sigma=np.zeros(0), b=np.zeros(0), members=survivors, mow=rows,
        kept=int(kept.sum()), total=len(members),
        trajectory=[(0, 1.0, 0)], abstaining=True,
        train_rows=L_grow.m, estimate_rows=L_est.m, trees=config.p)
    if not survivors:
        return result  # everything mowed: abstain rather than guess

    b_kept = b_all[kept]
    F_kept = F[kept]

    refresh = None
    if stream is not None:
        c_kept = c_lower[kept]

        def refresh():
            nb = next(stream)
            Fb, nb_awake = build_prediction_matrix(survivors, nb.x)
            return c_kept * nb_awake / nb.n, Fb

    descent = minimize_slack(b_kept, F_kept, budget=config.budget,
                             spec=config.line, seed=opt_seed,
                             refresh=refresh, stride=config.stride)

    result.predictor = EnsemblePredictor(members=survivors, sigma=descent.sigma,
                                         b=b_kept)
    result.sigma = descent.sigma
    result.b = b_kept
    result.trajectory = descent.trajectory
    # descent can leave every weight at zero (e.g. survivors kept by fiat
    # with nonpositive bounds); the vote then still never takes a position
    result.abstaining = result.predictor.is_abstaining
    return result
