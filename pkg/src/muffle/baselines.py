"""Supervised baselines: AdaBoost, logistic regression, random forest vote."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from muffle.boosters import fit_stump
from muffle.data import LabeledSet, as_feature_matrix
from muffle.predictors import EnsemblePredictor, LinearPredictor
from muffle.trees import Forest, TreeMember, fit_forest, fit_tree

PERFECT_ALPHA = 0.5 * np.log(1e6)  # weight cap for a zero-error weak learner


@dataclass
class AdaBoostResult:
    predictor: EnsemblePredictor
    alphas: list[float] = field(default_factory=list)
    round_errors: list[float] = field(default_factory=list)

    @property
    def error_bound(self) -> float:
        """Training-error bound prod_t 2 sqrt(eps_t (1 - eps_t))."""
        out = 1.0
        for e in self.round_errors:
            out *= 2.0 * np.sqrt(e * (1.0 - e))
        return float(out)


def adaboost(L: LabeledSet, T: int = 100, learner: str = "stump",
             depth_limit=None) -> AdaBoostResult:
    """Discrete AdaBoost with reweighted weak learners.

    alpha_t = (1/2) ln((1 - eps_t) / eps_t).  Stops early when the weak
    learner does no better than chance (eps >= 1/2, round discarded) or when
    it is perfect (kept with the capped weight, nothing left to reweight).
    """
    if L.m == 0:
        raise ValueError("empty training set")
    if T < 1:
        raise ValueError("need at least one round")
    w = np.full(L.m, 1.0 / L.m)
    members: list[TreeMember] = []
    alphas: list[float] = []
    errors: list[float] = []
    for t in range(T):
        if learner == "stump":
            h, _ = fit_stump(L.x, L.y, w)
        else:
            h = fit_tree(L.x, L.y, w, depth_limit=depth_limit)
        pred = h.predict(L.x)
        miss = pred != L.y
        eps = float(w[miss].sum())
        if eps >= 0.5:
            break
        if eps <= 0.0:
            members.append(TreeMember(tree=h, tree_index=len(members)))
            alphas.append(PERFECT_ALPHA)
            errors.append(0.0)
            break
        alpha = 0.5 * np.log((1.0 - eps) / eps)
        members.append(TreeMember(tree=h, tree_index=len(members)))
        alphas.append(float(alpha))
        errors.append(eps)
        w = w * np.exp(-alpha * L.y * pred)
        w = w / w.sum()
    predictor = EnsemblePredictor(members=members, sigma=np.array(alphas), b=None)
    return AdaBoostResult(predictor=predictor, alphas=alphas, round_errors=errors)


def logistic_fit(L: LabeledSet, epochs: int = 500, lr: float = 0.1) -> LinearPredictor:
    """Full-batch gradient descent on mean logistic loss, with an intercept.

    Features are standardized internally (training mean and scale are kept
    on the predictor).  The loss history is recorded per epoch; with
    lr <= 0.1 on standardized features the descent is monotone.
    """
    if L.m == 0:
        raise ValueError("empty training set")
    mean = L.x.mean(axis=0)
    scale = L.x.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    xs = (L.x - mean) / scale
    w = np.zeros(L.dim)
    c = 0.0
    history = []
    for _ in range(epochs):
        margin = L.y * (xs @ w + c)
        history.append(float(np.logaddexp(0.0, -margin).mean()))
        pull = L.y * expit(-margin)  # d loss / d margin, negated
        w = w + lr * (xs.T @ pull) / L.m
        c = c + lr * float(pull.mean())
    margin = L.y * (xs @ w + c)
    history.append(float(np.logaddexp(0.0, -margin).mean()))
    return LinearPredictor(weights=w, intercept=c, mean=mean, scale=scale,
                           loss_history=history)


def rf_baseline(L: LabeledSet, p: int = 100, seed: int = 0,
                depth_limit=None) -> EnsemblePredictor:
    """Bootstrap forest whose mean vote in [-1, 1] is the ranking score."""
    forest = fit_forest(L.x, L.y, p, seed, depth_limit=depth_limit)
    members = [TreeMember(tree=t, tree_index=i) for i, t in enumerate(forest.trees)]
    return EnsemblePredictor(members=members, sigma=np.full(p, 1.0 / p), b=None)


def forest_score(forest: Forest, x):
    """Mean over trees of their +-1 votes.  A single feature row (1-D input)
    gives a scalar in [-1, 1]; a matrix gives one score per row."""
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == 1
    X = arr.reshape(1, -1) if single else as_feature_matrix(arr)
    votes = np.stack([t.predict(X) for t in forest.trees])
    out = votes.mean(axis=0)
    return float(out[0]) if single else out
