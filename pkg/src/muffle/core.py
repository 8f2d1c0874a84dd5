"""Core quantities of the aggregation game.

An ensemble of p members predicts on n unlabeled examples, giving a matrix
F with entries in [-1, +1] (rows = members, columns = examples; a specialist
that abstains contributes 0).  Given a vector b of lower bounds on the
members' label correlations, the aggregation weights sigma >= 0 are scored by
the slack function

    gamma(sigma) = -<b, sigma> + (1/n) * sum_j Psi(<x_j, sigma>)

where x_j is column j of F and Psi(t) = max(1, |t|) is the potential well.
Half the minimal slack equals the value of the underlying prediction game,
and the minimizing weights yield the predictor g(x) = clip(<x, sigma>).
"""

from __future__ import annotations

import numpy as np


def clip(x):
    """Clamp to [-1, +1].  Works on scalars and arrays."""
    return np.clip(x, -1.0, 1.0)


def potential(x):
    """Potential well Psi(x) = max(1, |x|)."""
    return np.maximum(1.0, np.abs(x))


def _check_game(sigma, b, F):
    sigma = np.asarray(sigma, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    F = np.asarray(F, dtype=np.float64)
    if F.ndim != 2:
        raise ValueError(f"prediction matrix must be 2-D, got ndim={F.ndim}")
    p, n = F.shape
    if n < 1:
        raise ValueError("need at least one unlabeled column")
    if sigma.shape[0] != p or b.shape[0] != p:
        raise ValueError(
            f"size mismatch: F has {p} rows, sigma has {sigma.shape[0]}, "
            f"b has {b.shape[0]}"
        )
    return sigma, b, F


def score(sigma, column) -> float:
    """Ensemble score <x, sigma> of one unlabeled column x."""
    sigma = np.asarray(sigma, dtype=np.float64).ravel()
    column = np.asarray(column, dtype=np.float64).ravel()
    if sigma.shape != column.shape:
        raise ValueError(f"sigma has {sigma.shape[0]} entries, column {column.shape[0]}")
    return float(np.dot(column, sigma))


def margins(sigma, F) -> np.ndarray:
    """All n ensemble scores F^T sigma."""
    F = np.asarray(F, dtype=np.float64)
    return F.T @ np.asarray(sigma, dtype=np.float64).ravel()


def slack(sigma, b, F) -> float:
    """Slack gamma(sigma); gamma(0) = 1 regardless of the ensemble."""
    sigma, b, F = _check_game(sigma, b, F)
    if F.shape[0] == 0:
        return 1.0
    return float(-np.dot(b, sigma) + potential(F.T @ sigma).mean())


def slack_from_scores(sigma, b, scores) -> float:
    """Slack evaluated from cached scores (must equal F^T sigma)."""
    sigma = np.asarray(sigma, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    scores = np.asarray(scores, dtype=np.float64).ravel()
    if scores.size < 1:
        raise ValueError("need at least one unlabeled column")
    if sigma.size == 0:
        return float(potential(scores).mean())
    return float(-np.dot(b, sigma) + potential(scores).mean())


def slack_subgradient(sigma, b, F) -> np.ndarray:
    """One subgradient of the slack at sigma.

    Component i is -b_i + (1/n) sum_j F_ij * sgn(s_j) * 1{|s_j| >= 1} with
    s = F^T sigma; the indicator includes the boundary |s_j| = 1 and
    sgn(0) = 0.
    """
    sigma, b, F = _check_game(sigma, b, F)
    if F.shape[0] == 0:
        return np.zeros(0)
    s = F.T @ sigma
    active = np.sign(s) * (np.abs(s) >= 1.0)
    return -b + (F @ active) / F.shape[1]


def hallucinate(scores):
    """Adversarial labels for unlabeled scores: -sgn(s) where |s| >= 1, else 0.

    Hedged examples (|s| < 1) get 0, meaning "unused"; clipped examples get
    the label the current ensemble is betting against.
    """
    s = np.asarray(scores, dtype=np.float64)
    out = -np.sign(s) * (np.abs(s) >= 1.0)
    if np.isscalar(scores) or s.ndim == 0:
        return float(out)
    return out


def predict(sigma, column) -> float:
    """Aggregated prediction clip(<x, sigma>) in [-1, +1]."""
    return float(clip(score(sigma, column)))


def hard_label(value):
    """Sign with ties broken to +1."""
    v = np.asarray(value, dtype=np.float64)
    out = np.where(v >= 0.0, 1.0, -1.0)
    if np.isscalar(value) or v.ndim == 0:
        return float(out)
    return out
