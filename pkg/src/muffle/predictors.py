"""Predictor objects shared by the aggregation algorithms and baselines."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from muffle.core import clip, hard_label
from muffle.data import as_feature_matrix
from muffle.trees import build_prediction_matrix


@dataclass
class EnsemblePredictor:
    """Weighted vote of tree/specialist members, clipped to [-1, +1].

    `b` keeps the correlation bounds the weights were fit against (None for
    baselines that never estimate them).
    """

    members: list
    sigma: np.ndarray
    b: np.ndarray | None = None

    def __post_init__(self):
        self.sigma = np.asarray(self.sigma, dtype=np.float64).ravel()
        if self.b is not None:
            self.b = np.asarray(self.b, dtype=np.float64).ravel()
        if self.sigma.shape[0] != len(self.members):
            raise ValueError(
                f"{len(self.members)} members but {self.sigma.shape[0]} weights")

    @property
    def is_abstaining(self) -> bool:
        """True when every score is identically zero (no members, or none
        with weight), i.e. the vote never takes a position."""
        return len(self.members) == 0 or not np.any(self.sigma)

    def raw_scores(self, X) -> np.ndarray:
        """Unclipped ensemble scores <h(x), sigma>."""
        X = as_feature_matrix(X)
        if not self.members:
            return np.zeros(X.shape[0])
        F, _ = build_prediction_matrix(self.members, X)
        return F.T @ self.sigma

    def predict(self, X) -> np.ndarray:
        return clip(self.raw_scores(X))

    def hard_labels(self, X) -> np.ndarray:
        return hard_label(self.raw_scores(X))


@dataclass
class LinearPredictor:
    """Affine scorer over internally standardized features."""

    weights: np.ndarray
    intercept: float
    mean: np.ndarray
    scale: np.ndarray
    loss_history: list = field(default_factory=list)

    def raw_scores(self, X) -> np.ndarray:
        X = as_feature_matrix(X)
        return (X - self.mean) / self.scale @ self.weights + self.intercept

    def predict(self, X) -> np.ndarray:
        return self.raw_scores(X)

    def hard_labels(self, X) -> np.ndarray:
        return hard_label(self.raw_scores(X))
