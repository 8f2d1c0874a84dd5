"""Containers for labeled and unlabeled example sets.

Unlabeled data is represented by a type that simply has no label field, so
nothing downstream can read hidden labels by accident: evaluation code keeps
them in a separate array that no training entry point accepts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def as_feature_matrix(x) -> np.ndarray:
    """Coerce to a 2-D float64 array (rows are examples)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    if x.ndim != 2:
        raise ValueError(f"feature matrix must be 1-D or 2-D, got ndim={x.ndim}")
    return x


def as_label_vector(y) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64).ravel()
    bad = ~np.isin(y, (-1.0, 1.0))
    if bad.any():
        raise ValueError(f"labels must be -1 or +1, got {y[bad][:5]}")
    return y


@dataclass(frozen=True)
class LabeledSet:
    """Feature rows plus their +-1 labels."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", as_feature_matrix(self.x))
        object.__setattr__(self, "y", as_label_vector(self.y))
        if self.x.shape[0] != self.y.shape[0]:
            raise ValueError(
                f"{self.x.shape[0]} feature rows but {self.y.shape[0]} labels"
            )

    @property
    def m(self) -> int:
        return self.x.shape[0]

    @property
    def dim(self) -> int:
        return self.x.shape[1]


@dataclass(frozen=True)
class UnlabeledSet:
    """Feature rows only.  There is deliberately no label attribute."""

    x: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", as_feature_matrix(self.x))

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def dim(self) -> int:
        return self.x.shape[1]


def minibatch_stream(U: UnlabeledSet, batch_size: int, seed: int,
                     single_replacement: bool = False):
    """Endless generator of unlabeled minibatches for streaming optimization.

    Default mode draws each batch uniformly without replacement, independent
    across batches.  With single_replacement=True the batch instead evolves
    one element at a time: each step overwrites one random slot with a row
    drawn uniformly from all of U (duplicates are possible, as in a
    reservoir-style stream).  Deterministic given the seed.
    """
    if not 1 <= batch_size <= U.n:
        raise ValueError(f"batch size must be in [1, {U.n}], got {batch_size}")
    rng = np.random.default_rng(seed)

    def batches():
        if single_replacement:
            current = rng.choice(U.n, size=batch_size, replace=False)
            while True:
                yield UnlabeledSet(U.x[current])
                current[rng.integers(batch_size)] = rng.integers(U.n)
        else:
            while True:
                yield UnlabeledSet(
                    U.x[rng.choice(U.n, size=batch_size, replace=False)])

    return batches()
