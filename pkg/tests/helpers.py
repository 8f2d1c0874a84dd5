"""Shared synthetic data generators for the test suite."""

import numpy as np

from muffle.data import LabeledSet, UnlabeledSet


def gaussian_pair(m, n, seed, dim=2, sep=2.0):
    """Two spherical Gaussian classes with mean separation `sep`.

    Returns (L, U, hidden_labels): m labeled rows, n unlabeled rows whose
    true labels ride along for evaluation only.
    """
    rng = np.random.default_rng(seed)
    offset = (sep / 2.0) / np.sqrt(dim)

    def draw(k):
        y = rng.choice([-1.0, 1.0], size=k)
        x = rng.normal(size=(k, dim)) + offset * y[:, None]
        return x, y

    xl, yl = draw(m)
    xu, yu = draw(n)
    return LabeledSet(xl, yl), UnlabeledSet(xu), yu


def cluster_line(m, n, seed, gap=4.0):
    """Separable 1-D clusters: negatives near 0, positives near `gap`.

    A single stump at gap/2 is Bayes-optimal, so boosting should reach a
    perfect transductive ranking.
    """
    rng = np.random.default_rng(seed)

    def draw(k):
        y = rng.choice([-1.0, 1.0], size=k)
        x = rng.normal(scale=0.3, size=(k, 1)) + (y[:, None] > 0) * gap
        return x, y

    xl, yl = draw(m)
    xu, yu = draw(n)
    return LabeledSet(xl, yl), UnlabeledSet(xu), yu


def random_game(rng, n_max=4, p_max=2):
    """A random small prediction game with b drawn below the feasibility cap.

    Entries of F are +-1, so the adversary can achieve correlation vector
    F @ z / n for any z in the box; b is sampled strictly inside what
    z = (mean direction) can satisfy, keeping the constraint set nonempty.
    """
    n = int(rng.integers(1, n_max + 1))
    p = int(rng.integers(1, p_max + 1))
    F = rng.choice([-1.0, 1.0], size=(p, n))
    # z0 in the box interior; every b below F @ z0 / n is feasible
    z0 = rng.uniform(-0.9, 0.9, size=n)
    cap = F @ z0 / n
    b = cap - rng.uniform(0.05, 0.5, size=p)
    b = np.maximum(b, -1.0 + 1e-6)
    return b, F
