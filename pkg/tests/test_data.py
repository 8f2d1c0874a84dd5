"""Dataset containers and the unlabeled minibatch stream."""

import numpy as np
import pytest

from muffle.data import LabeledSet, UnlabeledSet, as_label_vector, minibatch_stream


def test_labeled_set_validates_labels():
    x = np.zeros((3, 2))
    LabeledSet(x, np.array([1.0, -1.0, 1.0]))
    with pytest.raises(ValueError):
        LabeledSet(x, np.array([1.0, 0.0, -1.0]))
    with pytest.raises(ValueError):
        LabeledSet(x, np.array([1.0, -1.0]))


def test_as_label_vector_rejects_non_binary():
    with pytest.raises(ValueError):
        as_label_vector([1, 2, -1])


def test_unlabeled_set_has_no_label_attribute():
    # the type-level boundary: hidden labels simply do not exist here
    u = UnlabeledSet(np.zeros((4, 2)))
    assert not hasattr(u, "y")
    assert not hasattr(u, "labels")
    assert u.n == 4


def test_minibatch_stream_is_endless_and_in_range():
    u = UnlabeledSet(np.arange(20.0).reshape(10, 2))
    stream = minibatch_stream(u, 4, seed=0)
    for _ in range(50):
        batch = next(stream)
        assert batch.n == 4
        assert batch.x.shape == (4, 2)


def test_minibatch_stream_full_batch_is_whole_set():
    u = UnlabeledSet(np.arange(12.0).reshape(6, 2))
    batch = next(minibatch_stream(u, 6, seed=1))
    assert sorted(batch.x[:, 0].tolist()) == sorted(u.x[:, 0].tolist())


def test_minibatch_stream_seeded_determinism():
    u = UnlabeledSet(np.random.default_rng(2).normal(size=(30, 3)))
    a = minibatch_stream(u, 5, seed=42)
    b = minibatch_stream(u, 5, seed=42)
    for _ in range(10):
        assert np.array_equal(next(a).x, next(b).x)


def test_minibatch_frequency_within_three_sigma():
    # size-1 batches from 10 elements: each element ~ Binomial(10000, 0.1)
    u = UnlabeledSet(np.arange(10.0).reshape(10, 1))
    stream = minibatch_stream(u, 1, seed=7)
    counts = np.zeros(10)
    for _ in range(10000):
        counts[int(next(stream).x[0, 0])] += 1
    mean, sd = 1000.0, np.sqrt(10000 * 0.1 * 0.9)
    assert np.all(np.abs(counts - mean) <= 3 * sd)


def test_minibatch_stream_rejects_bad_sizes():
    u = UnlabeledSet(np.zeros((5, 1)))
    with pytest.raises(ValueError):
        minibatch_stream(u, 0, seed=0)
    with pytest.raises(ValueError):
        minibatch_stream(u, 6, seed=0)


def test_single_replacement_changes_at_most_one_slot():
    u = UnlabeledSet(np.arange(40.0).reshape(20, 2))
    stream = minibatch_stream(u, 6, seed=3, single_replacement=True)
    prev = next(stream).x
    for _ in range(30):
        cur = next(stream).x
        differing = np.any(cur != prev, axis=1).sum()
        assert differing <= 1
        prev = cur
