import numpy as np
import pytest
from hypothesis import given, strategies as st

from _oracles import all_partitions
from microcluster.exceptions import DomainError
from microcluster.partition import (
    Partition,
    canonicalize,
    enumerate_partitions,
    restrict,
    size_matrix,
    size_trajectories,
    stats,
)

tokens = st.lists(st.sampled_from("abcdefgh"), min_size=1, max_size=40)


@pytest.mark.parametrize(
    "raw, expected",
    [(["b", "a", "b"], [1, 2, 1]), ([7, 7, 7], [1, 1, 1]), (["x", "y", "z", "y"], [1, 2, 3, 2])],
)
def test_canonicalize_examples(raw, expected):
    assert canonicalize(raw).labels.tolist() == expected


def test_canonicalize_empty():
    with pytest.raises(DomainError):
        canonicalize([])


def test_partition_rejects_noncanonical():
    for bad in ([2, 1], [1, 3], [0], [1, 1, 3]):
        with pytest.raises(DomainError):
            Partition(bad)


@given(tokens)
def test_canonicalize_idempotent_and_faithful(raw):
    p = canonicalize(raw)
    assert canonicalize(p.labels.tolist()) == p
    for i in range(len(raw)):
        for j in range(len(raw)):
            assert (raw[i] == raw[j]) == (p[i] == p[j])


@pytest.mark.parametrize(
    "labels, k, sizes, hist",
    [([1, 2, 1], 2, [2, 1], {1: 1, 2: 1}), ([1, 1, 1, 1], 1, [4], {4: 1}), ([1, 2, 3], 3, [1, 1, 1], {1: 3})],
)
def test_stats_examples(labels, k, sizes, hist):
    s = stats(Partition(labels))
    assert (s.n, s.k, s.sizes.tolist(), s.size_histogram) == (len(labels), k, sizes, hist)


@given(tokens)
def test_stats_identities(raw):
    s = stats(canonicalize(raw))
    assert s.sizes.sum() == s.n
    assert sum(s.size_histogram.values()) == s.k
    assert sum(r * c for r, c in s.size_histogram.items()) == s.n
    assert sum(s.proportion(r) for r in s.size_histogram) == pytest.approx(1.0)


@pytest.mark.parametrize(
    "labels, m, expected",
    [([1, 2, 1, 3], 2, [1, 2]), ([1, 1, 2], 3, [1, 1, 2]), ([1, 2, 2, 1], 3, [1, 2, 2])],
)
def test_restrict_examples(labels, m, expected):
    assert restrict(Partition(labels), m).labels.tolist() == expected


def test_restrict_range():
    p = Partition([1, 2])
    for m in (0, 3):
        with pytest.raises(DomainError):
            restrict(p, m)


@given(tokens, st.data())
def test_restrict_consistency(raw, data):
    p = canonicalize(raw)
    assert restrict(p, p.n) == p
    m = data.draw(st.integers(1, p.n))
    k = data.draw(st.integers(1, m))
    assert restrict(restrict(p, m), k) == restrict(p, k)
    assert stats(restrict(p, m)).n == m
    Partition(restrict(p, m).labels)  # still canonical


def test_size_trajectories_examples():
    t = size_trajectories(Partition([1, 2, 1]))
    assert t[1].tolist() == [1, 1, 2] and t[2].tolist() == [0, 1, 1]
    assert size_trajectories(Partition([1, 1]))[1].tolist() == [1, 2]
    assert all(v[-1] == 1 for v in size_trajectories(Partition([1, 2, 3])).values())


@given(tokens)
def test_size_trajectories_end_at_sizes(raw):
    p = canonicalize(raw)
    traj = size_trajectories(p)
    assert [traj[j][-1] for j in range(1, p.k + 1)] == p.sizes().tolist()
    mat = size_matrix(p.labels)
    for j in range(1, p.k + 1):
        np.testing.assert_array_equal(mat[:, j - 1], traj[j])


def test_enumerate_partitions_bell_numbers():
    bell = [1, 2, 5, 15, 52, 203]
    for n, b in enumerate(bell, start=1):
        got = [p.labels.tolist() for p in enumerate_partitions(n)]
        assert len(got) == b
        assert sorted(got) == sorted(all_partitions(n))
