"""Order-of-appearance partitions and their summary statistics."""
from dataclasses import dataclass

import numpy as np

from .exceptions import DomainError

__all__ = [
    "Partition",
    "PartitionStats",
    "canonicalize",
    "stats",
    "restrict",
    "size_trajectories",
    "enumerate_partitions",
]


class Partition:
    """Allocation sequence ``c_1..c_n`` with clusters labelled 1, 2, ... by first use.

    Labels are stored 1-based in a read-only integer array.
    """

    __slots__ = ("_labels",)

    def __init__(self, labels, validate=True):
        arr = np.array(labels, dtype=np.int64)
        if arr.ndim != 1 or arr.size == 0:
            raise DomainError("a partition needs a nonempty 1-d label sequence")
        if validate:
            running = np.maximum.accumulate(arr)
            if arr[0] != 1 or np.any(arr[1:] > running[:-1] + 1) or np.any(arr < 1):
                raise DomainError("labels are not in order-of-appearance canonical form")
        arr.setflags(write=False)
        self._labels = arr

    @property
    def labels(self):
        return self._labels

    @property
    def n(self):
        return self._labels.size

    @property
    def k(self):
        return int(self._labels.max())

    def sizes(self):
        return np.bincount(self._labels, minlength=self.k + 1)[1:]

    def __len__(self):
        return self._labels.size

    def __iter__(self):
        return iter(self._labels.tolist())

    def __getitem__(self, idx):
        return self._labels[idx]

    def __eq__(self, other):
        if isinstance(other, Partition):
            return np.array_equal(self._labels, other._labels)
        return NotImplemented

    def __hash__(self):
        return hash(self._labels.tobytes())

    def __repr__(self):
        shown = self._labels[:10].tolist()
        tail = ", ..." if self.n > 10 else ""
        return f"Partition({shown}{tail}; n={self.n}, k={self.k})"


@dataclass(frozen=True)
class PartitionStats:
    n: int
    k: int
    sizes: np.ndarray
    size_histogram: dict

    def proportion(self, r):
        return self.size_histogram.get(r, 0) / self.k


def canonicalize(raw_labels):
    """Relabel arbitrary hashable tokens by order of first appearance."""
    seen = {}
    out = []
    for tok in raw_labels:
        out.append(seen.setdefault(tok, len(seen) + 1))
    if not out:
        raise DomainError("cannot canonicalize an empty sequence")
    return Partition(out, validate=False)


def stats(p):
    sizes = p.sizes()
    r, counts = np.unique(sizes, return_counts=True)
    hist = {int(a): int(b) for a, b in zip(r, counts)}
    return PartitionStats(n=p.n, k=p.k, sizes=sizes, size_histogram=hist)


def restrict(p, m):
    """Prefix of length ``m``; prefixes of canonical sequences stay canonical."""
    if not 1 <= m <= p.n:
        raise DomainError(f"cannot restrict a partition of {p.n} items to {m}")
    return Partition(p.labels[:m], validate=False)


def size_trajectories(p):
    """Size of each cluster after every prefix ``1..n``.

    Returns a dict mapping label j to an int array ``a`` with ``a[i]`` the size
    of cluster j among the first ``i+1`` items.
    """
    labels = p.labels
    out = {}
    for j in range(1, p.k + 1):
        out[j] = np.cumsum(labels == j)
    return out


def size_matrix(labels, k=None):
    """Dense (n, K) matrix of cluster sizes after every prefix; column j is cluster j+1."""
    labels = np.asarray(labels)
    k = int(labels.max()) if k is None else k
    onehot = np.zeros((labels.size, k), dtype=np.int64)
    onehot[np.arange(labels.size), labels - 1] = 1
    return np.cumsum(onehot, axis=0)


def enumerate_partitions(n):
    """Yield every canonical partition of ``[n]`` (restricted growth strings)."""
    if n < 1:
        raise DomainError("n must be positive")

    def grow(prefix, top):
        if len(prefix) == n:
            yield Partition(prefix, validate=False)
            return
        for c in range(1, top + 2):
            yield from grow(prefix + [c], max(top, c))

    yield from grow([1], 1)
