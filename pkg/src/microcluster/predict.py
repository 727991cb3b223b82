"""Posterior-predictive continuation of an observed partition and its scoring."""
from dataclasses import dataclass

import numpy as np

from .exceptions import DomainError
from .generative import LatentState, continue_state, continue_two_param_crp
from .partition import Partition

__all__ = [
    "PredictiveSample",
    "predict_continuation",
    "predict_two_param_crp",
    "training_trajectories",
    "l2_error",
    "error_summary",
    "size_proportions",
    "size_proportion_bands",
]


@dataclass(frozen=True)
class PredictiveSample:
    continuation: Partition
    n_observed: int
    source_particle: int = None

    @property
    def m(self):
        return self.continuation.n - self.n_observed

    def trajectories(self, k=None):
        """Sizes of clusters ``1..k`` after each of the predicted items, shape (m, k).

        ``k`` defaults to the number of clusters in the observed prefix.
        """
        return training_trajectories(self.continuation, self.n_observed, k)


def training_trajectories(p, n_train, k=None):
    labels = p.labels if isinstance(p, Partition) else np.asarray(p)
    prefix = labels[:n_train]
    k = int(prefix.max()) if k is None else k
    start = np.bincount(prefix, minlength=k + 1)[1 : k + 1]
    test = labels[n_train:]
    hits = np.zeros((test.size, k), dtype=np.int64)
    rows = np.nonzero(test <= k)[0]
    hits[rows, test[rows] - 1] = 1
    return start + np.cumsum(hits, axis=0)


def predict_continuation(system, m, params, rng, n_samples=100):
    """Predictive continuations of the observed partition by ``m`` items.

    Each sample picks one particle with probability proportional to its weight
    and runs the model forward from that particle's latent state.
    """
    if m < 0:
        raise DomainError("m must be nonnegative")
    labels = np.asarray(system.labels)
    n = labels.size
    idx = rng.choice(system.n_particles, size=n_samples, p=system.normalized_weights())
    paths = system.arrival_paths()
    out = []
    for i in idx:
        state = LatentState(paths[i], system.thetas[i, : system.k], labels)
        cont = continue_state(state, m, params, rng)
        out.append(PredictiveSample(Partition(cont.labels, validate=False), n, int(i)))
    return out


def predict_two_param_crp(p, m, crp, rng, n_samples=100):
    return [PredictiveSample(continue_two_param_crp(p, m, crp, rng), p.n) for _ in range(n_samples)]


def l2_error(samples, truth, n_train):
    """Mean squared error of predicted training-cluster sizes, one value per sample.

    Only clusters present among the first ``n_train`` items enter the average.
    """
    truth_labels = truth.labels if isinstance(truth, Partition) else np.asarray(truth)
    n = truth_labels.size
    n_test = n - n_train
    if n_test < 1:
        raise DomainError("the truth must extend beyond the training prefix")
    prefix = truth_labels[:n_train]
    k = int(prefix.max())
    reference = training_trajectories(truth_labels, n_train, k)
    errors = []
    for smp in samples:
        labels = smp.continuation.labels
        if labels.size != n or not np.array_equal(labels[:n_train], prefix):
            raise DomainError("predicted continuation does not extend the observed prefix")
        diff = training_trajectories(labels, n_train, k) - reference
        errors.append(float(np.sum(diff.astype(float) ** 2) / (k * n_test)))
    return np.asarray(errors)


def error_summary(errors, low=0.05, high=0.95):
    errors = np.asarray(errors, dtype=float)
    return {
        "mean": float(errors.mean()),
        f"q{int(round(low * 100)):02d}": float(np.quantile(errors, low)),
        f"q{int(round(high * 100)):02d}": float(np.quantile(errors, high)),
    }


def size_proportions(p, r_max):
    """``K_{n,r} / K_n`` for ``r = 1..r_max``."""
    sizes = p.sizes()
    counts = np.bincount(sizes, minlength=r_max + 1)[1 : r_max + 1]
    return counts / sizes.size


def size_proportion_bands(samples, r_max, level=0.95):
    """Pointwise predictive bands for the proportion of clusters of each size.

    Returns an (r_max, 5) array with columns r, lower, median, upper, mean.
    """
    if len(samples) < 20:
        raise DomainError("at least 20 predictive samples are needed for bands")
    props = np.array([size_proportions(s.continuation, r_max) for s in samples])
    tail = (1.0 - level) / 2.0
    lower, median, upper = np.quantile(props, [tail, 0.5, 1.0 - tail], axis=0)
    r = np.arange(1, r_max + 1)
    return np.column_stack([r, lower, median, upper, props.mean(axis=0)])
