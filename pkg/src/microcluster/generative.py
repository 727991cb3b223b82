"""Sequential simulation of the non-exchangeable partition model and its CRP baselines.

Given the first ``n-1`` points, the next arrival time has survival function

    S(t) = exp(-(I(t) - I(t0))) * prod_j ((zeta + t0 - theta_j) / (zeta + t - theta_j)) ** (m_j - sigma)

so it is the minimum of independent competing clocks: one per existing cluster
(hazard ``(m_j - sigma) / (zeta + t - theta_j)``) and one for a new cluster
(hazard ``lambda(t)``). The winning clock gives the allocation with exactly the
predictive probabilities. Arrival times are therefore drawn by inverting each
clock in turn: the cluster clocks in closed form, the new-cluster clock by root
finding on ``I``. Because the hazards depend only on each cluster's own count
and on time, long runs use a next-event queue instead of redrawing every clock.
"""
import heapq
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special

from . import crm
from .exceptions import DomainError, NumericalError
from .partition import Partition

__all__ = [
    "LatentState",
    "CrpParams",
    "log_joint",
    "arrival_log_density",
    "sample_next_arrival",
    "sample_next_location",
    "simulate_partition",
    "continue_state",
    "predictive_log_factor",
    "simulate_two_param_crp",
    "continue_two_param_crp",
    "eppf_two_param_crp",
]


@dataclass
class LatentState:
    """Arrival times, cluster locations and allocations of the first ``n`` points.

    ``labels`` are 1-based canonical cluster labels; ``locations[j-1]`` is the
    location of cluster ``j``.
    """

    arrivals: np.ndarray = field(default_factory=lambda: np.empty(0))
    locations: np.ndarray = field(default_factory=lambda: np.empty(0))
    labels: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))

    def __post_init__(self):
        self.arrivals = np.asarray(self.arrivals, dtype=float)
        self.locations = np.asarray(self.locations, dtype=float)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.arrivals.shape != self.labels.shape:
            raise DomainError("arrivals and labels must have the same length")
        if self.labels.size and self.labels.max() != self.locations.size:
            raise DomainError("one location is needed per cluster")

    @property
    def n(self):
        return self.labels.size

    @property
    def k(self):
        return self.locations.size

    @property
    def last_arrival(self):
        return float(self.arrivals[-1]) if self.n else 0.0

    def sizes(self):
        return np.bincount(self.labels, minlength=self.k + 1)[1:]

    @property
    def partition(self):
        return Partition(self.labels, validate=False)

    def first_appearance(self):
        """Index of the first item of each cluster."""
        _, first = np.unique(self.labels, return_index=True)
        return first

    def is_valid(self):
        if self.n == 0:
            return True
        if self.arrivals[0] <= 0 or np.any(np.diff(self.arrivals) <= 0):
            return False
        if np.any(self.locations <= 0):
            return False
        try:
            Partition(self.labels)
        except DomainError:
            return False
        return bool(np.all(self.locations <= self.arrivals[self.first_appearance()]))

    def extend(self, tau, label, theta=None):
        """New state with one more point; ``label == k + 1`` opens a cluster at ``theta``."""
        locations = self.locations
        if label == self.k + 1:
            if theta is None:
                raise DomainError("a new cluster needs a location")
            locations = np.append(locations, theta)
        elif not 1 <= label <= self.k:
            raise DomainError(f"label {label} is neither existing nor new")
        return LatentState(np.append(self.arrivals, tau), locations, np.append(self.labels, label))

    def restrict(self, m):
        labels = self.labels[:m]
        k = int(labels.max()) if m else 0
        return LatentState(self.arrivals[:m].copy(), self.locations[:k].copy(), labels.copy())


@dataclass(frozen=True)
class CrpParams:
    """Two-parameter CRP: discount ``sigma2`` in [0, 1), strength ``kappa2 > -sigma2``."""

    discount: float
    strength: float

    def __post_init__(self):
        if not 0.0 <= self.discount < 1.0:
            raise DomainError(f"discount must lie in [0, 1), got {self.discount}")
        if not self.strength > -self.discount:
            raise DomainError(f"strength must exceed -discount, got {self.strength}")


def _existing_log_masses(sizes, locations, tau, params):
    return np.log(sizes - params.sigma) - np.log(tau - locations + params.zeta)


def log_joint(state, params):
    """Log joint density of arrivals and cluster locations.

    Returns ``-inf`` when a cluster location exceeds the arrival of its first point
    or arrivals are not strictly increasing.
    """
    if state.n == 0:
        return 0.0
    if not state.is_valid():
        return -np.inf
    tau_n = state.arrivals[-1]
    sizes = state.sizes()
    loc = state.locations
    out = np.sum(crm.log_kappa(sizes, tau_n - loc, params.levy)) + np.sum(params.base.log_density(loc))
    return float(out - crm.psi_base_integral(tau_n, params))


def _survival_exponent(tau, t0, sizes, locations, params, integral=crm.cumulative_new_intensity):
    # -log S(tau) for the next arrival after t0
    s, z = params.sigma, params.zeta
    clusters = np.sum((sizes - s) * (np.log(z + tau - locations) - np.log(z + t0 - locations)))
    return integral(tau, params) - integral(t0, params) + clusters


def arrival_log_density(tau, state, params):
    """Normalized log density of the next arrival time given ``state``."""
    t0 = state.last_arrival
    if tau <= t0:
        return -np.inf
    sizes, loc = state.sizes(), state.locations
    hazard = np.sum((sizes - params.sigma) / (tau - loc + params.zeta)) + crm.new_cluster_rate(tau, params)
    return float(np.log(hazard) - _survival_exponent(tau, t0, sizes, loc, params))


def _new_cluster_time(t0, params, rng, i0=None):
    """First event after ``t0`` of the Poisson process with cumulative intensity ``I``."""
    target = rng.exponential()
    i0 = crm.cumulative_new_intensity(t0, params) if i0 is None else i0

    def gap(t):
        return crm.cumulative_new_intensity(t, params) - i0 - target

    rate = crm.new_cluster_rate(t0, params)
    step = target / rate if rate > 0 else max(t0, 1.0)
    step = max(step, 1e-12 * max(t0, 1.0))
    hi = t0 + step
    for _ in range(200):
        if gap(hi) > 0:
            break
        step *= 2.0
        hi = t0 + step
    else:
        raise NumericalError(f"new-cluster intensity does not grow past t={hi}")
    return optimize.brentq(gap, t0, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps)


def _cluster_time(t0, theta, size, u, params):
    # inverse survival of a cluster clock with hazard (size - sigma) / (zeta + t - theta)
    base = params.zeta + t0 - theta
    return theta - params.zeta + base * u ** (-1.0 / (size - params.sigma))


def _new_location(tau, params, rng):
    """Draw a location from ``H_tau`` normalized, by inverting its distribution function."""
    total = crm.new_location_mass(tau, tau, params)
    target = rng.random() * total
    if target <= 0:
        return tau * 1e-300
    xi = params.xi

    # invert in u = (theta/tau)**xi, where the base measure is uniform
    def gap(u):
        return crm.new_location_mass(tau * u ** (1.0 / xi), tau, params) - target

    u = optimize.brentq(gap, 0.0, 1.0, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    return tau * max(u, 1e-300) ** (1.0 / xi)


def sample_next_arrival(state, params, rng):
    """Draw the next arrival time given the first ``n-1`` points."""
    t0 = state.last_arrival
    best = _new_cluster_time(t0, params, rng)
    if state.k:
        u = rng.random(state.k)
        times = _cluster_time(t0, state.locations, state.sizes(), u, params)
        best = min(best, float(times.min()))
    if not best > t0:
        raise NumericalError(f"arrival time {best} does not exceed {t0}")
    return best


def sample_next_location(state, tau_n, params, rng):
    """Allocate the point arriving at ``tau_n``.

    Returns ``(label, theta)``; ``label == state.k + 1`` means a new cluster,
    opened at location ``theta``.
    """
    if tau_n <= state.last_arrival:
        raise DomainError("tau_n must exceed the last arrival")
    new_mass = crm.new_cluster_rate(tau_n, params)
    if state.k:
        masses = np.exp(_existing_log_masses(state.sizes(), state.locations, tau_n, params))
        masses = np.append(masses, new_mass)
    else:
        masses = np.array([new_mass])
    cdf = np.cumsum(masses)
    idx = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    idx = min(idx, masses.size - 1)
    if idx == state.k:
        return state.k + 1, _new_location(tau_n, params, rng)
    return idx + 1, float(state.locations[idx])


def continue_state(state, m, params, rng):
    """Extend ``state`` by ``m`` points drawn from the model's predictive.

    Uses a next-event queue over the competing clocks; the resulting sequence has
    the same law as ``m`` rounds of ``sample_next_arrival`` / ``sample_next_location``.
    """
    if m < 0:
        raise DomainError("m must be nonnegative")
    t0 = state.last_arrival
    sizes = list(state.sizes().tolist())
    locations = list(state.locations.tolist())
    arrivals = np.empty(m)
    labels = np.empty(m, dtype=np.int64)
    if m == 0:
        return LatentState(state.arrivals.copy(), state.locations.copy(), state.labels.copy())

    queue = []
    if sizes:
        u = rng.random(len(sizes))
        times = _cluster_time(t0, np.asarray(locations), np.asarray(sizes, dtype=float), u, params)
        queue = [(float(t), j) for j, t in enumerate(times)]
        heapq.heapify(queue)
    i_cur = crm.cumulative_new_intensity(t0, params)
    t_new = _new_cluster_time(t0, params, rng, i0=i_cur)

    for step in range(m):
        if queue and queue[0][0] < t_new:
            t, j = heapq.heappop(queue)
            sizes[j] += 1
        else:
            t = t_new
            j = len(sizes)
            locations.append(_new_location(t, params, rng))
            sizes.append(1)
            t_new = _new_cluster_time(t, params, rng)
        arrivals[step] = t
        labels[step] = j + 1
        heapq.heappush(queue, (_cluster_time(t, locations[j], sizes[j], rng.random(), params), j))

    return LatentState(
        np.concatenate([state.arrivals, arrivals]),
        np.asarray(locations, dtype=float),
        np.concatenate([state.labels, labels]),
    )


def simulate_partition(n, params, rng):
    """Simulate the first ``n`` points of the model.

    Returns
    -------
    partition : Partition
    state : LatentState
    """
    if n < 1:
        raise DomainError("n must be positive")
    state = continue_state(LatentState(), n, params, rng)
    return state.partition, state


def predictive_log_factor(state, tau_n, choice, params, theta=None):
    """``log joint(state + new point) - log joint(state)``.

    ``choice`` is an existing label in ``1..k`` or ``k + 1`` for a new cluster, in
    which case ``theta`` is its location.
    """
    t0 = state.last_arrival
    if tau_n <= t0:
        return -np.inf
    s, z = params.sigma, params.zeta
    sizes, loc = state.sizes(), state.locations
    out = -_survival_exponent(tau_n, t0, sizes, loc, params, integral=crm.psi_base_integral)
    if choice == state.k + 1:
        if theta is None or not 0 < theta <= tau_n:
            return -np.inf
        out += (s - 1.0) * np.log(z + tau_n - theta) + float(params.base.log_density(theta))
    elif 1 <= choice <= state.k:
        out += _existing_log_masses(sizes[choice - 1], loc[choice - 1], tau_n, params)
    else:
        raise DomainError(f"invalid choice {choice}")
    return float(out)


def simulate_two_param_crp(n, crp, rng):
    """Sequential two-parameter CRP seating of ``n`` customers."""
    if n < 1:
        raise DomainError("n must be positive")
    return continue_two_param_crp(Partition([1]), n - 1, crp, rng) if n > 1 else Partition([1])


def continue_two_param_crp(p, m, crp, rng):
    """Seat ``m`` more customers after the partition ``p``."""
    s, c = crp.discount, crp.strength
    labels = list(p.labels.tolist())
    sizes = list(p.sizes().astype(float))
    u = rng.random(m)
    for step in range(m):
        i = len(labels)
        k = len(sizes)
        weights = np.asarray(sizes) - s
        x = u[step] * (i + c)
        cum = np.cumsum(weights)
        idx = int(np.searchsorted(cum, x, side="right"))
        if idx >= k:
            sizes.append(1.0)
            labels.append(k + 1)
        else:
            sizes[idx] += 1.0
            labels.append(idx + 1)
    return Partition(labels, validate=False)


def eppf_two_param_crp(p, crp):
    """Log probability of the canonical partition ``p`` under the two-parameter CRP."""
    s, c = crp.discount, crp.strength
    sizes = p.sizes()
    k = sizes.size
    out = np.sum(np.log(c + s * np.arange(1, k)))
    out += np.sum(special.gammaln(sizes - s) - special.gammaln(1.0 - s))
    out -= special.gammaln(c + p.n) - special.gammaln(c + 1.0)
    return float(out)
