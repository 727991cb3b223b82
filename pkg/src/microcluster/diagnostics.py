"""Empirical checks of the model's large-sample laws.

Growth exponents are least-squares slopes on log-log scale over the tail of a
log-spaced set of checkpoints. Theoretical constants are computed from the
``crm`` kernels.
"""
import csv
import json
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from . import crm
from .exceptions import DomainError, NumericalError
from .generative import LatentState, _new_cluster_time, _new_location

__all__ = [
    "ExponentFit",
    "growth_exponent",
    "log_checkpoints",
    "powerlaw_ratio",
    "powerlaw_regime",
    "count_trajectories",
    "time_trajectories",
    "size_distribution_slope",
    "asymptotic_report",
    "first_weight_density",
    "first_weight_limit_sample",
    "write_trajectory_csv",
    "write_report",
]


@dataclass(frozen=True)
class ExponentFit:
    slope: float
    intercept: float
    n_min: float
    n_max: float
    residual_rms: float
    n_points: int


def growth_exponent(trajectory, tail_fraction=0.5):
    """Log-log slope of ``value`` against ``n`` over the last ``tail_fraction`` of points.

    ``trajectory`` is an (m, 2) array-like of ``(n, value)`` rows in increasing ``n``.
    """
    arr = np.asarray(trajectory, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise DomainError("trajectory must be a sequence of (n, value) pairs")
    if not 0.0 < tail_fraction <= 1.0:
        raise DomainError("tail_fraction must lie in (0, 1]")
    if np.any(arr <= 0):
        raise DomainError("growth exponents need positive n and values")
    start = int(np.floor(arr.shape[0] * (1.0 - tail_fraction)))
    tail = arr[start:]
    if tail.shape[0] < 10:
        raise DomainError("an exponent fit needs at least 10 points")
    x, y = np.log(tail[:, 0]), np.log(tail[:, 1])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    return ExponentFit(
        float(slope),
        float(intercept),
        float(tail[0, 0]),
        float(tail[-1, 0]),
        float(np.sqrt(np.mean(resid**2))),
        int(tail.shape[0]),
    )


def log_checkpoints(n_max, count=100, n_min=10):
    """Distinct integers from ``n_min`` to ``n_max``, evenly spaced in log scale."""
    if n_max < n_min:
        raise DomainError("n_max must be at least n_min")
    return np.unique(np.geomspace(n_min, n_max, count).round().astype(np.int64))


def powerlaw_regime(sigma):
    """Label of the limiting behaviour of the size proportions."""
    if sigma == 0.0:
        # each proportion K_{n,r}/K_n vanishes
        return "vanishing_proportions"
    if sigma == 1.0:
        return "all_singletons"
    if 0.0 < sigma < 1.0:
        return "power_law"
    raise DomainError("sigma must lie in [0, 1]")


def powerlaw_ratio(sigma, r):
    """Limit of ``K_{n,r} / K_n``: ``sigma Gamma(r - sigma) / (r! Gamma(1 - sigma))``."""
    if not 0.0 < sigma < 1.0:
        raise DomainError(f"sigma={sigma} is outside (0, 1); see powerlaw_regime")
    r = np.asarray(r)
    if np.any(r < 1) or np.any(r != np.floor(r)):
        raise DomainError("r must be a positive integer")
    r = r.astype(float)
    out = sigma * np.exp(special.gammaln(r - sigma) - special.gammaln(r + 1.0) - special.gammaln(1.0 - sigma))
    return out if out.ndim else float(out)


def count_trajectories(labels, checkpoints):
    """``K_n`` and the size of cluster 1 after each checkpoint ``n``."""
    labels = np.asarray(labels)
    k_running = np.maximum.accumulate(labels)
    m1 = np.cumsum(labels == 1)
    idx = np.asarray(checkpoints) - 1
    return k_running[idx], m1[idx]


def time_trajectories(state, times):
    """``N(t)``, ``K(t)`` and ``M_1(t)`` at each of ``times``."""
    arrivals = state.arrivals
    first = arrivals[state.first_appearance()]
    ones = arrivals[state.labels == 1]
    times = np.asarray(times, dtype=float)
    return (
        np.searchsorted(arrivals, times, side="right"),
        np.searchsorted(first, times, side="right"),
        np.searchsorted(ones, times, side="right"),
    )


def size_distribution_slope(p, min_count=5, r_min=2):
    """Log-log slope of the proportion of clusters of size ``r`` against ``r``.

    Sizes enter from ``r_min`` up to the first size held by fewer than
    ``min_count`` clusters.
    """
    sizes = p.sizes()
    counts = np.bincount(sizes)[1:]
    r = np.arange(1, counts.size + 1)
    short = np.nonzero(counts < min_count)[0]
    stop = short[0] if short.size else counts.size
    keep = slice(r_min - 1, stop)
    if stop - (r_min - 1) < 3:
        raise DomainError("too few well-populated sizes for a slope")
    slope, _ = np.polyfit(np.log(r[keep]), np.log(counts[keep] / sizes.size), 1)
    return float(slope)


def _check(name, empirical, theoretical, tolerance, relative=False):
    gap = abs(empirical - theoretical)
    bound = tolerance * abs(theoretical) if relative else tolerance
    return {
        "name": name,
        "empirical": float(empirical),
        "theoretical": float(theoretical),
        "gap": float(gap),
        "tolerance": float(tolerance),
        "relative": relative,
        "passed": bool(gap < bound),
    }


def asymptotic_report(state, params, n_checkpoints=100, tail_fraction=0.5):
    """Compare a simulated trajectory with the model's almost-sure limits.

    ``state`` must be the latent state of a simulation (arrival times and
    locations included). Returns a JSON-serializable dict whose ``checks`` list
    holds, for each law, the empirical value, the theoretical value and their gap.
    """
    if not isinstance(state, LatentState) or state.arrivals.size != state.n or state.n == 0:
        raise DomainError("asymptotic_report needs the latent state of a simulated partition")
    xi, s, gam = params.xi, params.sigma, params.gamma_coef
    n = state.n
    wide = s == 0.0
    checks = []

    ns = log_checkpoints(n, n_checkpoints)
    k_n, m1_n = count_trajectories(state.labels, ns)
    fit_k = growth_exponent(np.column_stack([ns, k_n]), tail_fraction)
    checks.append(_check("K_n exponent", fit_k.slope, (s + xi) / (xi + 1.0), 0.15 if wide else 0.08))
    fit_m = growth_exponent(np.column_stack([ns, m1_n]), tail_fraction)
    checks.append(_check("m_n1 exponent", fit_m.slope, 1.0 / (xi + 1.0), 0.1))

    # time-indexed view, from the arrival of the tenth point to the last one
    t_lo, t_hi = state.arrivals[min(9, n - 1)], state.arrivals[-1]
    ts = np.geomspace(t_lo, t_hi, n_checkpoints)
    n_t, k_t, m1_t = time_trajectories(state, ts)
    fit_n = growth_exponent(np.column_stack([ts, n_t]), tail_fraction)
    checks.append(_check("N(t) exponent", fit_n.slope, xi + 1.0, 0.1))
    fit_kt = growth_exponent(np.column_stack([ts, np.maximum(k_t, 1)]), tail_fraction)
    checks.append(_check("K(t) exponent", fit_kt.slope, s + xi, 0.15 if wide else 0.1))

    # M_1(t) grows linearly: tail slope against the final ratio M_1(t)/t
    tail = slice(int(np.floor(ts.size * (1.0 - tail_fraction))), None)
    slope_m1 = np.polyfit(ts[tail], m1_t[tail], 1)[0]
    checks.append(_check("M_1(t) linearity", slope_m1, m1_t[-1] / ts[-1], 0.1, relative=True))

    regime = powerlaw_regime(s)
    sizes = state.sizes()
    props = np.bincount(sizes, minlength=3)[1:3] / sizes.size
    if regime == "power_law":
        checks.append(_check("K_n1/K_n", props[0], powerlaw_ratio(s, 1), 0.05))
        checks.append(_check("K_n2/K_n", props[1], powerlaw_ratio(s, 2), 0.03))

    constants = {
        "N(t) constant": float(crm.kappa(1, 0.0, params.levy) * gam / (xi + 1.0)),
        "N(t) empirical constant": float(n_t[-1] / ts[-1] ** (xi + 1.0)),
        "K(t) constant": float(
            np.exp(special.gammaln(s + 1.0) + special.gammaln(xi + 1.0) - special.gammaln(s + xi + 1.0))
            * gam
            * (1.0 / s if s > 0 else np.nan)
        ),
    }
    return {
        "params": params.as_dict(),
        "n": int(n),
        "k": int(state.k),
        "regime": regime,
        "proportions": {"1": float(props[0]), "2": float(props[1])},
        "constants": constants,
        "checks": checks,
        "passed": all(c["passed"] for c in checks),
    }


def _tau_horizon(params, level):
    # I(tau) = level, bracketed by doubling
    hi = 1.0
    while crm.cumulative_new_intensity(hi, params) < level:
        hi *= 2.0
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if crm.cumulative_new_intensity(mid, params) < level:
            lo = mid
        else:
            hi = mid
    return hi


def _inner_location_integral(w, tau, params):
    # int_0^tau exp(-w (tau - theta)) alpha(theta) dtheta = gamma tau^xi 1F1(1; xi+1; -w tau)
    return params.gamma_coef * tau**params.xi * special.hyp1f1(1.0, params.xi + 1.0, -w * tau)


def first_weight_density(w, params, rel_cut=1e-14):
    """Density of the mass of the first cluster's atom at ``w > 0``.

    The location integral has a closed form in the confluent hypergeometric
    function; the arrival-time integral is done by adaptive quadrature, cut where
    ``exp(-I(tau))`` falls below ``rel_cut``.
    """
    w = float(w)
    if not w > 0:
        raise DomainError("the first-weight density is defined for w > 0")
    s, z = params.sigma, params.zeta
    horizon = _tau_horizon(params, -np.log(rel_cut))

    def integrand(tau):
        return np.exp(-crm.cumulative_new_intensity(tau, params)) * _inner_location_integral(w, tau, params)

    val, err = integrate.quad(integrand, 0.0, horizon, limit=200, epsabs=0.0, epsrel=1e-10)
    if not np.isfinite(val) or err > 1e-6 * max(abs(val), 1e-300):
        raise NumericalError(f"outer quadrature did not converge (estimate {val}, error {err})", achieved=err)
    log_front = -s * np.log(w) - z * w - special.gammaln(1.0 - s)
    return float(np.exp(log_front) * val)


def first_weight_limit_sample(params, size, rng, horizon=10_000):
    """Draws of ``lim M_1(t) / t``, the first cluster's mass, by long continuation.

    Cluster 1's arrivals form a pure-birth process in ``x = log(zeta + t - theta_1)``
    with rate ``m - sigma``. After ``horizon`` arrivals the limit of ``m e^-x`` is
    read off with the digamma centring of the remaining increments.
    """
    s, z = params.sigma, params.zeta
    out = np.empty(size)
    rates = np.arange(1, horizon) - s
    centre = special.digamma(horizon - s) - special.digamma(1.0 - s)
    chunk = max(1, 2_000_000 // horizon)
    for start in range(0, size, chunk):
        stop = min(size, start + chunk)
        jumps = rng.exponential(size=(stop - start, horizon - 1)) / rates
        for i in range(start, stop):
            tau = _new_cluster_time(0.0, params, rng, i0=0.0)
            theta = _new_location(tau, params, rng)
            x1 = np.log(z + tau - theta)
            # log m - x_m = -x_1 - (increments - their mean) + log m - centre, and
            # log m - centre tends to digamma(1 - sigma)
            out[i] = np.exp(-x1 - (jumps[i - start].sum() - centre) + special.digamma(1.0 - s))
    return out


def write_trajectory_csv(state, path, checkpoints=None, n_sizes=5):
    """Columns ``n, t, K, N, size_1..size_k`` at log-spaced checkpoints."""
    n = state.n
    ns = log_checkpoints(n, 100, n_min=1) if checkpoints is None else np.asarray(checkpoints)
    labels = state.labels
    k_run = np.maximum.accumulate(labels)
    counts = np.zeros(n_sizes, dtype=np.int64)
    rows, nxt = [], 0
    for i in range(n):
        if labels[i] <= n_sizes:
            counts[labels[i] - 1] += 1
        if nxt < ns.size and ns[nxt] == i + 1:
            rows.append([i + 1, repr(float(state.arrivals[i])), int(k_run[i]), i + 1, *counts.tolist()])
            nxt += 1
    with open(path, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["n", "t", "K", "N"] + [f"size_{j}" for j in range(1, n_sizes + 1)])
        out.writerows(rows)


def write_report(report, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
