"""Sequential Monte Carlo for the marginal likelihood of an observed partition.

The latent arrival times and cluster locations are imputed one observation at
a time. The log joint density of the first ``n`` points splits as

    G_n + A_n - C_n - I(tau_n)

where ``G_n = sum_j log Gamma(m_j - sigma) - log Gamma(1 - sigma)`` is common to
all particles, ``A_n = sum_j log alpha(theta_j)`` changes only when a cluster
opens and ``C_n = sum_j (m_j - sigma) log(zeta + tau_n - theta_j)``. Each step
adds the change of these terms, less the log proposal density, to the weights.
``C_n`` is carried forward through power sums of the gaps (see ``_kernels``),
so a step costs O(N) rather than O(N K).
"""
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special

from . import _kernels, crm
from .exceptions import DegeneracyError, DomainError
from .generative import CrpParams, LatentState, eppf_two_param_crp
from .partition import Partition

__all__ = [
    "FitConfig",
    "FitResult",
    "ParticleSystem",
    "init_particle_system",
    "smc_step",
    "run_smc",
    "smc_marginal_loglik",
    "fit_mle",
    "fit_two_param_crp",
    "posterior_atom_weights",
    "systematic_resample",
    "effective_sample_size",
    "golden_section_max",
    "default_sigma_grid",
]

NEW = 0
_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


def default_sigma_grid():
    """25 equally spaced values from 0 to 0.99."""
    return tuple(np.linspace(0.0, 0.99, 25).tolist())


@dataclass
class FitConfig:
    n_particles: int = 10000
    ess_threshold: float = 0.5
    # None: per-particle scale 1/hazard at the last reweighting; float: fixed scale
    proposal_scale: float = None
    # standard deviation of the arrival proposal, in units of its mean offset
    proposal_spread: float = 2.0
    sigma_grid: tuple = field(default_factory=default_sigma_grid)
    xi_grid: tuple = (1.0, 2.0, 3.0)
    zeta_range: tuple = (0.0, 100.0)
    zeta_depth: int = 20
    replicates: int = 3
    seed: int = 0
    gamma_coef: float = 1.0
    crp_strength_range: tuple = (0.0, 100.0)

    def __post_init__(self):
        if self.n_particles < 2:
            raise DomainError("n_particles must be at least 2")
        if not self.sigma_grid or not self.xi_grid:
            raise DomainError("parameter grids must be nonempty")
        if not 0.0 <= self.ess_threshold <= 1.0:
            raise DomainError("ess_threshold is a fraction in [0, 1]")
        if self.proposal_spread <= 0:
            raise DomainError("proposal_spread must be positive")
        if self.replicates < 1:
            raise DomainError("replicates must be at least 1")


@dataclass
class FitResult:
    best_params: object
    best_log_evidence: float
    # (xi, sigma) -> (zeta, mean log evidence, standard error over replicates)
    surface: dict
    failures: dict = field(default_factory=dict)

    def surface_rows(self):
        for (xi, sigma), (zeta, mean, se) in sorted(self.surface.items()):
            yield {"xi": xi, "sigma": sigma, "zeta": zeta, "log_evidence": mean, "se": se}


@dataclass
class ParticleSystem:
    """Weighted particles targeting the latent variables given an observed prefix.

    Arrays are indexed by particle. ``thetas[:, j]`` is the location of cluster
    ``j+1``. ``log_weights`` are relative to the last resampling.
    """

    tau: np.ndarray
    thetas: np.ndarray
    log_weights: np.ndarray
    sizes: np.ndarray
    labels: list
    log_evidence: float = 0.0
    ess: float = 0.0
    keep_history: bool = True
    c_term: np.ndarray = None
    i_term: np.ndarray = None
    scale: np.ndarray = None
    # power-sum state of the cluster term
    ref: np.ndarray = None
    powers: np.ndarray = None
    c_ref: np.ndarray = None
    arrivals_history: list = field(default_factory=list)
    ancestry: list = field(default_factory=list)

    @property
    def n_particles(self):
        return self.tau.size

    @property
    def n(self):
        return len(self.labels)

    @property
    def k(self):
        return self.sizes.size

    def normalized_weights(self):
        w = np.exp(self.log_weights - np.max(self.log_weights))
        return w / w.sum()

    def arrival_paths(self):
        """(N, n) array of arrival-time paths, traced back through resampling."""
        if not self.keep_history:
            raise DomainError("particle history was not kept")
        n, N = self.n, self.n_particles
        out = np.empty((N, n))
        idx = np.arange(N)
        resampled = dict(self.ancestry)
        for step in range(n - 1, -1, -1):
            # resampling at a step happens after its arrivals were recorded
            if step in resampled:
                idx = resampled[step][idx]
            out[:, step] = self.arrivals_history[step][idx]
        return out

    def particle(self, i, paths=None):
        paths = self.arrival_paths() if paths is None else paths
        return LatentState(paths[i].copy(), self.thetas[i, : self.k].copy(), np.asarray(self.labels))

    @property
    def particles(self):
        paths = self.arrival_paths()
        return [self.particle(i, paths) for i in range(self.n_particles)]


def effective_sample_size(log_weights):
    w = np.exp(log_weights - np.max(log_weights))
    return float(w.sum() ** 2 / np.sum(w**2))


def systematic_resample(weights, rng):
    """Ancestor indices by systematic resampling of normalized ``weights``."""
    n = weights.size
    u = (rng.random() + np.arange(n)) / n
    idx = np.searchsorted(np.cumsum(weights), u, side="right")
    return np.minimum(idx, n - 1)


def _logmeanexp(x):
    top = np.max(x)
    if not np.isfinite(top):
        return -np.inf
    return float(top + np.log(np.mean(np.exp(x - top))))


def _first_scale(params):
    # time by which one new cluster is expected
    def gap(t):
        return crm.cumulative_new_intensity(t, params) - 1.0

    lo = hi = 1.0
    while gap(hi) < 0:
        hi *= 2.0
    while gap(lo) > 0:
        lo /= 2.0
    return optimize.brentq(gap, lo, hi)


def init_particle_system(n_particles, capacity=16, keep_history=True):
    N = int(n_particles)
    return ParticleSystem(
        tau=np.zeros(N),
        thetas=np.zeros((N, max(int(capacity), 1))),
        log_weights=np.zeros(N),
        sizes=np.zeros(0),
        labels=[],
        ess=float(N),
        keep_history=keep_history,
        c_term=np.zeros(N),
        i_term=np.zeros(N),
        scale=None,
        ref=np.zeros(N),
        powers=np.zeros((N, _kernels.N_POWERS)),
        c_ref=np.zeros(N),
    )


def cluster_term(system, params):
    """``C_n`` for every particle by a direct pass over the clusters."""
    gaps = params.zeta + system.tau[:, None] - system.thetas[:, : system.k]
    return np.log(gaps) @ (system.sizes - params.sigma)


_RESAMPLED_FIELDS = ("tau", "c_term", "i_term", "scale", "ref", "powers", "c_ref")


def _maybe_resample(system, config, rng):
    lw = system.log_weights
    bad = ~np.isfinite(lw)
    if bad.all():
        raise DegeneracyError(system.n)
    if bad.any():
        lw = np.where(bad, -np.inf, lw)
        system.log_weights = lw
    system.ess = effective_sample_size(lw)
    N = system.n_particles
    if system.ess < config.ess_threshold * N:
        system.log_evidence += _logmeanexp(lw)
        idx = systematic_resample(system.normalized_weights(), rng)
        k = system.k
        _kernels.gather_rows(system.thetas, idx, k)
        for name in _RESAMPLED_FIELDS:
            value = getattr(system, name)
            if value is not None:
                setattr(system, name, value[idx])
        system.log_weights = np.zeros(N)
        if system.keep_history:
            system.ancestry.append((system.n - 1, idx))


def smc_step(system, observed_label, params, config, rng):
    """Propagate and reweight every particle through one observation, in place.

    ``observed_label`` is the 1-based cluster of the new item, or ``k + 1``
    (equivalently ``NEW``) when it opens a cluster. Resamples when the ESS
    falls below ``config.ess_threshold * N``.
    """
    k = system.k
    if observed_label == NEW:
        observed_label = k + 1
    if not 1 <= observed_label <= k + 1:
        raise DomainError(f"observation {observed_label} is not a valid next label after {k} clusters")
    if system.n == 0 and observed_label != 1:
        raise DomainError("the first item always opens cluster 1")
    N = system.n_particles
    s = params.sigma

    if config.proposal_scale is not None:
        scale = np.full(N, float(config.proposal_scale))
    elif system.scale is None:
        scale = np.full(N, _first_scale(params))
    else:
        scale = system.scale
    # truncated normal on the positive gap, mean offset scale, sd spread * scale
    c = config.proposal_spread
    lower = special.ndtr(-1.0 / c)
    zz = special.ndtri(lower + rng.random(N) * (1.0 - lower))
    tau = system.tau + scale * (1.0 + c * zz)
    inc = 0.5 * zz**2 + _LOG_SQRT_2PI + np.log(c * scale) + np.log1p(-lower)

    coef = np.ascontiguousarray(system.sizes - s)
    if observed_label == k + 1:
        theta = rng.random(N) * tau
        if k == system.thetas.shape[1]:
            system.thetas = np.concatenate([system.thetas, np.zeros_like(system.thetas)], axis=1)
        system.thetas[:, k] = theta
        inc += np.log(tau) + params.base.log_density(theta)
        target, added = k, 1.0 - s
    else:
        target, added = observed_label - 1, 1.0
        inc += np.log(system.sizes[target] - s)

    c_new, hazard = np.empty(N), np.empty(N)
    _kernels.cluster_step(
        system.tau, system.c_term, tau, system.ref, system.powers, system.c_ref, system.thetas, coef, k, target, added, params.zeta, c_new, hazard
    )
    i_new = crm.cumulative_new_intensity(tau, params)
    inc -= (c_new - system.c_term) + (i_new - system.i_term)
    system.log_weights = system.log_weights + inc
    system.c_term, system.i_term = c_new, i_new
    if target == k:
        system.sizes = np.append(system.sizes, 1.0)
    else:
        system.sizes[target] += 1.0
    system.tau = tau
    system.labels.append(observed_label)
    if system.keep_history:
        system.arrivals_history.append(tau)
    if config.proposal_scale is None:
        # the new-cluster rate varies slowly; one value per step is enough for a proposal
        system.scale = 1.0 / (hazard + crm.new_cluster_rate(float(np.median(tau)), params))
    _maybe_resample(system, config, rng)
    return system


def run_smc(p, params, config, rng, keep_history=True):
    """Run the particle filter over a whole partition; returns the final system and ESS trace."""
    labels = p.labels if isinstance(p, Partition) else Partition(p).labels
    system = init_particle_system(config.n_particles, capacity=int(labels.max()), keep_history=keep_history)
    trace = []
    for c in labels:
        smc_step(system, int(c), params, config, rng)
        trace.append(system.ess)
    # weights stay attached for predictive resampling; the evidence is now final
    system.log_evidence += _logmeanexp(system.log_weights)
    return system, np.asarray(trace)


def smc_marginal_loglik(p, params, config, rng):
    """Unbiased SMC estimate of ``log Pr(partition | params)`` (the estimate of the
    probability itself is unbiased).

    Returns
    -------
    log_evidence : float
    ess_trace : ndarray, ESS after each observation
    """
    system, trace = run_smc(p, params, config, rng, keep_history=False)
    return system.log_evidence, trace


def posterior_atom_weights(state, params, rng, size=None):
    """Draw the cluster masses given the latent state: independent gammas with
    shape ``m_j - sigma`` and rate ``zeta + tau_n - theta_j``."""
    shape = state.sizes() - params.sigma
    rate = params.zeta + state.last_arrival - state.locations
    out_shape = shape.shape if size is None else (size,) + shape.shape
    return rng.gamma(shape, 1.0 / rate, size=out_shape)


def golden_section_max(f, lo, hi, depth):
    """Maximize ``f`` on ``(lo, hi)`` by ``depth`` golden-section reductions.

    Returns (argmax, value, evaluations). Endpoints are never evaluated.
    """
    g = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    x1, x2 = b - g * (b - a), a + g * (b - a)
    f1, f2 = f(x1), f(x2)
    seen = {x1: f1, x2: f2}
    for _ in range(depth):
        if f1 >= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - g * (b - a)
            f1 = f(x1)
            seen[x1] = f1
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + g * (b - a)
            f2 = f(x2)
            seen[x2] = f2
    best = max(seen, key=seen.get)
    return best, seen[best], seen


def _replicated_loglik(p, params, config, base_seed):
    vals = []
    for r in range(config.replicates):
        # common random numbers across grid points keep the surface smooth
        rng = np.random.default_rng([base_seed, r])
        vals.append(smc_marginal_loglik(p, params, config, rng)[0])
    vals = np.asarray(vals)
    se = float(vals.std(ddof=1) / np.sqrt(vals.size)) if vals.size > 1 else float("nan")
    return float(vals.mean()), se


def fit_mle(p, config, progress=None):
    """Grid maximum likelihood for ``(xi, sigma, zeta)`` from SMC evidence estimates.

    For each ``(xi, sigma)`` the tilt ``zeta`` maximizes the replicate-averaged
    estimate by golden-section search on ``config.zeta_range``.
    """
    surface, failures = {}, {}
    lo, hi = config.zeta_range
    for xi in config.xi_grid:
        for sigma in config.sigma_grid:
            cache = {}

            def objective(zeta, xi=xi, sigma=sigma, cache=cache):
                params = crm.ModelParams.from_values(xi, sigma, zeta, config.gamma_coef)
                cache[zeta] = _replicated_loglik(p, params, config, config.seed)
                return cache[zeta][0]

            try:
                zeta, _, _ = golden_section_max(objective, lo, hi, config.zeta_depth)
            except (DegeneracyError, FloatingPointError, ValueError) as exc:
                failures[(float(xi), float(sigma))] = str(exc)
                continue
            mean, se = cache[zeta]
            surface[(float(xi), float(sigma))] = (float(zeta), mean, se)
            if progress is not None:
                progress(xi, sigma, zeta, mean, se)
    if not surface:
        raise DegeneracyError(len(p), "every grid point degenerated")
    (xi, sigma), (zeta, mean, _) = max(surface.items(), key=lambda kv: kv[1][1])
    best = crm.ModelParams.from_values(xi, sigma, zeta, config.gamma_coef)
    return FitResult(best_params=best, best_log_evidence=mean, surface=surface, failures=failures)


def fit_two_param_crp(p, config):
    """Grid maximum likelihood for the two-parameter CRP using its exact EPPF.

    The discount runs over ``config.sigma_grid``; the strength is found by
    golden-section search on ``config.crp_strength_range``.
    """
    surface = {}
    lo, hi = config.crp_strength_range
    for sigma in config.sigma_grid:

        def objective(strength, sigma=sigma):
            return eppf_two_param_crp(p, CrpParams(sigma, strength))

        strength, value, _ = golden_section_max(objective, max(lo, -sigma), hi, max(config.zeta_depth, 40))
        surface[float(sigma)] = (float(strength), float(value))
    sigma, (strength, value) = max(surface.items(), key=lambda kv: kv[1][1])
    return CrpParams(sigma, strength), value, surface
