"""Estimator-style wrappers with scikit-learn parameter handling.

``fit`` takes a 1-D sequence of cluster tokens in observation order. Tokens
may be any hashable values; they are relabelled by order of first appearance.
"""
import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import crm
from .exceptions import DomainError
from .generative import CrpParams, eppf_two_param_crp, simulate_partition, simulate_two_param_crp
from .inference import FitConfig, default_sigma_grid, fit_mle, fit_two_param_crp, run_smc
from .partition import Partition, canonicalize
from .predict import predict_continuation, predict_two_param_crp

__all__ = [
    "check_tokens",
    "check_generator",
    "PartitionEncoder",
    "NonExchangeablePartitionModel",
    "TwoParameterCRP",
]


def check_tokens(X):
    """Validate a token sequence and return it as a 1-D object or integer array."""
    if isinstance(X, Partition):
        return X.labels
    if isinstance(X, str):
        raise DomainError("expected a sequence of tokens, got a single string")
    arr = np.asarray(X)
    if arr.ndim == 2 and 1 in arr.shape:
        arr = arr.ravel()
    if arr.ndim != 1:
        raise DomainError(f"expected a 1-D token sequence, got shape {arr.shape}")
    if arr.size == 0:
        raise DomainError("the token sequence is empty")
    return arr


def check_generator(random_state):
    """``None``, an int seed or a ``numpy.random.Generator`` -> Generator."""
    if isinstance(random_state, np.random.Generator):
        return random_state
    if random_state is None or isinstance(random_state, (int, np.integer)):
        return np.random.default_rng(random_state)
    raise DomainError(f"cannot build a generator from {random_state!r}")


def _as_partition(X):
    tokens = check_tokens(X)
    if isinstance(X, Partition):
        return X
    return canonicalize(tokens.tolist())


class PartitionEncoder(TransformerMixin, BaseEstimator):
    """Maps tokens to cluster labels ``1, 2, ...`` by order of first appearance.

    Tokens not seen during ``fit`` get fresh labels in ``transform``, again in
    order of appearance.
    """

    def fit(self, X, y=None):
        tokens = check_tokens(X).tolist()
        mapping = {}
        for tok in tokens:
            if tok not in mapping:
                mapping[tok] = len(mapping) + 1
        self.mapping_ = mapping
        self.n_clusters_ = len(mapping)
        return self

    def transform(self, X):
        check_is_fitted(self, "mapping_")
        mapping = dict(self.mapping_)
        out = []
        for tok in check_tokens(X).tolist():
            if tok not in mapping:
                mapping[tok] = len(mapping) + 1
            out.append(mapping[tok])
        return np.asarray(out, dtype=np.int64)

    def inverse_transform(self, labels):
        check_is_fitted(self, "mapping_")
        back = {v: k for k, v in self.mapping_.items()}
        return [back[int(v)] for v in np.asarray(labels)]


class NonExchangeablePartitionModel(BaseEstimator):
    """The non-exchangeable partition model fitted by grid maximum likelihood.

    When ``xi``, ``sigma`` and ``zeta`` are all given, ``fit`` keeps them fixed
    and only runs the particle filter. Otherwise ``(xi, sigma)`` range over the
    grids and ``zeta`` is found by golden-section search for each grid point.
    """

    def __init__(
        self,
        xi=None,
        sigma=None,
        zeta=None,
        gamma_coef=1.0,
        n_particles=10000,
        ess_threshold=0.5,
        proposal_spread=2.0,
        sigma_grid=None,
        xi_grid=(1.0, 2.0, 3.0),
        zeta_range=(0.0, 100.0),
        zeta_depth=20,
        replicates=3,
        random_state=0,
    ):
        self.xi = xi
        self.sigma = sigma
        self.zeta = zeta
        self.gamma_coef = gamma_coef
        self.n_particles = n_particles
        self.ess_threshold = ess_threshold
        self.proposal_spread = proposal_spread
        self.sigma_grid = sigma_grid
        self.xi_grid = xi_grid
        self.zeta_range = zeta_range
        self.zeta_depth = zeta_depth
        self.replicates = replicates
        self.random_state = random_state

    def _config(self):
        if self.random_state is not None and not isinstance(self.random_state, (int, np.integer)):
            raise DomainError("random_state must be an int seed or None for grid fitting")
        return FitConfig(
            n_particles=self.n_particles,
            ess_threshold=self.ess_threshold,
            proposal_spread=self.proposal_spread,
            sigma_grid=tuple(default_sigma_grid() if self.sigma_grid is None else self.sigma_grid),
            xi_grid=tuple(self.xi_grid),
            zeta_range=tuple(self.zeta_range),
            zeta_depth=self.zeta_depth,
            replicates=self.replicates,
            seed=0 if self.random_state is None else int(self.random_state),
            gamma_coef=self.gamma_coef,
        )

    def fit(self, X, y=None, progress=None):
        p = _as_partition(X)
        config = self._config()
        fixed = [v is not None for v in (self.xi, self.sigma, self.zeta)]
        if all(fixed):
            self.params_ = crm.ModelParams.from_values(self.xi, self.sigma, self.zeta, self.gamma_coef)
            self.fit_result_ = None
        elif any(fixed):
            raise DomainError("give all of xi, sigma, zeta or none of them")
        else:
            self.fit_result_ = fit_mle(p, config, progress=progress)
            self.params_ = self.fit_result_.best_params
        rng = np.random.default_rng([config.seed, 1])
        self.particles_, self.ess_trace_ = run_smc(p, self.params_, config, rng)
        self.log_evidence_ = self.particles_.log_evidence
        self.partition_ = p
        return self

    def score(self, X, y=None):
        """SMC estimate of the log probability of ``X`` under the fitted parameters."""
        check_is_fitted(self, "params_")
        p = _as_partition(X)
        config = self._config()
        system, _ = run_smc(p, self.params_, config, np.random.default_rng([config.seed, 2]), keep_history=False)
        return system.log_evidence

    def predict(self, m, n_samples=100, random_state=None):
        """Predictive continuations of the training sequence by ``m`` items."""
        check_is_fitted(self, "particles_")
        rng = check_generator(self.random_state if random_state is None else random_state)
        return predict_continuation(self.particles_, m, self.params_, rng, n_samples)

    def sample(self, n, random_state=None):
        """Simulate a partition of ``n`` items from the fitted (or fixed) parameters."""
        check_is_fitted(self, "params_")
        rng = check_generator(self.random_state if random_state is None else random_state)
        return simulate_partition(n, self.params_, rng)[0]


class TwoParameterCRP(BaseEstimator):
    """Exchangeable baseline with discount ``discount`` and strength ``strength``.

    With both given, ``fit`` keeps them; otherwise the discount runs over
    ``sigma_grid`` and the strength is searched on ``strength_range`` using the
    exact partition probability.
    """

    def __init__(self, discount=None, strength=None, sigma_grid=None, strength_range=(0.0, 100.0), random_state=0):
        self.discount = discount
        self.strength = strength
        self.sigma_grid = sigma_grid
        self.strength_range = strength_range
        self.random_state = random_state

    def fit(self, X, y=None):
        p = _as_partition(X)
        if self.discount is not None and self.strength is not None:
            self.params_ = CrpParams(self.discount, self.strength)
            self.surface_ = None
        elif self.discount is None and self.strength is None:
            grid = tuple(default_sigma_grid() if self.sigma_grid is None else self.sigma_grid)
            config = FitConfig(n_particles=2, sigma_grid=grid, crp_strength_range=tuple(self.strength_range))
            self.params_, _, self.surface_ = fit_two_param_crp(p, config)
        else:
            raise DomainError("give both discount and strength or neither")
        self.log_likelihood_ = eppf_two_param_crp(p, self.params_)
        self.partition_ = p
        return self

    def score(self, X, y=None):
        check_is_fitted(self, "params_")
        return eppf_two_param_crp(_as_partition(X), self.params_)

    def predict(self, m, n_samples=100, random_state=None):
        check_is_fitted(self, "partition_")
        rng = check_generator(self.random_state if random_state is None else random_state)
        return predict_two_param_crp(self.partition_, m, self.params_, rng, n_samples)

    def sample(self, n, random_state=None):
        check_is_fitted(self, "params_")
        rng = check_generator(self.random_state if random_state is None else random_state)
        return simulate_two_param_crp(n, self.params_, rng)
