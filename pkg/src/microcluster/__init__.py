"""Non-exchangeable random partitions from a generalized gamma process.

Items arrive as the points of a Cox process driven by a completely random
measure restricted under the bisector; clusters are the atoms. The package
simulates the model, estimates its marginal likelihood by sequential Monte
Carlo, fits it by grid maximum likelihood, predicts continuations and checks
its large-sample laws.
"""
from .crm import BaseMeasureParams, GGPParams, ModelParams
from .estimators import NonExchangeablePartitionModel, PartitionEncoder, TwoParameterCRP
from .exceptions import DegeneracyError, DomainError, NumericalError
from .generative import CrpParams, LatentState, simulate_partition, simulate_two_param_crp
from .inference import FitConfig, FitResult, fit_mle, fit_two_param_crp, smc_marginal_loglik
from .partition import Partition, canonicalize

__version__ = "0.1.0"

__all__ = [
    "BaseMeasureParams",
    "GGPParams",
    "ModelParams",
    "CrpParams",
    "LatentState",
    "Partition",
    "canonicalize",
    "simulate_partition",
    "simulate_two_param_crp",
    "smc_marginal_loglik",
    "fit_mle",
    "fit_two_param_crp",
    "FitConfig",
    "FitResult",
    "NonExchangeablePartitionModel",
    "TwoParameterCRP",
    "PartitionEncoder",
    "DomainError",
    "NumericalError",
    "DegeneracyError",
]
