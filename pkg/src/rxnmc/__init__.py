"""Monte Carlo estimation of E f(X(T)) for stochastic reaction networks.

Provides exact path simulation (next reaction method and Gillespie direct),
Euler tau-leaping, coupled-pair simulators for variance reduction, and both
biased and unbiased multilevel Monte Carlo estimators with pilot-driven
sample allocation.
"""

from .model import (
    ModelError,
    Observable,
    Reaction,
    ReactionNetwork,
    ScalingProfile,
    State,
    all_propensities,
    compute_scaling,
    evaluate,
    propensity,
)
from .stochastics import RandomStream
from .paths import BudgetExceededError, PathResult, exact_path, tau_leap_path
from .coupling import (
    ChannelMap,
    CoupledPairResult,
    coupled_exact_exact,
    coupled_exact_tau,
    coupled_tau_pair,
)
from .mlmc import (
    EstimateReport,
    LevelPlan,
    LevelStats,
    a_of_h,
    allocate,
    cmc_exact,
    cmc_tau,
    control_variate,
    mlmc_biased,
    mlmc_unbiased,
    pilot,
)
from .modelfile import ModelFile, ParseError, parse_model, serialize_model
from . import models

__version__ = "0.1.0"

__all__ = [
    "BudgetExceededError",
    "ChannelMap",
    "CoupledPairResult",
    "EstimateReport",
    "LevelPlan",
    "LevelStats",
    "ModelError",
    "ModelFile",
    "Observable",
    "ParseError",
    "PathResult",
    "RandomStream",
    "Reaction",
    "ReactionNetwork",
    "ScalingProfile",
    "State",
    "a_of_h",
    "all_propensities",
    "allocate",
    "cmc_exact",
    "cmc_tau",
    "compute_scaling",
    "control_variate",
    "coupled_exact_exact",
    "coupled_exact_tau",
    "coupled_tau_pair",
    "evaluate",
    "exact_path",
    "mlmc_biased",
    "mlmc_unbiased",
    "models",
    "parse_model",
    "pilot",
    "propensity",
    "serialize_model",
    "tau_leap_path",
]
