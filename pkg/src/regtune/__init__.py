# Tuning-indexed regularized estimators: data-driven selection, influence
# based standardization, and concrete estimator families with a Monte Carlo
# experiment harness.

from .core import (ConfigError, DiscreteLaw, DomainError, EmpiricalSample,
                   FunctionOnGrid, InfluenceEvaluation, RateEnvelope,
                   Regularization, ScalarValue, TuningGrid, bl_distance,
                   empirical_measure, hash64, make_rng, w1_distance)
from .selector import (SelectionResult, acceptance_set, lepski_select,
                       lepski_select_gal, oracle_select)

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "DiscreteLaw", "DomainError", "EmpiricalSample",
    "FunctionOnGrid", "InfluenceEvaluation", "RateEnvelope", "Regularization",
    "ScalarValue", "TuningGrid", "bl_distance", "empirical_measure", "hash64",
    "make_rng", "w1_distance", "SelectionResult", "acceptance_set",
    "lepski_select", "lepski_select_gal", "oracle_select",
]
