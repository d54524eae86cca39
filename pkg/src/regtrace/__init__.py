"""Numerical verification of regularized trace formulas for even-order operators
with operator-valued potentials."""
from .errors import ConsistencyError, ContourError, HypothesisError, NumericalFailure, RegtraceError, ScenarioError
from .galerkin import GalerkinSystem, build_system
from .model import CosinePotential, SpectralModel, validate_scenario

__all__ = [
    "ConsistencyError",
    "ContourError",
    "CosinePotential",
    "GalerkinSystem",
    "HypothesisError",
    "NumericalFailure",
    "RegtraceError",
    "ScenarioError",
    "SpectralModel",
    "build_system",
    "validate_scenario",
]
__version__ = "0.1.0"
