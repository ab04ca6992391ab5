"""Equilibrium models of ride-sourcing markets with and without a platform integrator."""

from .config import MarketConfig, PlatformFleet, baseline_config, load_config
from .demand import DemandModel, ExponentialDemand
from .errors import (ConfigError, ConvergenceFailure, DegenerateRange, DimensionError, DomainError,
                     InfeasibleDemand, IoError, NoEquilibrium, ParseError, RegimeError, RideqError,
                     ValidationError)
from .fragmented import FragmentedEquilibrium, MarketMetrics
from .integrated import IntegratedEquilibrium
from .matching import IdleSolution, MatchingModel, Mode, Regime
from .mixed import CommissionRange, MixedEquilibrium, MixedRegime

__all__ = [
    "MarketConfig", "PlatformFleet", "baseline_config", "load_config",
    "DemandModel", "ExponentialDemand", "MatchingModel", "IdleSolution", "Mode", "Regime",
    "FragmentedEquilibrium", "IntegratedEquilibrium", "MixedEquilibrium", "MixedRegime",
    "MarketMetrics", "CommissionRange",
    "RideqError", "DomainError", "InfeasibleDemand", "RegimeError", "NoEquilibrium",
    "ConvergenceFailure", "DegenerateRange", "DimensionError", "ConfigError", "ParseError",
    "ValidationError", "IoError",
]
