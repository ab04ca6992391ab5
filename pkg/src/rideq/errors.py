"""Exception hierarchy shared by the solvers and the CLI."""

from __future__ import annotations


class RideqError(Exception):
    """Base class for all library errors."""


class DomainError(RideqError, ValueError):
    """An argument lies outside the domain of a model function."""


class InfeasibleDemand(RideqError):
    """Requested demand exceeds the peak of the vehicle-conservation curve."""


class RegimeError(RideqError):
    """A Normal-regime formula was evaluated in the wild-goose-chase regime."""


class NoEquilibrium(RideqError):
    """No stationary state exists at the given fares."""


class ConvergenceFailure(RideqError):
    """An iterative solver stopped without meeting its tolerance.

    ``trace`` holds whatever iteration history the solver recorded.
    """

    def __init__(self, message: str, trace=None, report=None):
        super().__init__(message)
        self.trace = list(trace or [])
        self.report = report


class DegenerateRange(RideqError):
    """Computed commission thresholds are out of order."""

    def __init__(self, message: str, tau_1: float, tau_2: float):
        super().__init__(message)
        self.tau_1 = tau_1
        self.tau_2 = tau_2


class DimensionError(RideqError):
    """A grid oracle was asked for more dimensions than it supports."""


class ConfigError(RideqError):
    """Base class for configuration problems."""


class ParseError(ConfigError):
    """The configuration file is not valid JSON."""


class ValidationError(ConfigError):
    """The configuration parsed but violates the schema.

    ``path`` names the offending field, e.g. ``platforms[1].fleet``.
    """

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class IoError(RideqError, OSError):
    """Writing an output file failed."""
