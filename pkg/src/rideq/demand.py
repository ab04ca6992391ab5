"""Passenger demand models.

A demand model maps the generalized trip cost C (HKD) to a trip rate Q
(trips/hour) and back. Solvers only rely on the abstract contract, so new
families can be added by subclassing :class:`DemandModel`.
"""

from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

log = logging.getLogger(__name__)


class DemandModel(ABC):
    """Contract for a demand family: f, B = f^-1, B' and the integral of B."""

    kind: str = "abstract"

    @property
    @abstractmethod
    def q_bar(self) -> float:
        """Potential demand, the rate reached at zero generalized cost."""

    @abstractmethod
    def realized_demand(self, C):
        ...

    @abstractmethod
    def inverse_demand(self, Q):
        ...

    @abstractmethod
    def inverse_demand_slope(self, Q):
        ...

    @abstractmethod
    def gross_surplus(self, Q):
        ...

    @property
    def q_min(self) -> float:
        """Lower clamp used by solvers; B is unbounded at zero."""
        return 1e-9 * self.q_bar


@dataclass(frozen=True)
class ExponentialDemand(DemandModel):
    """Negative exponential demand ``Q = q_bar * exp(-alpha * C)``."""

    Q_bar: float
    alpha: float
    kind: str = "exponential"

    def __post_init__(self):
        if not (np.isfinite(self.Q_bar) and self.Q_bar > 0):
            raise DomainError(f"Q_bar must be positive, got {self.Q_bar}")
        if not (np.isfinite(self.alpha) and self.alpha > 0):
            raise DomainError(f"alpha must be positive, got {self.alpha}")

    @property
    def q_bar(self) -> float:
        return self.Q_bar

    def realized_demand(self, C):
        C = np.asarray(C, dtype=float)
        if np.any(C < 0):
            log.debug("negative generalized cost %s: extrapolating demand", C)
        out = self.Q_bar * np.exp(-self.alpha * C)
        return float(out) if out.ndim == 0 else out

    def inverse_demand(self, Q):
        Q = self._check(Q, allow_zero=False)
        out = -np.log(Q / self.Q_bar) / self.alpha
        return float(out) if out.ndim == 0 else out

    def inverse_demand_slope(self, Q):
        Q = self._check(Q, allow_zero=False)
        out = -1.0 / (self.alpha * Q)
        return float(out) if out.ndim == 0 else out

    def gross_surplus(self, Q):
        """Closed form of the integral of B from 0 to Q: ``Q * (B(Q) + 1/alpha)``."""
        Q = self._check(Q, allow_zero=True)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(Q > 0, Q * (-np.log(Q / self.Q_bar) + 1.0) / self.alpha, 0.0)
        return float(out) if out.ndim == 0 else out

    def _check(self, Q, allow_zero: bool):
        Q = np.asarray(Q, dtype=float)
        # tiny overshoot of q_bar is rounding, not a domain violation
        hi = self.Q_bar * (1 + 1e-12)
        bad = (Q < 0) | (Q > hi) | ~np.isfinite(Q) if allow_zero else (Q <= 0) | (Q > hi) | ~np.isfinite(Q)
        if np.any(bad):
            raise DomainError(f"demand rate outside the domain of B: {Q}")
        return np.minimum(Q, self.Q_bar)
