"""Fully integrated market: one pooled dispatch, platform-specific fares.

The integrator dispatches in proportion to fleet size, so every platform
holds the share ``N_i/N`` of the pooled idle stock and of total demand.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .config import MarketConfig
from .errors import DomainError
from .fragmented import MarketMetrics, _consumer_surplus, _fleets, stationary_state
from .matching import Regime

_RTOL = 4 * np.finfo(float).eps


@dataclass(frozen=True, eq=False)
class IntegratedEquilibrium:
    fleets: np.ndarray
    fares: np.ndarray
    tau: float
    q: np.ndarray
    Q: float
    idle_pool: float
    wait: float
    cost: float
    regime: Regime
    kind: str = "given-fares"
    warnings: tuple[str, ...] = field(default=())

    @property
    def shares(self) -> np.ndarray:
        return self.fleets / self.fleets.sum()

    @property
    def idle(self) -> np.ndarray:
        return self.shares * self.idle_pool

    @property
    def fare(self) -> float:
        """Effective (fleet-weighted) fare; the common fare at a Nash equilibrium."""
        return float(self.shares @ self.fares)


def _finish(N, fares, tau, Q, x, config, kind, cost=None) -> IntegratedEquilibrium:
    m = config.matching
    shares = N / N.sum()
    regime = m.wgc_classify(Q, x, 1.0, "pooled-total") if Q > 0 else Regime.NORMAL
    if cost is None:
        cost = config.demand.inverse_demand(Q) if Q > 0 else np.inf
    eq = IntegratedEquilibrium(
        fleets=N, fares=np.asarray(fares, float), tau=float(tau), q=shares * Q, Q=float(Q),
        idle_pool=float(x), wait=float(m.waiting_time(x)), cost=float(cost), regime=regime, kind=kind)
    if kind == "nash" and all_integrator_margin(eq, config) < 0:
        object.__setattr__(eq, "warnings", ("commission too high for an all-integrator equilibrium",))
    return eq


def evaluate_given_fares(fares, tau: float, fleets, config: MarketConfig,
                         allow_wgc: bool = False) -> IntegratedEquilibrium:
    """All passengers book through the integrator at fixed platform fares."""
    N = _fleets(fleets)
    F = np.asarray(fares, dtype=float)
    if F.shape != N.shape:
        raise DomainError("fares and fleets differ in length")
    if np.any(F < 0):
        raise DomainError("fares must be non-negative")
    fbar = float((N / N.sum()) @ F)
    st = stationary_state([N.sum()], [fbar + tau], config, allow_wgc=allow_wgc)
    return _finish(N, F, tau, float(st.q.sum()), float(st.idle[0]), config, "given-fares", st.cost)


def _pooled_solve(N: np.ndarray, config: MarketConfig, tau: float, nash: bool) -> tuple[float, float]:
    dem, m, beta, T = config.demand, config.matching, config.beta, config.T
    total, I = float(N.sum()), N.size
    pk = m.peak_idle(total, T)

    def foc(x):
        Q = m.branch(x, total, T)
        wp, _ = m.waiting_time_derivatives(x)
        Qc = max(Q, dem.q_min)
        mr = dem.inverse_demand(Qc) - tau
        if nash:
            # fleet-weighted average of the per-platform conditions
            mr += Q / I * dem.inverse_demand_slope(Qc)
        return mr * (1 + Q * wp) - beta * (T + m.waiting_time(x))

    if foc(total) <= 0:
        return 0.0, total
    x = brentq(foc, pk, total, xtol=1e-14 * total, rtol=_RTOL, maxiter=300)
    return float(m.branch(x, total, T)), float(x)


def _with_fare(N, tau, Q, x, config, kind):
    B = config.demand.inverse_demand(Q) if Q > 0 else np.inf
    fare = B - config.beta * (config.T + config.matching.waiting_time(x)) - (tau if kind == "nash" else 0.0)
    return _finish(N, np.full(N.shape, fare), tau if kind == "nash" else 0.0, Q, x, config, kind, B)


def solve_nash(tau: float, fleets: Sequence[float],
               config: MarketConfig) -> tuple[IntegratedEquilibrium, "MarketMetrics"]:
    """Nash equilibrium under integration; all platforms end up on one fare.

    Demand splits in proportion to fleets, so the equilibrium reduces to a
    scalar condition in the pooled idle stock. For unequal fleets the
    per-platform conditions cannot hold simultaneously. Their fleet-size
    average is solved instead, which is exact for equal fleets.
    """
    N = _fleets(fleets)
    Q, x = _pooled_solve(N, config, tau, nash=True)
    eq = _with_fare(N, tau, Q, x, config, "nash")
    return eq, metrics(eq, config)


def solve_social_optimum(fleets: Sequence[float],
                         config: MarketConfig) -> tuple[IntegratedEquilibrium, "MarketMetrics"]:
    """Welfare optimum with pooled dispatch; depends on total fleet only."""
    N = _fleets(fleets)
    Q, x = _pooled_solve(N, config, 0.0, nash=False)
    eq = _with_fare(N, 0.0, Q, x, config, "social")
    return eq, metrics(eq, config)


def unchanged_fare_outcome(fragmented_ne_fares, tau: float, fleets, config: MarketConfig,
                           allow_wgc: bool = False) -> tuple[IntegratedEquilibrium, "MarketMetrics"]:
    """Integration introduced while platforms keep their pre-integration fares."""
    eq = evaluate_given_fares(fragmented_ne_fares, tau, fleets, config, allow_wgc=allow_wgc)
    return eq, metrics(eq, config)


def all_integrator_margin(eq: IntegratedEquilibrium, config: MarketConfig) -> float:
    """Cheapest direct-booking cost minus the integrator cost at ``eq``.

    Non-negative means nobody wants to leave the integrator.
    """
    m, beta, T = config.matching, config.beta, config.T
    direct = eq.fares + beta * (T + m.waiting_time(eq.idle))
    via = eq.fare + beta * (T + m.waiting_time(eq.idle_pool)) + eq.tau
    return float(np.min(direct) - via)


def metrics(eq: IntegratedEquilibrium, config: MarketConfig) -> MarketMetrics:
    dem, beta, T, c = config.demand, config.beta, config.T, config.c
    profits = eq.q * (eq.fares if eq.Q > 0 else 0.0) - c * eq.fleets
    gross = float(dem.gross_surplus(eq.Q)) if eq.Q > 0 else 0.0
    wait = config.matching.waiting_time(eq.idle_pool)
    welfare = gross - eq.Q * beta * (T + wait) - c * float(eq.fleets.sum())
    return MarketMetrics(
        profits=profits, total_profit=float(profits.sum()),
        consumer_surplus=_consumer_surplus(dem, eq.Q), welfare=welfare,
        utilization=eq.q * T / eq.fleets, integrator_revenue=eq.tau * eq.Q)
