"""Partial adoption of the integrator at fixed fares.

Passengers pick the integrator (cost C1) or book a platform directly (cost
C2_i). The integrator dispatches in proportion to each platform's idle
stock. Let k denote the integrator's occupied-vehicle load per idle vehicle,
``k = Q1 (T + W(Nt)) / Nt`` with Nt the pooled idle stock. Conservation for
platform i then reads ``N_i = x_i (1 + k) + q2_i (T + W(x_i))``. Given a cost
level C and a load k, every quantity follows in closed form. The solver
searches k for the smallest load at which the integrator cost equals C.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from . import fragmented, integrated
from .config import MarketConfig
from .errors import ConvergenceFailure, DegenerateRange, DomainError, NoEquilibrium
from .fragmented import MarketMetrics, _consumer_surplus, _fleets
from .matching import wait_cost_idle

_RTOL = 4 * np.finfo(float).eps
TAU_XTOL = 1e-9


class MixedRegime(str, enum.Enum):
    ALL_INTEGRATOR = "AllIntegrator"
    MIXED = "Mixed"
    NO_INTEGRATOR = "NoIntegrator"


@dataclass(frozen=True, eq=False)
class MixedEquilibrium:
    fleets: np.ndarray
    fares: np.ndarray
    tau: float
    q_int: np.ndarray
    q_dir: np.ndarray
    idle: np.ndarray
    cost: float
    cost_int: float
    cost_dir: np.ndarray
    regime: MixedRegime

    @property
    def Q1(self) -> float:
        return float(self.q_int.sum())

    @property
    def Q2(self) -> float:
        return float(self.q_dir.sum())

    @property
    def Q(self) -> float:
        return self.Q1 + self.Q2

    @property
    def idle_pool(self) -> float:
        return float(self.idle.sum())


@dataclass(frozen=True)
class CommissionRange:
    tau_1: float
    tau_2: float
    analytic_lower: float
    analytic_upper: float


# -- corners ---------------------------------------------------------------

def _from_integrated(ie, config: MarketConfig) -> MixedEquilibrium:
    m, beta, T = config.matching, config.beta, config.T
    return MixedEquilibrium(
        fleets=ie.fleets, fares=ie.fares, tau=ie.tau, q_int=ie.q.copy(), q_dir=np.zeros_like(ie.q),
        idle=ie.idle, cost=ie.cost, cost_int=ie.fare + beta * (T + ie.wait) + ie.tau,
        cost_dir=ie.fares + beta * (T + m.waiting_time(ie.idle)), regime=MixedRegime.ALL_INTEGRATOR)


def _pooled_cost(fares, idle, tau, config: MarketConfig) -> float:
    pool = idle.sum()
    return float((idle / pool) @ fares + config.beta * (config.T + config.matching.waiting_time(pool)) + tau)


def _from_fragmented(fe, tau, config: MarketConfig) -> MixedEquilibrium:
    m, beta, T = config.matching, config.beta, config.T
    return MixedEquilibrium(
        fleets=fe.fleets, fares=fe.fares, tau=float(tau), q_int=np.zeros_like(fe.q), q_dir=fe.q.copy(),
        idle=fe.idle, cost=fe.cost, cost_int=_pooled_cost(fe.fares, fe.idle, tau, config),
        cost_dir=fe.fares + beta * (T + m.waiting_time(fe.idle)), regime=MixedRegime.NO_INTEGRATOR)


def _no_integrator_gap(fe, tau, config) -> float:
    """Integrator cost minus the prevailing cost at the fragmented state."""
    return _pooled_cost(fe.fares, fe.idle, tau, config) - fe.cost


# -- interior --------------------------------------------------------------

class _Interior:
    def __init__(self, N, F, tau, config: MarketConfig):
        self.N, self.F, self.tau, self.cfg = N, F, tau, config

    def alloc(self, C, k):
        """Idle stocks and demands at cost level C and integrator load k (C may be an array)."""
        m, beta, T = self.cfg.matching, self.cfg.beta, self.cfg.T
        C = np.asarray(C, float)
        x_cost = wait_cost_idle(m, (C[..., None] - self.F) / beta - T)
        cap = self.N / (1 + k)
        direct = x_cost < cap
        x = np.where(direct, x_cost, cap)
        q2 = np.where(direct, np.maximum(self.N - x * (1 + k), 0.0), 0.0) / (T + m.waiting_time(x))
        pool = x.sum(axis=-1)
        q1 = k * pool / (T + m.waiting_time(pool))
        return x, q2, q1

    def excess(self, C, k):
        _, q2, q1 = self.alloc(C, k)
        return q1 + q2.sum(axis=-1) - self.cfg.demand.realized_demand(C)

    def cost_for_load(self, k: float) -> float:
        """Lowest cost level clearing the market at load k."""
        m, beta, T = self.cfg.matching, self.cfg.beta, self.cfg.T
        start = float(np.min(self.F + beta * (T + m.waiting_time(self.N / (1 + k)))))
        if self.excess(start, k) >= 0:
            # nobody books directly: the integrator alone clears the market
            _, _, q1 = self.alloc(start, k)
            if q1 >= self.cfg.demand.q_bar:
                raise NoEquilibrium("integrator supply exceeds potential demand")
            return float(self.cfg.demand.inverse_demand(q1))
        lo, step = start, 0.25
        for _ in range(60):
            grid = lo + step * np.arange(1, 2001)
            hit = np.flatnonzero(self.excess(grid, k) >= 0)
            if hit.size:
                j = hit[0]
                a = grid[j - 1] if j else lo
                return brentq(lambda c: float(self.excess(c, k)), a, grid[j], xtol=1e-12, rtol=_RTOL)
            lo, step = grid[-1], step * 2
        raise NoEquilibrium("market does not clear at this integrator load")

    def gap(self, k: float) -> float:
        C = self.cost_for_load(k)
        x, _, _ = self.alloc(C, k)
        return _pooled_cost(self.F, x, self.tau, self.cfg) - C

    def solve(self) -> MixedEquilibrium:
        ks = 1e-6 * 4.0 ** np.arange(0, 26)
        prev, g_prev = 0.0, None
        for k in ks:
            g = self.gap(k)
            if g >= 0:
                break
            prev, g_prev = k, g
        else:
            raise NoEquilibrium("integrator cost never reaches the market cost")
        if g_prev is None:
            prev = 0.0
        k = brentq(self.gap, prev, k, xtol=1e-14, rtol=_RTOL, maxiter=300) if g > 0 else k
        C = self.cost_for_load(k)
        x, q2, q1 = self.alloc(C, k)
        m, beta, T = self.cfg.matching, self.cfg.beta, self.cfg.T
        c1 = _pooled_cost(self.F, x, self.tau, self.cfg)
        if abs(c1 - C) > 1e-6:
            raise ConvergenceFailure(f"integrator indifference residual {c1 - C:.3g}",
                                     report={"C": C, "C1": c1, "k": k})
        q_int = q1 * x / x.sum()
        q_dir = q2
        regime = MixedRegime.ALL_INTEGRATOR if not np.any(q_dir > 0) else MixedRegime.MIXED
        Q = q_int.sum() + q_dir.sum()
        return MixedEquilibrium(
            fleets=self.N, fares=self.F, tau=self.tau, q_int=q_int, q_dir=q_dir, idle=x,
            cost=float(self.cfg.demand.inverse_demand(Q)), cost_int=c1,
            cost_dir=self.F + beta * (T + m.waiting_time(x)), regime=regime)


def solve_mixed(fares, tau: float, fleets, config: MarketConfig) -> MixedEquilibrium:
    """Fixed-fare equilibrium with a possibly partial integrator market share.

    The all-integrator corner is tested first, then the no-integrator corner.
    Otherwise the interior is solved. Corners are evaluated with
    wild-goose-chase states allowed because thin idle pools are common at
    fixed fares.
    """
    N = _fleets(fleets)
    F = np.asarray(fares, dtype=float)
    if F.shape != N.shape:
        raise DomainError("fares and fleets differ in length")
    ie = integrated.evaluate_given_fares(F, tau, N, config, allow_wgc=True)
    if integrated.all_integrator_margin(ie, config) >= 0:
        return _from_integrated(ie, config)
    fe = fragmented.evaluate_given_fares(F, N, config, allow_wgc=True)
    if _no_integrator_gap(fe, tau, config) >= 0:
        return _from_fragmented(fe, tau, config)
    return _Interior(N, F, float(tau), config).solve()


def commission_range(fares, fleets, config: MarketConfig) -> CommissionRange:
    """Commission thresholds bounding the mixed regime.

    ``tau_2`` has a closed form because the fragmented state does not depend
    on the commission. ``tau_1`` is the largest commission at which the
    all-integrator state is stable against direct booking, located by
    bracketing and root refinement.
    """
    N = _fleets(fleets)
    F = np.asarray(fares, dtype=float)
    fe = fragmented.evaluate_given_fares(F, N, config, allow_wgc=True)
    tau_2 = -_no_integrator_gap(fe, 0.0, config)

    def margin(t):
        ie = integrated.evaluate_given_fares(F, t, N, config, allow_wgc=True)
        return integrated.all_integrator_margin(ie, config)

    if margin(tau_2) >= 0:
        hi, step = tau_2, 1.0
        while margin(hi + step) >= 0:
            hi, step = hi + step, step * 2
            if step > 1e6:
                raise DegenerateRange("all-integrator state stable at every commission", np.inf, tau_2)
        tau_1 = brentq(margin, hi, hi + step, xtol=TAU_XTOL)
        if tau_1 > tau_2 + 1e-6:
            raise DegenerateRange(f"tau_1 = {tau_1:.6g} exceeds tau_2 = {tau_2:.6g}", tau_1, tau_2)
        tau_1 = min(tau_1, tau_2)
    else:
        step = 1.0
        while margin(tau_2 - step) < 0:
            step *= 2
            if step > 1e6:
                raise NoEquilibrium("no commission supports the all-integrator state")
        # margin(a) >= 0 > margin(b)
        a, b = tau_2 - step, (tau_2 - step / 2 if step > 1 else tau_2)
        tau_1 = brentq(margin, a, b, xtol=TAU_XTOL)
    j = int(np.argmin(F))
    return CommissionRange(
        tau_1=float(tau_1), tau_2=float(tau_2),
        analytic_lower=float(F.min() - F.max()),
        analytic_upper=float(config.beta * config.matching.waiting_time(fe.idle[j])))


def sweep_commission(fares, fleets, config: MarketConfig, tau_grid: Sequence[float]) -> list[dict]:
    """One row per commission level; failed rows carry an ``error`` entry."""
    grid = np.asarray(tau_grid, dtype=float)
    if np.any(np.diff(grid) < 0):
        raise DomainError("tau_grid must be sorted ascending")
    rows = []
    for t in grid:
        try:
            me = solve_mixed(fares, t, fleets, config)
            rows.append({"tau": float(t), "Q": me.Q, "Q1": me.Q1, "Q2": me.Q2,
                         "regime": me.regime.value, "equilibrium": me, "error": None})
        except Exception as exc:  # row-level marker, never a silent NaN
            rows.append({"tau": float(t), "Q": None, "Q1": None, "Q2": None,
                         "regime": None, "equilibrium": None, "error": f"{type(exc).__name__}: {exc}"})
    return rows


def metrics(eq: MixedEquilibrium, config: MarketConfig) -> MarketMetrics:
    dem, beta, T, c = config.demand, config.beta, config.T, config.c
    m = config.matching
    q = eq.q_int + eq.q_dir
    profits = q * eq.fares - c * eq.fleets
    gross = float(dem.gross_surplus(eq.Q)) if eq.Q > 0 else 0.0
    waiting = eq.Q1 * beta * (T + m.waiting_time(eq.idle_pool)) + float(
        np.sum(eq.q_dir * beta * (T + m.waiting_time(eq.idle))))
    welfare = gross - waiting - c * float(eq.fleets.sum())
    return MarketMetrics(
        profits=profits, total_profit=float(profits.sum()),
        consumer_surplus=_consumer_surplus(dem, eq.Q), welfare=welfare,
        utilization=q * T / eq.fleets, integrator_revenue=eq.tau * eq.Q1)
