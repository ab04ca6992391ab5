"""Market without integration: each platform serves its own passengers.

Every solver works in idle-vehicle space. On the Normal branch of a
platform's conservation curve the demand ``q = f(x)`` is explicit, so each
first-order condition becomes a monotone scalar equation in ``x``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .config import MarketConfig
from .errors import ConvergenceFailure, DomainError, NoEquilibrium
from .matching import Regime, wait_cost_idle

_RTOL = 4 * np.finfo(float).eps


@dataclass(frozen=True, eq=False)
class FragmentedEquilibrium:
    fleets: np.ndarray
    q: np.ndarray
    idle: np.ndarray
    fares: np.ndarray
    wait: np.ndarray
    Q: float
    cost: float
    regimes: tuple[Regime, ...]
    kind: str = "given-fares"
    multiple: bool = False
    trace: tuple = field(default=(), repr=False)

    @property
    def active(self) -> np.ndarray:
        return self.q > 0

    @property
    def all_normal(self) -> bool:
        return all(r is Regime.NORMAL for r, a in zip(self.regimes, self.active) if a)


@dataclass(frozen=True, eq=False)
class MarketMetrics:
    profits: np.ndarray
    total_profit: float
    consumer_surplus: float
    welfare: float
    utilization: np.ndarray
    integrator_revenue: float = 0.0


def _fleets(fleets) -> np.ndarray:
    arr = np.asarray(fleets, dtype=float).ravel()
    if arr.size == 0 or np.any(~(arr > 0)):
        raise DomainError("fleets must be a non-empty list of positive numbers")
    return arr


def _regimes(config, q, x, share=None) -> tuple[Regime, ...]:
    m = config.matching
    share = np.ones_like(q) if share is None else share
    return tuple(m.wgc_classify(qi, xi, si, "pooled-share") for qi, xi, si in zip(q, x, share))


# -- evaluation at fixed fares ---------------------------------------------

@dataclass(frozen=True)
class StationaryState:
    cost: float
    idle: np.ndarray
    q: np.ndarray


def stationary_state(fleets, fares, config: MarketConfig, allow_wgc: bool = False,
                     share=None) -> StationaryState:
    """Common generalized cost C at which supply meets demand for fixed fares.

    For a cost level C every platform keeps ``x_i(C) = W^-1((C - F_i)/beta - T)``
    idle vehicles (capped at its fleet), serving ``q_i = f_i(x_i)``. The
    lowest C with ``sum q_i(C) = D(C)`` is returned. It has the largest idle
    stocks and is therefore the Normal-regime state whenever one exists.
    ``share`` generalises the curve to ``(N - share*x)/(T + W(x))``.
    """
    N = _fleets(fleets)
    F = np.asarray(fares, dtype=float)
    if F.shape != N.shape:
        raise DomainError("fares and fleets differ in length")
    share = np.ones_like(N) if share is None else np.asarray(share, float)
    m, beta, T, dem = config.matching, config.beta, config.T, config.demand
    cap = N / share
    peak = np.array([m.peak_idle(float(n), float(T), float(s)) for n, s in zip(N, share)])
    c_open = F + beta * (T + m.waiting_time(cap))
    c_peak = F + beta * (T + m.waiting_time(peak))

    def supply(C):
        C = np.asarray(C, float)
        x = np.minimum(wait_cost_idle(m, (C[..., None] - F) / beta - T), cap)
        return (N - share * x) / (T + m.waiting_time(x)), x

    def phi(C):
        s, _ = supply(C)
        return float(s.sum() - dem.realized_demand(C))

    c_lo = float(c_open.min())
    if phi(c_lo) >= 0:
        # demand underflows: no-trade corner
        return StationaryState(c_lo, cap.copy(), np.zeros_like(N))
    c_norm = float(c_peak.min())
    if phi(c_norm) >= 0:
        a, b = c_lo, c_norm
    elif not allow_wgc:
        raise NoEquilibrium("no Normal-regime stationary state at these fares")
    else:
        a = b = None
        lo = c_norm
        step = 0.25
        for _ in range(200):
            grid = lo + step * np.arange(1, 2001)
            s, _ = supply(grid)
            vals = s.sum(axis=-1) - dem.realized_demand(grid)
            hit = np.flatnonzero(vals >= 0)
            if hit.size:
                j = hit[0]
                a, b = (grid[j - 1] if j else lo), grid[j]
                break
            lo, step = grid[-1], step * 2
        if a is None:
            raise NoEquilibrium("no stationary state found at these fares")
    C = brentq(phi, a, b, xtol=1e-12, rtol=_RTOL, maxiter=300)
    q, x = supply(C)
    return StationaryState(float(C), x, q)


def evaluate_given_fares(fares, fleets, config: MarketConfig,
                         allow_wgc: bool = False) -> FragmentedEquilibrium:
    """Fixed-fare equilibrium with corner platforms priced out of the market."""
    N = _fleets(fleets)
    F = np.asarray(fares, dtype=float)
    if np.any(F < 0):
        raise DomainError("fares must be non-negative")
    st = stationary_state(N, F, config, allow_wgc=allow_wgc)
    q = np.where(st.idle >= N, 0.0, st.q)
    x = np.where(q > 0, st.idle, N)
    Q = float(q.sum())
    return FragmentedEquilibrium(
        fleets=N, q=q, idle=x, fares=F.copy(), wait=config.matching.waiting_time(x),
        Q=Q, cost=st.cost, regimes=_regimes(config, q, x), kind="given-fares")


# -- first-order-condition solvers -------------------------------------------

def _response(Q: float, N: float, config: MarketConfig, nash: bool,
              others: float | None = None) -> tuple[float, float]:
    """Platform quantity satisfying its FOC given aggregate information.

    With ``others`` unset, ``Q`` is the total demand held fixed (aggregative
    form). With ``others`` set, the platform best-responds to rivals' total
    ``others`` and ``Q = others + q``. Returns ``(q, x)``.
    """
    m, beta, T, dem = config.matching, config.beta, config.T, config.demand
    pk = m.peak_idle(float(N), float(T))
    qmin = dem.q_min

    def foc(x):
        q = m.branch(x, N, T)
        wp, _ = m.waiting_time_derivatives(x)
        tot = max(Q if others is None else others + q, qmin)
        mr = dem.inverse_demand(tot)
        if nash:
            mr += q * dem.inverse_demand_slope(tot)
        # FOC multiplied by 1 + qW' > 0 so it stays finite at the peak
        return mr * (1 + q * wp) - beta * (T + m.waiting_time(x))

    if foc(N) <= 0:
        return 0.0, float(N)
    x = brentq(foc, pk, N, xtol=1e-14 * N, rtol=_RTOL, maxiter=300)
    return float(m.branch(x, N, T)), float(x)


def _aggregate_solve(N: np.ndarray, config: MarketConfig, nash: bool, trace: list):
    dem, m, T = config.demand, config.matching, config.T
    uniq, inv = np.unique(N, return_inverse=True)

    def responses(Q):
        res = [_response(Q, n, config, nash) for n in uniq]
        q = np.array([res[k][0] for k in inv])
        x = np.array([res[k][1] for k in inv])
        return q, x

    def phi(Q):
        val = responses(Q)[0].sum() - Q
        trace.append((Q, val))
        return val

    cap = float(sum(m.max_feasible_demand(float(n), T) for n in N))
    hi = min(dem.q_bar, cap)
    lo = dem.q_min
    if phi(lo) <= 0:
        return np.zeros_like(N), N.copy()
    if phi(hi) >= 0:
        raise ConvergenceFailure("aggregate demand map has no crossing", trace)
    Q = brentq(phi, lo, hi, xtol=1e-13 * dem.q_bar, rtol=_RTOL, maxiter=300)
    return responses(Q)


def _best_response_solve(N: np.ndarray, config: MarketConfig, nash: bool, trace: list,
                         damping: float = 0.5, max_iter: int = 500):
    """Damped simultaneous best response from several symmetric starts."""
    dem, m, T = config.demand, config.matching, config.T
    qpk = np.array([m.max_feasible_demand(float(n), T) for n in N])
    tol = 1e-10 * dem.q_bar
    groups = [np.flatnonzero(N == n) for n in np.unique(N)]
    found = []
    for s in (0.1, 0.3, 0.5, 0.7, 0.9):
        q = np.minimum(np.full(N.size, s * qpk.sum() / N.size), qpk)
        for it in range(max_iter):
            Q = q.sum()
            if nash:
                br = np.array([_response(0.0, n, config, True, others=Q - qi)[0] for n, qi in zip(N, q)])
            else:
                # welfare is maximised jointly, so the response uses marginal cost at the current Q
                br = np.array([_response(max(Q, dem.q_min), n, config, False)[0] for n in N])
            new = q + damping * (br - q)
            for g in groups:
                new[g] = new[g].mean()
            step = np.max(np.abs(new - q))
            trace.append((s, it, float(new.sum()), float(step)))
            q = new
            if step < tol:
                found.append(q)
                break
    if not found:
        raise ConvergenceFailure("best-response iteration did not converge", trace)
    distinct = []
    for q in found:
        if not any(np.max(np.abs(q - d)) < 1e-6 * dem.q_bar for d in distinct):
            distinct.append(q)
    q = distinct[0]
    x = np.array([m.solve_idle_platform(n, qi, T).idle_vehicles for n, qi in zip(N, q)])
    return q, x, len(distinct) > 1


def _build(N, q, x, config: MarketConfig, kind: str, trace, multiple=False) -> FragmentedEquilibrium:
    dem, m, beta, T = config.demand, config.matching, config.beta, config.T
    Q = float(q.sum())
    w = m.waiting_time(x)
    if Q > 0:
        B = dem.inverse_demand(Q)
        fares = B - beta * (T + w)
    else:
        B = np.inf
        fares = np.full(N.shape, np.inf)
    return FragmentedEquilibrium(
        fleets=N, q=q, idle=x, fares=fares, wait=w, Q=Q, cost=float(B),
        regimes=_regimes(config, q, x), kind=kind, multiple=multiple, trace=tuple(trace))


def _solve(fleets, config, nash: bool, method: str):
    N = _fleets(fleets)
    trace: list = []
    kind = "nash" if nash else "social"
    if method == "best_response":
        try:
            q, x, multiple = _best_response_solve(N, config, nash, trace)
            eq = _build(N, q, x, config, kind, trace, multiple)
            return eq, metrics(eq, config)
        except ConvergenceFailure:
            pass  # fall back to the aggregative solve
    elif method != "aggregate":
        raise ValueError(f"unknown method {method!r}")
    q, x = _aggregate_solve(N, config, nash, trace)
    eq = _build(N, q, x, config, kind, trace)
    return eq, metrics(eq, config)


def solve_nash(fleets: Sequence[float], config: MarketConfig,
               method: str = "aggregate") -> tuple[FragmentedEquilibrium, MarketMetrics]:
    """Quantity-setting Nash equilibrium among independent platforms.

    The default ``aggregate`` method solves each platform's FOC for a trial
    total demand Q and then finds the Q reproduced by the sum of responses.
    Each response falls with Q, so the crossing (and the equilibrium) is
    unique. ``best_response`` runs damped best-response iteration instead.
    """
    return _solve(fleets, config, True, method)


def solve_social_optimum(fleets: Sequence[float], config: MarketConfig,
                         method: str = "aggregate") -> tuple[FragmentedEquilibrium, MarketMetrics]:
    """Welfare-maximising allocation with separate idle pools."""
    return _solve(fleets, config, False, method)


# -- metrics ---------------------------------------------------------------

def _consumer_surplus(dem, Q: float) -> float:
    return 0.0 if Q <= 0 else float(dem.gross_surplus(Q) - Q * dem.inverse_demand(Q))


def metrics(eq: FragmentedEquilibrium, config: MarketConfig) -> MarketMetrics:
    dem, beta, T, c = config.demand, config.beta, config.T, config.c
    active = eq.q > 0
    revenue = np.where(active, eq.q * np.where(active, eq.fares, 0.0), 0.0)
    profits = revenue - c * eq.fleets
    gross = float(dem.gross_surplus(eq.Q)) if eq.Q > 0 else 0.0
    welfare = gross - float(np.sum(eq.q * beta * (T + eq.wait))) - c * float(eq.fleets.sum())
    return MarketMetrics(
        profits=profits, total_profit=float(profits.sum()),
        consumer_surplus=_consumer_surplus(dem, eq.Q), welfare=welfare,
        utilization=eq.q * T / eq.fleets)


def demand_threshold(ne_fragmented: FragmentedEquilibrium, ne_integrated, I: int,
                     config: MarketConfig) -> float:
    """Commission below which integration raises Nash demand.

    ``tau_bar = B(Qt) + Qt B'(Qt)/I - (B(Q) + Q B'(Q)/I)`` with Qt the integrated
    and Q the fragmented Nash demand, both at zero commission.
    """
    dem = config.demand

    def mr(Q):
        return dem.inverse_demand(Q) + Q * dem.inverse_demand_slope(Q) / I

    return float(mr(ne_integrated.Q) - mr(ne_fragmented.Q))
