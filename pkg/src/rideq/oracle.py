"""Brute-force verifiers that share no numerical code with the solvers.

Model primitives (B, W) are read from the config, but conservation
inversion, peak location, surplus integration and optimisation are all
re-implemented here with grids and plain bisection.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import cumulative_trapezoid, quad
from scipy.ndimage import label
from scipy.optimize import minimize_scalar

from .config import MarketConfig
from .demand import ExponentialDemand
from .errors import DimensionError
from .fragmented import FragmentedEquilibrium
from .integrated import IntegratedEquilibrium
from .mixed import MixedEquilibrium

COST_TOL = 1e-6
CONSERVATION_TOL = 1e-9
FOC_TOL = 1e-8


# -- primitives --------------------------------------------------------------

def _B(config: MarketConfig, Q):
    """Inverse demand, extrapolated below zero beyond potential demand."""
    dem = config.demand
    Q = np.asarray(Q, float)
    if isinstance(dem, ExponentialDemand):
        with np.errstate(divide="ignore"):
            return -np.log(Q / dem.Q_bar) / dem.alpha
    out = np.full(Q.shape, -np.inf)
    ok = (Q > 0) & (Q <= dem.q_bar)
    out[ok] = dem.inverse_demand(Q[ok])
    return out


def _W(config, x):
    m = config.matching
    return m.A * np.asarray(x, float) ** (-m.kappa)


def _Wp(config, x):
    m = config.matching
    return -m.kappa * m.A * np.asarray(x, float) ** (-m.kappa - 1)


def peak_demand(N: float, config: MarketConfig, share: float = 1.0) -> tuple[float, float]:
    """(abscissa, value) of the branch-curve maximum via grid plus bounded Brent."""
    T = config.T
    hi = N / share

    def neg(x):
        return -(N - share * x) / (T + _W(config, x))

    xs = np.geomspace(hi * 1e-9, hi, 20001)
    j = int(np.argmin(neg(xs)))
    a, b = xs[max(j - 1, 0)], xs[min(j + 1, xs.size - 1)]
    res = minimize_scalar(neg, bounds=(a, b), method="bounded", options={"xatol": 1e-12 * hi})
    return float(res.x), float(-res.fun)


def idle_from_demand(N: float, q, config: MarketConfig, share: float = 1.0, iters: int = 100):
    """Normal root of ``N = share*x + q (T + W(x))`` by vectorised bisection."""
    q = np.asarray(q, float)
    xp, _ = peak_demand(N, config, share)
    lo = np.full(q.shape, xp)
    hi = np.full(q.shape, N / share)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        pos = N - share * mid - q * (config.T + _W(config, mid)) > 0
        lo = np.where(pos, mid, lo)
        hi = np.where(pos, hi, mid)
    return 0.5 * (lo + hi)


def _surplus_table(config: MarketConfig, Q_hi: float, n: int = 200_001):
    """Cumulative trapezoid of B on [0, Q_hi] with the log singularity integrated by quad."""
    grid = np.linspace(0.0, Q_hi, n)
    head = quad(lambda s: float(_B(config, s)), 0.0, grid[1])[0]
    tail = cumulative_trapezoid(_B(config, grid[1:]), grid[1:], initial=0.0)
    return grid, np.concatenate([[0.0], head + tail])


def finite_difference(fn: Callable[[float], float], point: float, step: float) -> float:
    """Central difference ``(f(x+h) - f(x-h)) / 2h``."""
    if step <= 0:
        raise ValueError("step must be positive")
    return (fn(point + step) - fn(point - step)) / (2 * step)


# -- grid optimisers ---------------------------------------------------------

def grid_best_response(platform_index: int, others_quantities, fleets, config: MarketConfig,
                       grid_size: int = 20_000, regime: str = "fragmented", tau: float = 0.0) -> float:
    """Profit-maximising own quantity on a uniform grid, rivals held fixed.

    In the integrated regime the platform's own conservation constraint
    carries the share ``N_i/N`` of the pooled idle stock.
    """
    N = np.asarray(fleets, float)
    i = platform_index
    others = float(np.sum(others_quantities))
    share = N[i] / N.sum() if regime == "integrated" else 1.0
    _, qmax = peak_demand(N[i], config, share)
    q = np.linspace(0.0, 0.999 * qmax, int(grid_size))
    x = idle_from_demand(N[i], q, config, share)
    Q = np.maximum(others + q, 1e-300)
    commission = tau if regime == "integrated" else 0.0
    profit = q * (_B(config, Q) - config.beta * (config.T + _W(config, x)) - commission) - config.c * N[i]
    profit[0] = -config.c * N[i]
    return float(q[int(np.nanargmax(profit))])


def _zoom(centre, width, n):
    return np.linspace(max(centre - 2 * width, 0.0), centre + 2 * width, n)


def grid_welfare_max(regime: str, fleets, config: MarketConfig, grid_size: int | None = None,
                     refinements: int = 4) -> np.ndarray:
    """Welfare-maximising quantities on a grid, refined by repeated zooming."""
    N = np.asarray(fleets, float)
    beta, T, c = config.beta, config.T, config.c
    if regime == "integrated":
        n = grid_size or 100_000
        total = N.sum()
        _, qmax = peak_demand(total, config)
        grid_Q, table = _surplus_table(config, qmax)

        def welfare(Q):
            x = idle_from_demand(total, Q, config)
            return np.interp(Q, grid_Q, table) - Q * beta * (T + _W(config, x)) - c * total

        Q = np.linspace(0.0, 0.999 * qmax, n)
        for _ in range(refinements + 1):
            best = Q[int(np.argmax(welfare(Q)))]
            Q = _zoom(best, Q[1] - Q[0], 2001)
        return N / total * best
    if regime != "fragmented":
        raise ValueError(f"unknown regime {regime!r}")
    I = N.size
    if I > 3:
        raise DimensionError("fragmented welfare grid supports at most three platforms")
    n = grid_size or {1: 100_000, 2: 2_000, 3: 300}[I]
    qmax = np.array([peak_demand(n_i, config)[1] for n_i in N])
    grid_Q, table = _surplus_table(config, min(qmax.sum(), config.demand.q_bar))
    axes = [np.linspace(0.0, 0.999 * qm, n) for qm in qmax]
    for _ in range(refinements + 1):
        costs = [a * beta * (T + _W(config, idle_from_demand(n_i, a, config))) for a, n_i in zip(axes, N)]
        mesh = np.meshgrid(*axes, indexing="ij", sparse=True)
        cmesh = np.meshgrid(*costs, indexing="ij", sparse=True)
        total = sum(mesh)
        W = np.interp(total, grid_Q, table) - sum(cmesh)
        idx = np.unravel_index(int(np.argmax(W)), W.shape)
        best = np.array([a[k] for a, k in zip(axes, idx)])
        axes = [np.minimum(_zoom(b, a[1] - a[0], n), 0.999 * qm) for b, a, qm in zip(best, axes, qmax)]
    return best


def welfare_of(q, fleets, config: MarketConfig) -> float:
    """Fragmented welfare at arbitrary per-platform quantities."""
    q = np.asarray(q, float)
    N = np.asarray(fleets, float)
    Q = q.sum()
    gross = quad(lambda s: float(_B(config, s)), 0.0, Q, limit=200)[0] if Q > 0 else 0.0
    x = np.array([idle_from_demand(n, qi, config) for n, qi in zip(N, q)])
    return gross - float(np.sum(q * config.beta * (config.T + _W(config, x)))) - config.c * N.sum()


def random_perturbations(q, fleets, config: MarketConfig, n: int = 10_000, scale: float = 0.05,
                         seed: int = 0) -> tuple[float, np.ndarray]:
    """Welfare at ``q`` and at ``n`` random feasible perturbations of it.

    Both come from the same grid-based evaluation, so they compare fairly.
    """
    rng = np.random.default_rng(seed)
    q = np.asarray(q, float)
    N = np.asarray(fleets, float)
    qmax = np.array([peak_demand(n_i, config)[1] for n_i in N])
    trial = np.clip(q * (1 + scale * rng.uniform(-1, 1, size=(n, q.size))), 0.0, 0.999 * qmax)
    trial = np.vstack([q, trial])
    grid_Q, table = _surplus_table(config, min(qmax.sum(), config.demand.q_bar))
    welfare = np.interp(trial.sum(axis=1), grid_Q, table) - config.c * N.sum()
    for k, n_i in enumerate(N):
        x = idle_from_demand(n_i, trial[:, k], config)
        welfare -= trial[:, k] * config.beta * (config.T + _W(config, x))
    return float(welfare[0]), welfare[1:]


# -- mixed-market scan -------------------------------------------------------

@dataclass
class ScanResult:
    roots: list[tuple[float, float]]
    cells: int


def mixed_grid_scan(fares, tau: float, fleets, config: MarketConfig, Q_range: tuple[float, float],
                    n: int = 400) -> ScanResult:
    """Locate (Q, Q1) pairs solving the interior mixed conditions on a grid.

    Every platform is assumed to serve direct passengers, which pins its idle
    stock through ``F_i + beta (T + W(x_i)) = B(Q)``. The two residuals are
    direct-demand balance and integrator indifference. Cells where both change
    sign are merged into connected clusters, one per root.
    """
    F = np.asarray(fares, float)
    N = np.asarray(fleets, float)
    beta, T = config.beta, config.T
    m = config.matching
    Q = np.linspace(*Q_range, n)[:, None]
    s = np.linspace(0.0, 1.0, n)[None, :]
    Q1 = s * Q
    C = _B(config, Q)
    wait = (C[..., None] - F) / beta - T
    with np.errstate(invalid="ignore", divide="ignore"):
        x = np.where(wait > 0, (m.A / np.where(wait > 0, wait, 1.0)) ** (1 / m.kappa), np.nan)
    pool = x.sum(axis=-1)
    tw_pool = T + _W(config, pool)
    q2 = (N - x - (Q1 * tw_pool / pool)[..., None] * x) / (T + _W(config, x))
    r_dir = q2.sum(axis=-1) - (Q - Q1)
    r_int = (x / pool[..., None]) @ F + beta * tw_pool + tau - C
    r_int = np.broadcast_to(r_int, r_dir.shape)

    def flips(r):
        corners = np.stack([r[:-1, :-1], r[1:, :-1], r[:-1, 1:], r[1:, 1:]])
        return (np.nanmin(corners, 0) <= 0) & (np.nanmax(corners, 0) >= 0) & ~np.isnan(corners).any(0)

    both = flips(r_dir) & flips(r_int)

    labels, k = label(both, structure=np.ones((3, 3)))
    roots = []
    for lab in range(1, k + 1):
        ii, jj = np.nonzero(labels == lab)
        roots.append((float(Q[ii, 0].mean()), float((s[0, jj] * Q[ii, 0]).mean())))
    return ScanResult(roots=roots, cells=int(both.sum()))


# -- residual reports --------------------------------------------------------

OPTIMALITY = frozenset({"nash_foc", "nash_corner", "so_foc", "so_corner", "equal_fare",
                        "so_foc_per_platform", "normal_regime"})


@dataclass
class ResidualReport:
    residuals: dict[str, float]
    tolerances: dict[str, float]
    details: dict[str, float] = field(default_factory=dict)

    @property
    def max_abs(self) -> float:
        return max(abs(v) for v in self.residuals.values()) if self.residuals else 0.0

    @property
    def failures(self) -> list[str]:
        return [k for k, v in self.residuals.items() if not abs(v) <= self.tolerances[k]]

    @property
    def passed(self) -> bool:
        return not self.failures

    @property
    def dominant(self) -> str | None:
        """Residual furthest beyond its tolerance.

        Optimality conditions presume a consistent state, so a failing state
        equation takes precedence over them.
        """
        if not self.residuals:
            return None
        tiny = np.finfo(float).tiny
        failing = self.failures
        pool = [k for k in failing if k not in OPTIMALITY] or failing or list(self.residuals)
        return max(pool, key=lambda k: abs(self.residuals[k]) / max(self.tolerances[k], tiny))

    def summary(self) -> str:
        state = "pass" if self.passed else "FAIL(" + ",".join(self.failures) + ")"
        return f"{state} max|r|={self.max_abs:.3g}"


def _dxdq(config, q, x, lead=1.0):
    return -(config.T + _W(config, x)) / (lead + q * _Wp(config, x))


def _check_fragmented(eq: FragmentedEquilibrium, config: MarketConfig) -> ResidualReport:
    beta, T = config.beta, config.T
    act = eq.q > 0
    B = float(_B(config, eq.Q)) if eq.Q > 0 else np.inf
    r, tol = {}, {}
    cost = eq.fares + beta * (T + _W(config, eq.idle)) - B
    r["cost"] = float(np.max(np.abs(cost[act]), initial=0.0))
    r["conservation"] = float(np.max(np.abs(eq.fleets - eq.idle - eq.q * (T + _W(config, eq.idle))) / eq.fleets))
    r["total_demand"] = abs(eq.Q - float(eq.q.sum())) / max(eq.Q, 1.0)
    r["nonnegativity"] = float(max(0.0, -eq.q.min()))
    tol.update(cost=COST_TOL, conservation=CONSERVATION_TOL, total_demand=1e-12, nonnegativity=0.0)
    if eq.kind in ("nash", "social") and eq.Q > 0:
        slope = -1.0 / (config.demand.alpha * eq.Q) if isinstance(config.demand, ExponentialDemand) \
            else config.demand.inverse_demand_slope(eq.Q)
        own = eq.q * slope if eq.kind == "nash" else 0.0 * eq.q
        foc = B + own + beta * _dxdq(config, eq.q, eq.idle)
        corner = B - beta * (T + _W(config, eq.fleets))
        name = ("nash_foc", "nash_corner") if eq.kind == "nash" else ("so_foc", "so_corner")
        r[name[0]] = float(np.max(np.abs(foc[act]), initial=0.0))
        r[name[1]] = float(np.max(np.maximum(corner[~act], 0.0), initial=0.0))
        den = 1 + eq.q * _Wp(config, eq.idle)
        r["normal_regime"] = float(max(0.0, -np.min(den[act], initial=1.0)))
        tol.update({name[0]: FOC_TOL, name[1]: FOC_TOL, "normal_regime": 0.0})
    return ResidualReport(r, tol)


def _check_integrated(eq: IntegratedEquilibrium, config: MarketConfig) -> ResidualReport:
    beta, T = config.beta, config.T
    N, Q, x = eq.fleets, eq.Q, eq.idle_pool
    shares = N / N.sum()
    B = float(_B(config, Q)) if Q > 0 else np.inf
    tw = T + float(_W(config, x))
    r, tol = {}, {}
    r["cost"] = abs(float(shares @ eq.fares) + beta * tw + eq.tau - B) if Q > 0 else 0.0
    r["conservation"] = float(np.max(np.abs(N - shares * x - eq.q * tw) / N))
    r["total_demand"] = abs(Q - float(eq.q.sum())) / max(Q, 1.0)
    r["proportional_split"] = float(np.max(np.abs(eq.q - shares * Q))) / max(Q, 1.0)
    tol.update(cost=COST_TOL, conservation=CONSERVATION_TOL, total_demand=1e-12, proportional_split=1e-12)
    details = {}
    if eq.kind in ("nash", "social") and Q > 0:
        slope = -1.0 / (config.demand.alpha * Q) if isinstance(config.demand, ExponentialDemand) \
            else config.demand.inverse_demand_slope(Q)
        dNdQ = float(_dxdq(config, Q, x))
        # per-platform form: share * dN/dq_i with the pooled-share sensitivity
        per = shares * _dxdq(config, eq.q, x, lead=shares)
        if eq.kind == "nash":
            I = N.size
            r["nash_foc"] = abs(B + Q / I * slope + beta * dNdQ - eq.tau)
            r["equal_fare"] = float(np.ptp(eq.fares))
            details["nash_foc_per_platform_max"] = float(np.max(np.abs(B + eq.q * slope + beta * per - eq.tau)))
            tol.update(nash_foc=FOC_TOL, equal_fare=0.0)
        else:
            r["so_foc"] = abs(B + beta * dNdQ)
            r["so_foc_per_platform"] = float(np.max(np.abs(B + beta * per)))
            tol.update(so_foc=FOC_TOL, so_foc_per_platform=FOC_TOL)
        r["normal_regime"] = max(0.0, -(1 + Q * float(_Wp(config, x))))
        tol["normal_regime"] = 0.0
    return ResidualReport(r, tol, details)


def _check_mixed(eq: MixedEquilibrium, config: MarketConfig) -> ResidualReport:
    beta, T = config.beta, config.T
    N, x = eq.fleets, eq.idle
    pool = x.sum()
    tw_pool = T + float(_W(config, pool))
    c1 = float((x / pool) @ eq.fares) + beta * tw_pool + eq.tau
    c2 = eq.fares + beta * (T + _W(config, x))
    B = float(_B(config, eq.Q))
    r, tol = {}, {}
    r["integrator_cost"] = abs(c1 - eq.cost_int)
    r["direct_cost"] = float(np.max(np.abs(c2 - eq.cost_dir)))
    r["cost"] = abs(B - min(c1, float(c2.min())))
    r["integrator_complementarity"] = float(np.max(np.where(eq.q_int > 0, np.maximum(c1 - c2, 0.0), 0.0)))
    r["direct_complementarity"] = float(np.max(np.where(eq.q_dir > 0, np.maximum(c2 - c1, 0.0), 0.0)))
    resid = N - x - eq.q_int * tw_pool - eq.q_dir * (T + _W(config, x))
    r["conservation"] = float(np.max(np.abs(resid) / N))
    r["dispatch"] = float(np.max(np.abs(eq.q_int / eq.Q1 - x / pool))) if eq.Q1 > 0 else 0.0
    r["nonnegativity"] = float(max(0.0, -min(eq.q_int.min(), eq.q_dir.min())))
    tol.update(integrator_cost=COST_TOL, direct_cost=COST_TOL, cost=COST_TOL,
               integrator_complementarity=COST_TOL, direct_complementarity=COST_TOL,
               conservation=CONSERVATION_TOL, dispatch=1e-10, nonnegativity=0.0)
    return ResidualReport(r, tol)


def check_residuals(solution, config: MarketConfig) -> ResidualReport:
    """Evaluate every defining equation of the solution's regime."""
    if isinstance(solution, FragmentedEquilibrium):
        return _check_fragmented(solution, config)
    if isinstance(solution, IntegratedEquilibrium):
        return _check_integrated(solution, config)
    if isinstance(solution, MixedEquilibrium):
        return _check_mixed(solution, config)
    raise TypeError(f"cannot check {type(solution).__name__}")
