"""Matching friction: waiting time, vehicle conservation and branch curves.

Vehicle conservation ``N = share * x + q * (T + W(x))`` links the idle
stock x to the served demand q. Solved for q it gives the inverted-U branch
curve ``f(x) = (N - share * x) / (T + W(x))``. Points right of its peak
form the Normal regime and points left of it the wild-goose-chase (WGC)
regime.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq

from .errors import DomainError, InfeasibleDemand, RegimeError

FEASIBILITY_RTOL = 1e-9
_RTOL = 4 * np.finfo(float).eps


class Regime(str, enum.Enum):
    NORMAL = "Normal"
    WGC = "WGC"


class Mode(str, enum.Enum):
    PLATFORM = "platform"
    POOLED_SHARE = "pooled-share"
    POOLED_TOTAL = "pooled-total"


@dataclass(frozen=True)
class IdleSolution:
    idle_vehicles: float
    regime: Regime
    residual: float


def _scalar(a):
    return float(a) if np.ndim(a) == 0 else a


@dataclass(frozen=True)
class MatchingModel:
    """Power-law pick-up time ``W(x) = A * x**(-kappa)``."""

    A: float
    kappa: float

    def __post_init__(self):
        if not (np.isfinite(self.A) and self.A > 0):
            raise DomainError(f"A must be positive, got {self.A}")
        if not (0 < self.kappa <= 1):
            raise DomainError(f"kappa must lie in (0, 1], got {self.kappa}")

    # -- waiting time -----------------------------------------------------

    def waiting_time(self, N_v):
        x = self._positive(N_v)
        return _scalar(self.A * x ** (-self.kappa))

    def waiting_time_derivatives(self, N_v):
        x = self._positive(N_v)
        k, A = self.kappa, self.A
        return _scalar(-k * A * x ** (-k - 1)), _scalar(k * (k + 1) * A * x ** (-k - 2))

    def idle_for_wait(self, w):
        """Inverse of W: the idle stock giving waiting time ``w`` (w > 0)."""
        w = np.asarray(w, dtype=float)
        if np.any(w <= 0):
            raise DomainError("waiting time must be positive")
        return _scalar((self.A / w) ** (1.0 / self.kappa))

    def _positive(self, N_v):
        x = np.asarray(N_v, dtype=float)
        if np.any(~(x > 0)):
            raise DomainError(f"idle vehicle count must be positive, got {N_v}")
        return x

    # -- branch curves ----------------------------------------------------

    def branch(self, x, N, T, share=1.0):
        """Sustainable demand ``(N - share*x) / (T + W(x))``."""
        return _scalar((N - share * np.asarray(x, float)) / (T + self.waiting_time(x)))

    def branch_slope(self, x, N, T, share=1.0):
        f = self.branch(x, N, T, share)
        wp, _ = self.waiting_time_derivatives(x)
        return _scalar(-(share + f * wp) / (T + self.waiting_time(x)))

    @lru_cache(maxsize=4096)
    def peak_idle(self, N: float, T: float, share: float = 1.0) -> float:
        """Abscissa of the branch-curve maximum.

        The curve is an inverted U, so the stationarity condition
        ``share + f(x) W'(x) = 0`` changes sign exactly once on (0, N/share).
        """
        if N <= 0 or share <= 0:
            raise DomainError("fleet and share must be positive")
        hi = N / share

        def stat(x):
            return share + self.branch(x, N, T, share) * self.waiting_time_derivatives(x)[0]

        lo = 1e-9 * hi
        while stat(lo) >= 0:
            lo *= 1e-3
            if lo < 1e-300:
                raise RegimeError("branch curve has no interior peak")
        return brentq(stat, lo, hi, xtol=1e-14 * hi, rtol=_RTOL, maxiter=200)

    def max_feasible_demand(self, N: float, T: float, share: float = 1.0) -> float:
        """Largest demand a fleet can sustain in a stationary state."""
        return self.branch(self.peak_idle(float(N), float(T), float(share)), N, T, share)

    def evaluate_branch_curve(self, kind: str, x: float, T: float,
                              N_i: float | None = None, N: float | None = None) -> float:
        """Evaluate one of the named curves.

        ``f_i``: (N_i - x)/(T + W(x)); ``g_i``: idleness ratio with u = x in (0, 1);
        ``f_tilde_i``: (N_i - (N_i/N) x)/(T + W(x)); ``f_tilde_I``: (N - x)/(T + W(x)).
        """
        if kind == "f_i":
            if not 0 < x <= N_i:
                raise DomainError("f_i needs 0 < x <= N_i")
            return self.branch(x, N_i, T)
        if kind == "g_i":
            if not 0 < x < 1:
                raise DomainError("g_i needs 0 < u < 1")
            return (1 - x) * T / (T + self.waiting_time(N_i * x))
        if kind == "f_tilde_i":
            if not 0 < x <= N:
                raise DomainError("f_tilde_i needs 0 < x <= N")
            return self.branch(x, N_i, T, share=N_i / N)
        if kind == "f_tilde_I":
            if not 0 < x <= N:
                raise DomainError("f_tilde_I needs 0 < x <= N")
            return self.branch(x, N, T)
        raise DomainError(f"unknown branch curve {kind!r}")

    # -- conservation inversion ------------------------------------------

    def solve_idle(self, N: float, q: float, T: float, share: float = 1.0) -> IdleSolution:
        """Normal-regime root of ``N = share*x + q*(T + W(x))``."""
        if N <= 0:
            raise DomainError("fleet size must be positive")
        if q < 0:
            raise DomainError("demand must be non-negative")
        hi = N / share
        if q == 0:
            return IdleSolution(hi, Regime.NORMAL, 0.0)
        pk = self.peak_idle(float(N), float(T), float(share))
        q_pk = self.branch(pk, N, T, share)
        if q > q_pk * (1 + FEASIBILITY_RTOL):
            raise InfeasibleDemand(f"demand {q:.6g} exceeds the feasibility peak {q_pk:.6g}")
        if q >= q_pk:
            x = pk
        else:
            def resid(x):
                return N - share * x - q * (T + self.waiting_time(x))
            x = brentq(resid, pk, hi, xtol=1e-13 * hi, rtol=_RTOL, maxiter=200)
        r = N - share * x - q * (T + self.waiting_time(x))
        regime = self.wgc_classify(q, x, share, Mode.POOLED_SHARE)
        return IdleSolution(x, regime, r)

    def solve_idle_platform(self, N_i: float, q_i: float, T: float) -> IdleSolution:
        return self.solve_idle(N_i, q_i, T)

    def solve_idle_pooled(self, N: float, Q: float, T: float) -> IdleSolution:
        return self.solve_idle(N, Q, T)

    # -- regime and sensitivities ----------------------------------------

    def _denominator(self, q, N_v, share, mode) -> float:
        wp, _ = self.waiting_time_derivatives(N_v)
        lead = share if Mode(mode) is Mode.POOLED_SHARE else 1.0
        return lead + q * wp

    def wgc_classify(self, q: float, N_v: float, share: float = 1.0,
                     mode: Mode | str = Mode.PLATFORM) -> Regime:
        return Regime.NORMAL if self._denominator(q, N_v, share, mode) > 0 else Regime.WGC

    def idle_sensitivity(self, q: float, N_v: float, T: float, share: float = 1.0,
                         mode: Mode | str = Mode.PLATFORM) -> tuple[float, float]:
        """First and second derivative of the Normal root with respect to q."""
        den = self._denominator(q, N_v, share, mode)
        if den <= 0:
            raise RegimeError(f"denominator {den:.3g} <= 0: point is not in the Normal regime")
        wp, wpp = self.waiting_time_derivatives(N_v)
        tw = T + self.waiting_time(N_v)
        first = -tw / den
        second = tw * (2 * wp + q * wpp * first) / den**2
        return first, second


def wait_cost_idle(model: MatchingModel, wait):
    """Vectorised W^-1 that maps non-positive waits to +inf (unbounded idle stock)."""
    wait = np.asarray(wait, dtype=float)
    out = np.full(wait.shape, np.inf)
    pos = wait > 0
    out[pos] = (model.A / wait[pos]) ** (1.0 / model.kappa)
    return out
