"""Market configuration and its JSON schema."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Sequence

from .demand import DemandModel, ExponentialDemand
from .errors import ParseError, ValidationError
from .matching import MatchingModel


@dataclass(frozen=True)
class PlatformFleet:
    fleet: float
    fare: float | None = None


@dataclass(frozen=True)
class MarketConfig:
    """Exogenous parameters shared by every solver.

    ``platforms`` is only consulted by the CLI; library solvers take fleets
    and fares explicitly so sweeps can vary them.
    """

    demand: DemandModel
    matching: MatchingModel
    beta: float
    c: float
    T: float
    tau: float = 0.0
    platforms: tuple[PlatformFleet, ...] = field(default_factory=tuple)

    @property
    def fleets(self) -> tuple[float, ...]:
        return tuple(p.fleet for p in self.platforms)

    @property
    def fares(self) -> tuple[float, ...] | None:
        fares = [p.fare for p in self.platforms]
        if not fares or any(f is None for f in fares):
            return None
        return tuple(fares)

    def with_platforms(self, fleets: Sequence[float], fares: Sequence[float] | None = None) -> "MarketConfig":
        fares = list(fares) if fares is not None else [None] * len(fleets)
        return replace(self, platforms=tuple(PlatformFleet(float(n), f) for n, f in zip(fleets, fares)))

    def to_dict(self) -> dict[str, Any]:
        return {
            "demand": {"type": self.demand.kind, "q_bar": self.demand.q_bar,
                       "alpha": getattr(self.demand, "alpha", None)},
            "matching": {"A": self.matching.A, "kappa": self.matching.kappa},
            "beta": self.beta, "c": self.c, "T": self.T, "tau": self.tau,
            "platforms": [{"fleet": p.fleet, "fare": p.fare} for p in self.platforms],
        }

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def baseline_config(fleets: Sequence[float] = (), tau: float = 0.0) -> MarketConfig:
    """Parameters of the numerical experiments (Hong Kong taxi calibration)."""
    cfg = MarketConfig(ExponentialDemand(1e5, 0.013), MatchingModel(5.0, 0.5),
                       beta=120.0, c=50.0, T=0.4, tau=tau)
    return cfg.with_platforms(fleets) if fleets else cfg


# -- loading ---------------------------------------------------------------

_TOP = {"demand", "matching", "beta", "c", "T", "tau", "platforms"}


def _keys(obj, allowed: set[str], required: set[str], path: str) -> None:
    if not isinstance(obj, dict):
        raise ValidationError(path or "<root>", "expected an object")
    for k in obj:
        if k not in allowed:
            raise ValidationError(f"{path}.{k}" if path else k, "unknown key")
    for k in sorted(required):
        if k not in obj:
            raise ValidationError(f"{path}.{k}" if path else k, "missing required key")


def _number(obj, key: str, path: str, positive: bool = False, optional: bool = False) -> float | None:
    where = f"{path}.{key}" if path else key
    v = obj.get(key)
    if v is None and optional:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ValidationError(where, "expected a finite number")
    if positive and v <= 0:
        raise ValidationError(where, "must be positive")
    return float(v)


def parse_config(raw: Any) -> MarketConfig:
    """Validate a decoded JSON document and build a :class:`MarketConfig`."""
    _keys(raw, _TOP, {"demand", "matching", "beta", "c", "T", "platforms"}, "")
    d = raw["demand"]
    _keys(d, {"type", "q_bar", "alpha"}, {"type", "q_bar", "alpha"}, "demand")
    if d["type"] != "exponential":
        raise ValidationError("demand.type", f"unsupported demand family {d['type']!r}")
    demand = ExponentialDemand(_number(d, "q_bar", "demand", True), _number(d, "alpha", "demand", True))
    m = raw["matching"]
    _keys(m, {"A", "kappa"}, {"A", "kappa"}, "matching")
    kappa = _number(m, "kappa", "matching", True)
    if kappa > 1:
        raise ValidationError("matching.kappa", "must lie in (0, 1]")
    matching = MatchingModel(_number(m, "A", "matching", True), kappa)
    plats = raw["platforms"]
    if not isinstance(plats, list) or not plats:
        raise ValidationError("platforms", "expected a non-empty list")
    fleets = []
    for i, p in enumerate(plats):
        where = f"platforms[{i}]"
        _keys(p, {"fleet", "fare"}, {"fleet"}, where)
        fare = _number(p, "fare", where, optional=True)
        if fare is not None and fare < 0:
            raise ValidationError(f"{where}.fare", "must be non-negative")
        fleets.append(PlatformFleet(_number(p, "fleet", where, True), fare))
    tau = _number(raw, "tau", "", optional=True)
    return MarketConfig(
        demand=demand, matching=matching,
        beta=_number(raw, "beta", "", True), c=_number(raw, "c", "", True),
        T=_number(raw, "T", "", True), tau=0.0 if tau is None else tau,
        platforms=tuple(fleets),
    )


def load_config(path: str | Path) -> MarketConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc})") from exc
    return parse_config(raw)
