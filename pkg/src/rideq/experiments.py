"""Reproducible parameter sweeps and their CSV / plot-data emission."""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import fragmented, integrated, mixed, oracle
from .config import MarketConfig
from .errors import IoError

ERROR = "ERR"
SCENARIOS = ((2000.0, 2000.0, 2000.0), (3000.0, 3000.0, 3000.0),
             (3000.0, 2000.0, 1000.0), (4000.0, 3000.0, 2000.0))


@dataclass
class Panel:
    name: str
    x: str
    series: list[str]
    rows: slice | None = None


@dataclass
class SweepTable:
    columns: list[str]
    rows: list[list] = field(default_factory=list)
    meta: dict = field(default_factory=dict)
    panels: list[Panel] = field(default_factory=list)

    def column(self, name: str) -> list:
        j = self.columns.index(name)
        return [r[j] for r in self.rows]

    def array(self, name: str) -> np.ndarray:
        return np.array([np.nan if v == ERROR else v for v in self.column(name)], dtype=float)


def _status(*solutions, config) -> str:
    bad = []
    for s in solutions:
        rep = oracle.check_residuals(s, config)
        bad += rep.failures
    return "ok" if not bad else "residual:" + "|".join(sorted(set(bad)))


def _run(fn: Callable, args: Iterable, workers: int) -> list:
    args = list(args)
    if workers <= 1:
        return [fn(*a) for a in args]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, *zip(*args)))


# -- section: platform count -----------------------------------------------

_REG5 = ("frag_ne", "frag_so", "int_ne", "int_so", "unchanged")
_FIELDS5 = ("Q", "F", "profit", "cs", "welfare")


def _platform_row(config: MarketConfig, I: int, total: float) -> list:
    fl = [total / I] * I
    try:
        fne, mne = fragmented.solve_nash(fl, config)
        fso, mso = fragmented.solve_social_optimum(fl, config)
        ine, mine = integrated.solve_nash(config.tau, fl, config)
        iso, miso = integrated.solve_social_optimum(fl, config)
        unc, munc = integrated.unchanged_fare_outcome(fne.fares, config.tau, fl, config)
    except Exception as exc:
        return [I] + [ERROR] * (len(_REG5) * len(_FIELDS5) + 1) + [f"error:{type(exc).__name__}"]
    cells = [I]
    for eq, mt in ((fne, mne), (fso, mso), (ine, mine), (iso, miso), (unc, munc)):
        fare = float(np.mean(eq.fares))
        cells += [eq.Q, fare, mt.total_profit, mt.consumer_surplus, mt.welfare]
    cells.append(fragmented.demand_threshold(fne, ine, I, config) if config.tau == 0 else ERROR)
    cells.append(_status(fne, fso, ine, iso, unc, config=config))
    return cells


def sweep_platform_count(config: MarketConfig, I_range: Sequence[int] = range(1, 16),
                         total_fleet: float = 2.0e4, workers: int = 1) -> SweepTable:
    """Split a fixed total fleet equally among I platforms for each I."""
    cols = ["I"] + [f"{r}_{f}" for r in _REG5 for f in _FIELDS5] + ["tau_bar", "status"]
    rows = _run(_platform_row, ((config, int(I), float(total_fleet)) for I in I_range), workers)
    titles = {"Q": "total realized demand", "F": "trip fare", "profit": "total platform profit",
              "welfare": "social welfare"}
    panels = [Panel(f"platforms {titles[f]}", "I", [f"{r}_{f}" for r in _REG5])
              for f in ("Q", "F", "profit", "welfare")]
    meta = {"sweep": "platforms", "total_fleet": total_fleet, "config": config.digest(),
            "regimes": list(_REG5)}
    return SweepTable(cols, rows, meta, panels)


# -- section: fleet scaling ----------------------------------------------------

_REG4 = ("frag_ne", "frag_so", "int_ne", "unchanged")


def _fleet_row(config: MarketConfig, step: int, base: tuple, factor: float) -> list:
    fl = [b * factor**step for b in base]
    n = len(fl)
    try:
        fne, mne = fragmented.solve_nash(fl, config)
        fso, mso = fragmented.solve_social_optimum(fl, config)
        ine, mine = integrated.solve_nash(config.tau, fl, config)
        unc, munc = integrated.unchanged_fare_outcome(fne.fares, config.tau, fl, config)
    except Exception as exc:
        return [step, sum(fl)] + [ERROR] * (3 * n * len(_REG4)) + [f"error:{type(exc).__name__}"]
    cells = [step, sum(fl)]
    for eq, mt in ((fne, mne), (fso, mso), (ine, mine), (unc, munc)):
        for i in range(n):
            cells += [eq.q[i], mt.utilization[i], mt.profits[i]]
    cells.append(_status(fne, fso, ine, unc, config=config))
    return cells


def sweep_fleet_scaling(config: MarketConfig, scale_steps: int = 30,
                        base: Sequence[float] = (500.0, 400.0, 300.0), factor: float = 1.1,
                        workers: int = 1) -> SweepTable:
    """Scale every fleet by ``factor`` per step, rows for steps 0..scale_steps."""
    base = tuple(float(b) for b in base)
    n = len(base)
    cols = ["step", "N_total"] + [f"{r}_{v}{i + 1}" for r in _REG4 for i in range(n) for v in ("q", "U", "P")]
    cols.append("status")
    rows = _run(_fleet_row, ((config, k, base, factor) for k in range(scale_steps + 1)), workers)

    def ser(regs, v):
        return [f"{r}_{v}{i + 1}" for r in regs for i in range(n)]

    panels = [
        Panel("fleet utilization at Nash equilibrium", "N_total", ser(("frag_ne", "int_ne"), "U")),
        Panel("fleet utilization at social optimum", "N_total", ser(("frag_so",), "U")),
        Panel("fleet demand with reoptimized fares", "N_total", ser(("frag_ne", "int_ne"), "q")),
        Panel("fleet demand with unchanged fares", "N_total", ser(("frag_ne", "unchanged"), "q")),
        Panel("fleet profit with reoptimized fares", "N_total", ser(("frag_ne", "int_ne"), "P")),
        Panel("fleet profit with unchanged fares", "N_total", ser(("frag_ne", "unchanged"), "P")),
    ]
    meta = {"sweep": "fleet", "base": list(base), "factor": factor, "steps": scale_steps,
            "config": config.digest(), "regimes": list(_REG4)}
    return SweepTable(cols, rows, meta, panels)


# -- section: commission -------------------------------------------------------

def _label(fleets) -> str:
    return "-".join(f"{f:g}" for f in fleets)


def _commission_rows(config: MarketConfig, fleets: tuple, fare: float, tau_grid, n_tau: int) -> list:
    fares = [fare] * len(fleets)
    try:
        rng = mixed.commission_range(fares, fleets, config)
    except Exception as exc:
        return [[_label(fleets), ERROR, ERROR, ERROR, ERROR, ERROR, ERROR, ERROR, f"error:{type(exc).__name__}"]]
    grid = np.linspace(rng.tau_1 - 2, rng.tau_2 + 2, n_tau) if tau_grid is None else np.asarray(tau_grid, float)
    out = []
    for r in mixed.sweep_commission(fares, fleets, config, grid):
        if r["error"]:
            out.append([_label(fleets), r["tau"], ERROR, ERROR, ERROR, ERROR, rng.tau_1, rng.tau_2,
                        "error:" + r["error"].split(":")[0]])
            continue
        status = _status(r["equilibrium"], config=config)
        out.append([_label(fleets), r["tau"], r["Q"], r["Q1"], r["Q2"], r["regime"], rng.tau_1, rng.tau_2, status])
    return out


def sweep_commission_cli(config: MarketConfig, scenario_fleets: Sequence[Sequence[float]] = SCENARIOS,
                         tau_grid: Sequence[float] | None = None, fare: float = 70.0,
                         n_tau: int = 200, workers: int = 1) -> SweepTable:
    """Mixed-market demand against commission for each fleet scenario at a common fare."""
    cols = ["scenario", "tau", "Q", "Q1", "Q2", "regime", "tau_1", "tau_2", "status"]
    blocks = _run(_commission_rows, ((config, tuple(map(float, s)), fare, tau_grid, n_tau)
                                     for s in scenario_fleets), workers)
    rows, panels, start = [], [], 0
    for s, block in zip(scenario_fleets, blocks):
        rows += block
        panels.append(Panel(f"commission scenario {_label(s)}", "tau", ["Q", "Q1", "Q2"], slice(start, start + len(block))))
        start += len(block)
    meta = {"sweep": "commission", "fare": fare, "scenarios": [_label(s) for s in scenario_fleets],
            "config": config.digest(), "regimes": [r.value for r in mixed.MixedRegime]}
    return SweepTable(cols, rows, meta, panels)


# -- emission ------------------------------------------------------------------

def format_cell(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.12g}"


def _lines(table: SweepTable, fmt: str) -> list[str]:
    if fmt == "csv":
        return [",".join(table.columns)] + [",".join(format_cell(v) for v in r) for r in table.rows]
    if fmt != "plotdata":
        raise ValueError(f"unknown format {fmt!r}")
    out = []
    for p in table.panels:
        idx = [table.columns.index(c) for c in [p.x] + p.series]
        rows = table.rows[p.rows] if p.rows is not None else table.rows
        out.append(f"# {p.name}")
        out.append(",".join([p.x] + p.series))
        out += [",".join(format_cell(r[j]) for j in idx) for r in rows]
        out.append("")
    return out


def emit(table: SweepTable, fmt: str, path: str | Path) -> None:
    """Write ``table`` as CSV or plot-data blocks (LF endings, 12 significant digits)."""
    text = "\n".join(_lines(table, fmt)) + "\n"
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def write_meta(table: SweepTable, path: str | Path) -> None:
    try:
        Path(path).write_text(json.dumps(table.meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def read_csv(path: str | Path) -> tuple[list[str], list[list[str]]]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return lines[0].split(","), [ln.split(",") for ln in lines[1:]]
