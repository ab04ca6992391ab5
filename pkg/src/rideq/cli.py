"""Command-line entry point ``rideq``.

Exit codes: 0 success, 2 validation error, 3 solver failure, 4 invariant failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import experiments, fragmented, integrated, mixed, oracle
from .config import MarketConfig, load_config
from .errors import ConfigError, RideqError, ValidationError

EXIT_OK, EXIT_VALIDATION, EXIT_SOLVER, EXIT_INVARIANT = 0, 2, 3, 4

REGIMES = ("fragmented-ne", "fragmented-so", "integrated-ne", "integrated-so", "mixed")


def _solve(cfg: MarketConfig, regime: str, tau: float):
    fleets = cfg.fleets
    if regime == "fragmented-ne":
        return fragmented.solve_nash(fleets, cfg)
    if regime == "fragmented-so":
        return fragmented.solve_social_optimum(fleets, cfg)
    if regime == "integrated-ne":
        return integrated.solve_nash(tau, fleets, cfg)
    if regime == "integrated-so":
        return integrated.solve_social_optimum(fleets, cfg)
    if cfg.fares is None:
        raise ValidationError("platforms[].fare", "the mixed regime needs a fare for every platform")
    eq = mixed.solve_mixed(cfg.fares, tau, fleets, cfg)
    return eq, mixed.metrics(eq, cfg)


def _solution_table(eq, mt, regime: str) -> experiments.SweepTable:
    label = getattr(eq, "regime", None)
    label = getattr(label, "value", regime) if not isinstance(eq, fragmented.FragmentedEquilibrium) else regime
    if isinstance(eq, mixed.MixedEquilibrium):
        q, idle = eq.q_int + eq.q_dir, eq.idle
    else:
        q, idle = eq.q, eq.idle
    cols = ["platform", "fleet", "q", "idle", "fare", "profit", "utilization",
            "Q", "cost", "consumer_surplus", "welfare", "integrator_revenue", "regime"]
    rows = []
    for i in range(len(eq.fleets)):
        rows.append([i + 1, eq.fleets[i], q[i], idle[i], eq.fares[i], mt.profits[i], mt.utilization[i],
                     eq.Q, eq.cost, mt.consumer_surplus, mt.welfare, mt.integrator_revenue, label])
    return experiments.SweepTable(cols, rows)


def cmd_solve(args) -> int:
    cfg = load_config(args.config)
    tau = cfg.tau if args.tau is None else args.tau
    eq, mt = _solve(cfg, args.regime, tau)
    rep = oracle.check_residuals(eq, cfg)
    table = _solution_table(eq, mt, args.regime)
    if args.out:
        experiments.emit(table, "csv", args.out)
    else:
        sys.stdout.write("\n".join(experiments._lines(table, "csv")) + "\n")
    print(f"residuals: {rep.summary()}", file=sys.stderr)
    return EXIT_OK if rep.passed else EXIT_INVARIANT


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.kind == "platforms":
        table = experiments.sweep_platform_count(cfg, range(1, (args.steps or 15) + 1), workers=args.workers)
    elif args.kind == "fleet":
        table = experiments.sweep_fleet_scaling(cfg, args.steps if args.steps is not None else 30,
                                                workers=args.workers)
    else:
        table = experiments.sweep_commission_cli(cfg, n_tau=args.steps or 200, workers=args.workers)
    suffix = "csv" if args.format == "csv" else "plotdata"
    experiments.emit(table, args.format, out / f"{args.kind}.{suffix}")
    experiments.write_meta(table, out / f"{args.kind}.meta.json")
    failed = [r for r in table.rows if r[-1] != "ok"]
    for r in failed:
        print(f"marked row: {r[0]} {r[1]} -> {r[-1]}", file=sys.stderr)
    return EXIT_INVARIANT if failed else EXIT_OK


def _verify_checks(cfg: MarketConfig):
    """Yield (name, passed, detail) for the invariant and oracle suite."""
    fleets = np.asarray(cfg.fleets)
    I = fleets.size
    fne, mne = fragmented.solve_nash(fleets, cfg)
    fso, mso = fragmented.solve_social_optimum(fleets, cfg)
    ine, mine = integrated.solve_nash(cfg.tau, fleets, cfg)
    iso, miso = integrated.solve_social_optimum(fleets, cfg)
    for name, eq in (("fragmented-ne", fne), ("fragmented-so", fso), ("integrated-ne", ine), ("integrated-so", iso)):
        rep = oracle.check_residuals(eq, cfg)
        yield f"residuals {name}", rep.passed, rep.summary()
    for i in range(I):
        br = oracle.grid_best_response(i, np.delete(fne.q, i), fleets, cfg)
        yield f"best response fragmented platform {i + 1}", abs(br - fne.q[i]) <= 1e-3 * fne.q[i], f"grid {br:.6g} solver {fne.q[i]:.6g}"
    if np.ptp(fleets) == 0:
        br = oracle.grid_best_response(0, ine.q[1:], fleets, cfg, regime="integrated", tau=cfg.tau)
        yield "best response integrated", abs(br - ine.q[0]) <= 1e-3 * ine.q[0], f"grid {br:.6g} solver {ine.q[0]:.6g}"
    g = oracle.grid_welfare_max("integrated", fleets, cfg)
    yield "welfare grid integrated", np.allclose(g, iso.q, rtol=1e-3), f"grid {g.sum():.6g} solver {iso.Q:.6g}"
    if I <= 3:
        g = oracle.grid_welfare_max("fragmented", fleets, cfg)
        yield "welfare grid fragmented", np.allclose(g, fso.q, rtol=1e-3), f"grid {np.round(g, 3)} solver {np.round(fso.q, 3)}"
    m = cfg.matching
    for i in np.flatnonzero(fne.q > 0):
        fd = oracle.finite_difference(lambda q: m.solve_idle_platform(fleets[i], q, cfg.T).idle_vehicles,
                                      fne.q[i], 1e-6 * fne.q[i])
        an = m.idle_sensitivity(fne.q[i], fne.idle[i], cfg.T)[0]
        yield f"idle sensitivity platform {i + 1}", abs(fd / an - 1) < 1e-6, f"fd {fd:.8g} formula {an:.8g}"
    if I >= 2:
        yield "integrated Nash welfare exceeds fragmented", mine.welfare > mne.welfare, f"{mine.welfare:.6g} vs {mne.welfare:.6g}"
        ok = miso.welfare >= mso.welfare - 1e-9 * abs(mso.welfare)
        yield "integrated optimum welfare not below fragmented", ok, f"{miso.welfare:.6g} vs {mso.welfare:.6g}"
    for name, mt in (("fragmented-ne", mne), ("fragmented-so", mso), ("integrated-ne", mine), ("integrated-so", miso)):
        gap = mt.consumer_surplus + mt.total_profit + mt.integrator_revenue - mt.welfare
        yield f"welfare identity {name}", abs(gap) <= 1e-6 * abs(mt.welfare), f"gap {gap:.3g}"
    if cfg.fares is not None:
        me = mixed.solve_mixed(cfg.fares, cfg.tau, fleets, cfg)
        rep = oracle.check_residuals(me, cfg)
        yield f"residuals mixed ({me.regime.value})", rep.passed, rep.summary()


def cmd_verify(args) -> int:
    cfg = load_config(args.config)
    ok = True
    for name, passed, detail in _verify_checks(cfg):
        ok &= bool(passed)
        print(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
    return EXIT_OK if ok else EXIT_INVARIANT


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rideq", description="Ride-sourcing market equilibria with and without integration.")
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("solve", help="solve one market regime for the configured platforms")
    s.add_argument("--config", required=True)
    s.add_argument("--regime", required=True, choices=REGIMES)
    s.add_argument("--tau", type=float, default=None, help="commission (HKD/trip); defaults to the config value")
    s.add_argument("--out", default=None, help="CSV path; stdout when omitted")
    s.set_defaults(func=cmd_solve)
    w = sub.add_parser("sweep", help="run one of the experiment sweeps")
    w.add_argument("kind", choices=("platforms", "fleet", "commission"))
    w.add_argument("--config", required=True)
    w.add_argument("--out", required=True, help="output directory")
    w.add_argument("--steps", type=int, default=None,
                   help="max platform count / scaling steps / commission grid points")
    w.add_argument("--format", choices=("csv", "plotdata"), default="csv")
    w.add_argument("--workers", type=int, default=1)
    w.set_defaults(func=cmd_sweep)
    v = sub.add_parser("verify", help="run the invariant and oracle suite")
    v.add_argument("--config", required=True)
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_VALIDATION if exc.code else EXIT_OK
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except RideqError as exc:
        print(f"solver failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
