"""Acceptance criteria 1-12.

Each test records one PASS/FAIL line, printed in the terminal summary.
"""

import numpy as np
import pytest

from rideq import experiments, fragmented, integrated, mixed, oracle
from rideq.mixed import MixedRegime

from conftest import BASE_FLEETS, TOTAL_FLEET

FAMILY = range(2, 16)
F70 = [70.0, 70.0, 70.0]


def _rise_then_fall(series) -> bool:
    s = np.asarray(series, float)
    k = int(np.argmax(s))
    d = np.diff(s)
    return 0 < k < s.size - 1 and bool(np.all(d[:k] > 0) and np.all(d[k:] < 0))


def _rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


# -- 1-6: structural results ---------------------------------------------------

def test_c01_integration_raises_nash_welfare(family, record_criterion):
    margins = {I: family[I]["mine"].welfare - family[I]["mne"].welfare for I in FAMILY}
    worst = min(margins.values())
    assert record_criterion("1  integrated NE welfare > fragmented, I=2..15", worst > 0, f"min margin {worst:.6g}")


def test_c02_integration_weakly_raises_optimal_welfare(cfg, family, record_criterion):
    cases = [family[I] for I in FAMILY]
    cases.append({"miso": integrated.solve_social_optimum(BASE_FLEETS, cfg)[1],
                  "mso": fragmented.solve_social_optimum(BASE_FLEETS, cfg)[1]})
    slack = [c["miso"].welfare - c["mso"].welfare + 1e-9 * abs(c["mso"].welfare) for c in cases]
    ok = min(slack) >= 0
    assert record_criterion("2  integrated SO welfare >= fragmented (1e-9 rel)", ok, f"min slack {min(slack):.6g}")


def test_c03a_integration_raises_nash_demand(family, record_criterion):
    gap = min(family[I]["ine"].Q - family[I]["fne"].Q for I in FAMILY)
    assert record_criterion("3a integrated NE demand > fragmented, I=2..15", gap > 0, f"min gap {gap:.6g}")


def test_c03b_integration_raises_optimal_demand(family, record_criterion):
    gap = min(family[I]["iso"].Q - family[I]["fso"].Q for I in FAMILY)
    assert record_criterion("3b integrated SO demand > fragmented, I=2..15", gap > 0, f"min gap {gap:.6g}")


def test_c03c_threshold_premise(cfg, family, record_criterion):
    tb = {I: fragmented.demand_threshold(family[I]["fne"], family[I]["ine"], I, cfg) for I in FAMILY}
    worst = min(tb.values())
    assert record_criterion("3c demand threshold > 0, I=2..15", worst > 0,
                            f"min {worst:.6g} at I={min(tb, key=tb.get)}")


def test_c04_fleet_size_ordering(cfg, scaling, record_criterion):
    x = np.geomspace(1.0, 1e6, 2000)
    premise = bool(np.all(np.diff(x * cfg.matching.waiting_time_derivatives(x)[0]) > 0))
    bad = []
    for k, s in enumerate(scaling):
        for key in ("fne", "fso"):
            eq = s[key]
            if not (np.all(np.diff(eq.q) < 0) and np.all(np.diff(eq.idle) < 0)):
                bad.append(f"{key}@{k}")
        if not np.all(np.diff(s["mso"].utilization) < 0):
            bad.append(f"U_so@{k}")
        for key in ("mine", "miso"):
            u = s[key].utilization
            if np.ptp(u) > 1e-10 * u.max():
                bad.append(f"{key}@{k}")
    ok = premise and not bad
    assert record_criterion("4  ordering by fleet size, steps 0..30", ok,
                            "all steps" if ok else f"premise={premise} failures={bad[:5]}")


def test_c05_optimum_invariant_to_platform_count(family, record_criterion):
    Q = np.array([family[I]["iso"].Q for I in range(1, 16)])
    S = np.array([family[I]["miso"].welfare for I in range(1, 16)])
    spread = max(np.ptp(Q) / Q.mean(), np.ptp(S) / S.mean())
    assert record_criterion("5  integrated SO invariant in I", spread < 1e-8, f"spread {spread:.3g}")


def test_c06_monopoly_identity(family, record_criterion):
    s = family[1]
    errs = [_rel(s["ine"].Q, s["fne"].Q), _rel(s["ine"].fare, s["fne"].fares[0]),
            _rel(s["mine"].total_profit, s["mne"].total_profit), _rel(s["mine"].welfare, s["mne"].welfare)]
    assert record_criterion("6  monopoly identity", max(errs) < 1e-9, f"max rel {max(errs):.3g}")


# -- 7-8: oracles and derivatives --------------------------------------------------

def test_c07a_nash_matches_grid_best_response(cfg, family, record_criterion):
    worst = 0.0
    cases = [(family[I], [TOTAL_FLEET / I] * I) for I in range(1, 16)]
    base = {"fne": fragmented.solve_nash(BASE_FLEETS, cfg)[0], "ine": integrated.solve_nash(0.0, BASE_FLEETS, cfg)[0]}
    cases.append((base, list(BASE_FLEETS)))
    for sol, fleets in cases:
        for key, regime in (("fne", "fragmented"), ("ine", "integrated")):
            q = sol[key].q
            # equal fleets give equal quantities, so one platform represents all
            idx = [0] if np.ptp(fleets) == 0 and np.ptp(q) <= 1e-12 * q.max() else range(len(fleets))
            for i in idx:
                br = oracle.grid_best_response(i, np.delete(q, i), fleets, cfg, regime=regime)
                worst = max(worst, _rel(br, q[i]))
    assert record_criterion("7a NE vs grid best response (0.1%)", worst < 1e-3, f"max rel {worst:.3g}")


def test_c07b_optimum_matches_grid_welfare(cfg, family, record_criterion):
    worst = 0.0
    for fleets in ([TOTAL_FLEET], list(BASE_FLEETS)):
        iso = integrated.solve_social_optimum(fleets, cfg)[0]
        worst = max(worst, np.max(np.abs(oracle.grid_welfare_max("integrated", fleets, cfg) / iso.q - 1)))
    for fleets in ([TOTAL_FLEET], [TOTAL_FLEET / 2] * 2, [TOTAL_FLEET / 3] * 3, list(BASE_FLEETS)):
        fso = fragmented.solve_social_optimum(fleets, cfg)[0]
        worst = max(worst, np.max(np.abs(oracle.grid_welfare_max("fragmented", fleets, cfg) / fso.q - 1)))
    assert record_criterion("7b SO vs grid welfare max (0.1%)", worst < 1e-3, f"max rel {worst:.3g}")


def test_c07c_first_order_residuals(cfg, family, scaling, record_criterion):
    names = ("nash_foc", "so_foc", "so_foc_per_platform")
    worst, failed = 0.0, []
    for tag, sols in [(f"I={I}", family[I]) for I in family] + [(f"step {k}", s) for k, s in enumerate(scaling)]:
        for key in ("fne", "fso", "ine", "iso"):
            rep = oracle.check_residuals(sols[key], cfg)
            worst = max([worst] + [rep.residuals[n] for n in names if n in rep.residuals])
            if not rep.passed:
                failed.append(f"{tag}/{key}")
    ok = worst < 1e-8 and not failed
    assert record_criterion("7c FOC residuals < 1e-8", ok, f"max {worst:.3g} failures {failed[:5]}")


def test_c08_derivatives_match_finite_differences(cfg, record_criterion):
    m, T, dem = cfg.matching, cfg.T, cfg.demand
    rng = np.random.default_rng(12345)
    worst = 0.0
    for _ in range(100):
        N_i = rng.uniform(300.0, 2e4)
        N = N_i * rng.uniform(1.0, 5.0)
        share = N_i / N
        for mode, s, fleet in (("platform", 1.0, N_i), ("pooled-share", share, N_i), ("pooled-total", 1.0, N)):
            pk = m.peak_idle(fleet, T, s)
            x = rng.uniform(pk + 0.1 * (fleet / s - pk), 0.9 * fleet / s)
            q = float(m.branch(x, fleet, T, s))
            an = m.idle_sensitivity(q, x, T, s, mode)[0]
            fd = oracle.finite_difference(lambda v: m.solve_idle(fleet, v, T, s).idle_vehicles, q, 1e-4 * q)
            worst = max(worst, _rel(fd, an))
        Q = rng.uniform(1e2, 0.99 * dem.q_bar)
        fd = oracle.finite_difference(dem.inverse_demand, Q, 1e-4 * Q)
        worst = max(worst, _rel(fd, dem.inverse_demand_slope(Q)))
    assert record_criterion("8  sensitivities and B' vs finite differences", worst < 1e-6, f"max rel {worst:.3g}")


# -- 9: platform-count sweep -----------------------------------------------------

def test_c09a_nash_demand_rises_then_falls(family, record_criterion):
    Q = [family[I]["fne"].Q for I in range(1, 16)]
    k = int(np.argmax(Q)) + 1
    assert record_criterion("9a fragmented NE demand rises then falls in I", _rise_then_fall(Q), f"peak at I={k}")


def test_c09b_nash_fare_recovers(family, record_criterion):
    F = np.array([family[I]["fne"].fares[0] for I in FAMILY])
    ok = F[-1] > F.min()
    assert record_criterion("9b fragmented NE fare at I=15 above its minimum", ok,
                            f"F15 {F[-1]:.6g} min {F.min():.6g}")


def test_c09c_profit_gap_falls_and_changes_sign(family, record_criterion):
    gap = np.array([family[I]["mine"].total_profit - family[I]["mne"].total_profit for I in range(1, 16)])
    tail = gap[2:]
    falling = bool(np.all(np.diff(tail) < 0))
    sign_change = bool(np.any(gap[1:] > 0) and np.any(gap[1:] < 0))
    rises = [I for I, d in zip(range(4, 16), np.diff(tail)) if d >= 0]
    assert record_criterion("9c profit gap decreasing for I>=3 and changes sign", falling and sign_change,
                            f"sign change {sign_change}; increases at I={rises[:3]}...")


def test_c09d_welfare_gain_grows(family, record_criterion):
    gain = np.array([family[I]["mine"].welfare - family[I]["mne"].welfare for I in range(1, 16)])
    ok = bool(np.all(np.diff(gain) > 0))
    assert record_criterion("9d integrated NE welfare gain increasing in I", ok, f"I=15 gain {gain[-1]:.6g}")


# -- 10: fleet scaling sweep -------------------------------------------------------

def test_c10a_utilization_rises_then_falls(scaling, record_criterion):
    ok = all(_rise_then_fall([s[key].utilization[i] for s in scaling])
             for key in ("mne", "mine") for i in range(3))
    assert record_criterion("10a NE utilization rises then falls", ok, "fragmented and integrated, all platforms")


def test_c10b_profit_rises_then_falls(scaling, record_criterion):
    ok = all(_rise_then_fall([s[key].profits[i] for s in scaling])
             for key in ("mne", "mine") for i in range(3))
    assert record_criterion("10b NE profit rises then falls", ok, "fragmented and integrated, all platforms")


def test_c10c_integrated_demand_exceeds_fragmented(scaling, record_criterion):
    gap = min(float(np.min(s["ine"].q - s["fne"].q)) for s in scaling)
    assert record_criterion("10c integrated demand > fragmented per platform", gap > 0, f"min gap {gap:.6g}")


def test_c10d_small_platform_gains_most(scaling, record_criterion):
    gains = np.array([s["mine"].profits - s["mne"].profits for s in scaling])
    ok = bool(np.all(gains[20:, 2] > gains[20:, 0]))
    assert record_criterion("10d smallest platform's gain > largest's, steps 20..30", ok,
                            f"step 30: {gains[-1, 2]:.6g} vs {gains[-1, 0]:.6g}")


# -- 11: commission ----------------------------------------------------------------

@pytest.fixture(scope="module")
def ranges(cfg):
    return {f: mixed.commission_range(F70, f, cfg) for f in map(tuple, experiments.SCENARIOS)}


def test_c11a_thresholds_ordered(ranges, record_criterion):
    ok = all(r.tau_1 <= r.tau_2 for r in ranges.values())
    detail = "; ".join(f"{r.tau_1:.4f}/{r.tau_2:.4f}" for r in ranges.values())
    assert record_criterion("11a tau_1 <= tau_2", ok, detail)


def test_c11b_thresholds_fall_with_fleet_size(ranges, record_criterion):
    a, b = ranges[(2000.0,) * 3], ranges[(3000.0,) * 3]
    c, d = ranges[(3000.0, 2000.0, 1000.0)], ranges[(4000.0, 3000.0, 2000.0)]
    ok = b.tau_1 < a.tau_1 and b.tau_2 < a.tau_2 and d.tau_1 < c.tau_1 and d.tau_2 < c.tau_2
    detail = f"{a.tau_1:.4f}>{b.tau_1:.4f}, {c.tau_1:.4f}>{d.tau_1:.4f} (lower bounds)"
    assert record_criterion("11b both bounds fall with fleet size", ok, detail)


def test_c11c_heterogeneous_fleets_raise_bounds(ranges, record_criterion):
    pairs = [((2000.0,) * 3, (3000.0, 2000.0, 1000.0)), ((3000.0,) * 3, (4000.0, 3000.0, 2000.0))]
    ok = all(ranges[h].tau_1 > ranges[e].tau_1 and ranges[h].tau_2 > ranges[e].tau_2 for e, h in pairs)
    detail = "; ".join(f"{ranges[e].tau_1:.4f}/{ranges[e].tau_2:.4f} vs {ranges[h].tau_1:.4f}/{ranges[h].tau_2:.4f}"
                       for e, h in pairs)
    assert record_criterion("11c heterogeneous fleets give larger bounds", ok, detail)


def test_c11d_interior_cost_balance(cfg, ranges, record_criterion):
    worst, count = 0.0, 0
    for fleets, r in ranges.items():
        for t in np.linspace(r.tau_1, r.tau_2, 12)[1:-1]:
            me = mixed.solve_mixed(F70, t, fleets, cfg)
            if me.regime is not MixedRegime.MIXED:
                continue
            count += 1
            direct = me.q_dir > 0
            worst = max(worst, float(np.max(np.abs(me.cost_int - me.cost_dir[direct]))))
    ok = count > 0 and worst < 1e-6
    assert record_criterion("11d interior |C1 - C2| < 1e-6", ok, f"{count} solutions, max {worst:.3g}")


# -- 12: determinism and residual gates -------------------------------------------

def test_c12_determinism_and_residual_gates(cfg, tmp_path, record_criterion):
    runs = [
        ("platforms", lambda: experiments.sweep_platform_count(cfg)),
        ("fleet", lambda: experiments.sweep_fleet_scaling(cfg)),
        ("commission", lambda: experiments.sweep_commission_cli(cfg, n_tau=20)),
    ]
    same, bad = True, []
    for name, run in runs:
        blobs = []
        for rep in range(2):
            table = run()
            for fmt in ("csv", "plotdata"):
                path = tmp_path / f"{name}.{rep}.{fmt}"
                experiments.emit(table, fmt, path)
                blobs.append(path.read_bytes())
            bad += [f"{name}:{row[0]}" for row in table.rows if row[-1] != "ok"]
        same &= blobs[0] == blobs[2] and blobs[1] == blobs[3]
    ok = same and not bad
    assert record_criterion("12 byte-identical reruns, every row passes residuals", ok,
                            f"identical={same} marked={bad[:5]}")
