from __future__ import annotations

import numpy as np
import pytest

from rideq import fragmented, integrated
from rideq.config import baseline_config

ACCEPTANCE: list[tuple[str, bool, str]] = []

TOTAL_FLEET = 2.0e4
BASE_FLEETS = (500.0, 400.0, 300.0)


@pytest.fixture(scope="session")
def cfg():
    return baseline_config()


def _solve_all(fleets, cfg):
    out = {}
    out["fne"], out["mne"] = fragmented.solve_nash(fleets, cfg)
    out["fso"], out["mso"] = fragmented.solve_social_optimum(fleets, cfg)
    out["ine"], out["mine"] = integrated.solve_nash(0.0, fleets, cfg)
    out["iso"], out["miso"] = integrated.solve_social_optimum(fleets, cfg)
    out["unc"], out["munc"] = integrated.unchanged_fare_outcome(out["fne"].fares, 0.0, fleets, cfg)
    return out


@pytest.fixture(scope="session")
def family(cfg):
    """Equal fleets summing to 2e4 for I = 1..15."""
    return {I: _solve_all([TOTAL_FLEET / I] * I, cfg) for I in range(1, 16)}


@pytest.fixture(scope="session")
def scaling(cfg):
    """Fleets (500, 400, 300) scaled by 1.1 per step, steps 0..30."""
    return [_solve_all(np.array(BASE_FLEETS) * 1.1**k, cfg) for k in range(31)]


@pytest.fixture
def record_criterion():
    def record(label: str, ok, detail: str = "") -> bool:
        ACCEPTANCE.append((label, bool(ok), detail))
        return bool(ok)
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label, ok, detail in ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {label}  {detail}")
