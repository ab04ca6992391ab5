import json
from pathlib import Path

import numpy as np
import pytest

from rideq import experiments, fragmented
from rideq.cli import main
from rideq.config import baseline_config, load_config, parse_config
from rideq.errors import IoError, NoEquilibrium, ParseError, ValidationError
from rideq.oracle import ResidualReport

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def _raw():
    return baseline_config([500.0, 400.0]).to_dict()


def test_config_round_trip(tmp_path):
    cfg = baseline_config([500.0, 400.0, 300.0], tau=2.0)
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg.to_dict()))
    back = load_config(path)
    assert back == cfg
    assert back.digest() == cfg.digest()
    assert back.fares is None


def test_shipped_configs_load():
    assert load_config(f"{CONFIGS}/baseline.json").fleets == (500.0, 400.0, 300.0)
    assert load_config(f"{CONFIGS}/mixed.json").fares == (70.0, 70.0, 70.0)


@pytest.mark.parametrize("mutate, where", [
    (lambda r: r.pop("beta"), "beta"),
    (lambda r: r.update(gamma=1.0), "gamma"),
    (lambda r: r["platforms"][1].update(fleet=-3.0), "platforms[1].fleet"),
    (lambda r: r["platforms"][0].update(fare="cheap"), "platforms[0].fare"),
    (lambda r: r["matching"].update(kappa=2.0), "matching.kappa"),
    (lambda r: r["demand"].update(type="linear"), "demand.type"),
    (lambda r: r.update(platforms=[]), "platforms"),
])
def test_config_validation(mutate, where):
    raw = _raw()
    mutate(raw)
    with pytest.raises(ValidationError) as info:
        parse_config(raw)
    assert info.value.path == where


def test_config_parse_errors(tmp_path):
    with pytest.raises(ParseError):
        load_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ParseError):
        load_config(bad)


def test_format_cell():
    assert experiments.format_cell(1 / 3) == "0.333333333333"
    assert experiments.format_cell(7) == "7"
    assert experiments.format_cell(np.True_) == "1"
    assert experiments.format_cell("ok") == "ok"


def test_emit_round_trip_and_determinism(cfg, tmp_path):
    a = experiments.sweep_platform_count(cfg, range(1, 4))
    b = experiments.sweep_platform_count(cfg, range(1, 4))
    for fmt in ("csv", "plotdata"):
        experiments.emit(a, fmt, tmp_path / f"a.{fmt}")
        experiments.emit(b, fmt, tmp_path / f"b.{fmt}")
        assert (tmp_path / f"a.{fmt}").read_bytes() == (tmp_path / f"b.{fmt}").read_bytes()
        assert b"\r" not in (tmp_path / f"a.{fmt}").read_bytes()
    header, rows = experiments.read_csv(tmp_path / "a.csv")
    assert header == a.columns
    assert len(rows) == 3
    for got, want in zip(rows, a.rows):
        for g, w in zip(got, want):
            if isinstance(w, str):
                assert g == w
            else:
                assert float(g) == pytest.approx(float(w), rel=1e-11)
    text = (tmp_path / "a.plotdata").read_text()
    assert text.count("# platforms") == 4


def test_parallel_matches_serial(cfg):
    a = experiments.sweep_platform_count(cfg, range(1, 4))
    b = experiments.sweep_platform_count(cfg, range(1, 4), workers=2)
    assert experiments._lines(a, "csv") == experiments._lines(b, "csv")


def test_failed_rows_are_marked(cfg, monkeypatch):
    real = fragmented.solve_nash

    def flaky(fleets, config, method="aggregate"):
        if len(fleets) == 2:
            raise NoEquilibrium("forced")
        return real(fleets, config, method)

    monkeypatch.setattr(fragmented, "solve_nash", flaky)
    table = experiments.sweep_platform_count(cfg, range(1, 4))
    status = table.column("status")
    assert status[0] == "ok" and status[2] == "ok"
    assert status[1].startswith("error")
    assert experiments.ERROR in table.rows[1]
    assert np.isnan(table.array("frag_ne_Q")[1])


def test_emit_io_error(cfg, tmp_path):
    table = experiments.sweep_platform_count(cfg, range(1, 2))
    with pytest.raises(IoError):
        experiments.emit(table, "csv", tmp_path / "no" / "such" / "dir.csv")
    with pytest.raises(ValueError):
        experiments.emit(table, "xlsx", tmp_path / "t.xlsx")


def test_commission_table_shape(cfg):
    table = experiments.sweep_commission_cli(cfg, [(2000.0,) * 3], n_tau=8)
    assert len(table.rows) == 8
    assert set(table.column("status")) == {"ok"}
    assert set(table.column("regime")) <= {"AllIntegrator", "Mixed", "NoIntegrator"}


# -- command line ----------------------------------------------------------

def test_cli_solve_stdout(capsys):
    assert main(["solve", "--config", f"{CONFIGS}/baseline.json", "--regime", "fragmented-ne"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0].startswith("platform,fleet,q")
    assert len(out) == 4


def test_cli_solve_mixed(tmp_path):
    out = tmp_path / "m.csv"
    assert main(["solve", "--config", f"{CONFIGS}/mixed.json", "--regime", "mixed", "--out", str(out)]) == 0
    header, rows = experiments.read_csv(out)
    assert rows[0][header.index("regime")] == "Mixed"


def test_cli_validation_exit_codes(tmp_path):
    assert main(["solve", "--config", f"{CONFIGS}/baseline.json", "--regime", "mixed"]) == 2
    assert main(["solve", "--config", str(tmp_path / "none.json"), "--regime", "mixed"]) == 2
    raw = _raw()
    del raw["beta"]
    p = tmp_path / "nobeta.json"
    p.write_text(json.dumps(raw))
    assert main(["verify", "--config", str(p)]) == 2
    assert main(["solve", "--regime", "bogus"]) == 2


def test_cli_solver_failure_exit_code(monkeypatch):
    def boom(*a, **k):
        raise NoEquilibrium("forced")
    monkeypatch.setattr(fragmented, "solve_nash", boom)
    assert main(["solve", "--config", f"{CONFIGS}/baseline.json", "--regime", "fragmented-ne"]) == 3


def test_cli_invariant_failure_exit_code(monkeypatch):
    import rideq.cli as cli
    monkeypatch.setattr(cli.oracle, "check_residuals",
                        lambda eq, cfg: ResidualReport({"cost": 1.0}, {"cost": 1e-6}))
    assert main(["solve", "--config", f"{CONFIGS}/baseline.json", "--regime", "fragmented-so"]) == 4


def test_cli_verify(capsys):
    assert main(["verify", "--config", f"{CONFIGS}/duopoly.json"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines and all(ln.startswith("PASS") for ln in lines)


def test_cli_sweep(tmp_path):
    assert main(["sweep", "platforms", "--config", f"{CONFIGS}/baseline.json", "--out", str(tmp_path),
                 "--steps", "3", "--format", "plotdata"]) == 0
    assert (tmp_path / "platforms.plotdata").exists()
    meta = json.loads((tmp_path / "platforms.meta.json").read_text())
    assert meta["config"] == load_config(f"{CONFIGS}/baseline.json").digest()
