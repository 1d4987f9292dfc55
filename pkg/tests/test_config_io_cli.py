from pathlib import Path

import numpy as np
import pytest

from recirc.cli import EXIT_CONFIG, EXIT_IO, EXIT_OK, EXIT_SOLVER, main
from recirc.config import RunConfig, dump_config, load_config, parse_config
from recirc.errors import ConfigError, OutputError
from recirc.io import (LOCK_NAME, FieldState, output_lock, read_rcf, read_timeseries_csv, write_rcf,
                       write_timeseries_csv, write_vtk_snapshot)
from recirc.mesh import PumpLayout, build_dofmap, build_rect_mesh
from recirc.simulation import CSV_COLUMNS, run_simulation
from recirc.verification import EQUILIBRIUM_CONFIG, equilibrium_config

ROOT = Path(__file__).resolve().parents[1]
DATA = Path(__file__).parent / "data"


# -- configuration -----------------------------------------------------------

def test_defaults_match_table():
    cfg = load_config(ROOT / "configs" / "reservoir.cfg")
    ph = cfg.physics
    assert (ph.nu, ph.nu_tur, ph.K) == (1.3e-3, 5.0e-2, 1.4e-5)
    assert (ph.theta0, ph.theta_S, ph.theta_N, ph.alpha0) == (283.0, 286.0, 283.0, 8.7e-7)
    assert (cfg.time.dt, cfg.time.N, cfg.domain.h) == (1800.0, 96, 0.5)
    assert ph.b1N == pytest.approx(300.0 / (990.0 * 4.2), rel=1e-15)
    assert ph.b1N == pytest.approx(7.215e-2, abs=1e-5)
    assert RunConfig().physics == parse_config("").physics


def test_round_trip():
    for cfg in (load_config(ROOT / "configs" / "reservoir.cfg"), equilibrium_config(),
                parse_config("time.N = 3\nschedule.g1 = 0.001\nschedule.g2 = 0, 0, 0\n"
                             "schedule.g3 = -0.001 0.002 0\nschedule.g4 = 0\n")):
        assert parse_config(dump_config(cfg)) == cfg


def test_schedule_shape_error_names_schedule():
    with pytest.raises(ConfigError, match="schedule"):
        parse_config("time.N = 3\nschedule.g1 = 0.001\n")
    with pytest.raises(ConfigError, match="schedule"):
        parse_config("time.N = 3\nschedule.g1 = 1 2\nschedule.g2 = 0\nschedule.g3 = 0\nschedule.g4 = 0\n")


@pytest.mark.parametrize("text, key", [
    ("domain.h = -1\n", "domain.h"),
    ("physics.nu = 0\n", "physics.nu"),
    ("time.dt = nan\n", "time.dt"),
    ("physics.bogus = 1\n", "bogus"),
    ("garbage\n", "line 1"),
    ("\n\ndomain.h = abc\n", "line 3"),
    ("layout.pairs = 1\nlayout.C1 = left 2 3\nlayout.T1 = left 2.5 4\n", "layout"),
    ("layout.C1 = middle 1 2\nlayout.T1 = bottom 1 2\n", "line 1"),
])
def test_validation_errors_name_the_key(text, key):
    with pytest.raises(ConfigError, match=key):
        parse_config(text)


def test_missing_file():
    with pytest.raises(ConfigError):
        load_config("/nonexistent/config.cfg")


def test_tabulated_radiation(tmp_path):
    (tmp_path / "tr.txt").write_text("0 280\n3600 290\n")
    (tmp_path / "run.cfg").write_text("radiation.mode = tabulated\nradiation.file = tr.txt\n")
    profile = load_config(tmp_path / "run.cfg").radiation_profile()
    assert profile(1800.0) == pytest.approx(285.0)


# -- CSV ---------------------------------------------------------------------

def test_csv_schema_golden(tmp_path):
    path = write_timeseries_csv(run_simulation(equilibrium_config()), tmp_path / "ts.csv")
    text = path.read_text()
    assert text.splitlines()[0] == ",".join(CSV_COLUMNS)
    assert CSV_COLUMNS == ("step", "time_s", "mean_upper_K", "theta_min_K", "theta_max_K", "theta_l2",
                           "div_v_l2", "picard_iters", "uzawa_iters", "energy1", "energy2", "energy3")
    assert text.endswith("\n")
    assert text == (DATA / "equilibrium_timeseries.csv").read_text()
    cols = read_timeseries_csv(path)
    assert np.all(cols["mean_upper_K"] == 283.0)


def test_csv_for_zero_steps(tmp_path):
    res = run_simulation(parse_config("domain.h = 1.0\ntime.N = 0\n"))
    lines = write_timeseries_csv(res, tmp_path / "ts.csv").read_text().splitlines()
    assert len(lines) == 2


def test_csv_write_failure(tmp_path):
    with pytest.raises(OutputError):
        write_timeseries_csv(run_simulation(parse_config("domain.h = 1.0\ntime.N = 0\n")),
                             tmp_path / "missing" / "ts.csv")


# -- snapshots ---------------------------------------------------------------

def _vtk_sections(text):
    lines = text.splitlines()
    head = {ln.split()[0]: ln.split() for ln in lines if ln.split() and ln.split()[0].isupper()}
    return lines, head


def test_vtk_counts_and_values(tmp_path):
    mesh = build_rect_mesh(1.0, 1.0, 0.5, PumpLayout())
    dm = build_dofmap(mesh)
    state = FieldState(dm, np.full(dm.scalar_q2_count, 283.0), np.zeros((dm.scalar_q2_count, 2)),
                       np.zeros(dm.scalar_q1_count))
    lines, head = _vtk_sections(write_vtk_snapshot(mesh, state, tmp_path / "s.vtk").read_text())
    assert lines[0] == "# vtk DataFile Version 3.0"
    assert head["POINTS"][1] == "9" and head["CELLS"][1] == "8"
    i = lines.index("LOOKUP_TABLE default")
    assert all(float(x) == 283.0 for x in lines[i + 1:i + 10])
    j = lines.index("VECTORS velocity double")
    assert all(ln == "0.0 0.0 0" for ln in lines[j + 1:j + 10])


def test_vtk_is_reproducible(tmp_path, unit_square, rng):
    mesh, dm = unit_square
    n = dm.scalar_q2_count
    state = FieldState(dm, rng.normal(283, 1, n), rng.normal(0, 1e-3, (n, 2)), rng.normal(0, 1, dm.scalar_q1_count))
    a = write_vtk_snapshot(mesh, state, tmp_path / "a.vtk").read_bytes()
    b = write_vtk_snapshot(mesh, state, tmp_path / "b.vtk").read_bytes()
    assert a == b


def test_rcf_round_trip(tmp_path, rng):
    arrays = [rng.standard_normal(17), np.arange(5.0), np.empty(0)]
    path = write_rcf(tmp_path / "x.rcf", arrays)
    raw = path.read_bytes()
    assert raw[:4] == b"RCF1" and int.from_bytes(raw[4:12], "little") == 3
    back = read_rcf(path)
    for a, b in zip(arrays, back):
        np.testing.assert_array_equal(a, b)
    path.write_bytes(raw[:-8])
    with pytest.raises(OutputError):
        read_rcf(path)


def test_output_lock(tmp_path):
    with output_lock(tmp_path / "run"):
        assert (tmp_path / "run" / LOCK_NAME).exists()
        with pytest.raises(OutputError):
            with output_lock(tmp_path / "run"):
                pass
    assert not (tmp_path / "run" / LOCK_NAME).exists()


# -- CLI ---------------------------------------------------------------------

def test_cli_simulate_equilibrium(tmp_path, capsys):
    cfg = tmp_path / "eq.cfg"
    cfg.write_text(EQUILIBRIUM_CONFIG)
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "out"), "--snapshot-every", "5"]) == EXIT_OK
    run = tmp_path / "out" / "NNNN"
    assert (run / "timeseries.csv").read_text() == (DATA / "equilibrium_timeseries.csv").read_text()
    assert sorted(p.name for p in run.glob("*.vtk")) == [f"snapshot_{k:05d}.vtk" for k in (0, 5, 10, 11)]
    assert len(read_rcf(run / "snapshot_00011.rcf")) == 4
    assert "NNNN: 12 rows" in capsys.readouterr().out


def test_cli_config_error(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("domain.h = 0\n")
    assert main(["simulate", "--config", str(cfg)]) == EXIT_CONFIG
    assert "domain.h" in capsys.readouterr().err
    good = tmp_path / "good.cfg"
    good.write_text(EQUILIBRIUM_CONFIG)
    assert main(["simulate", "--config", str(good), "--scenario", "XXXX"]) == EXIT_CONFIG
    assert main(["simulate", "--config", str(tmp_path / "absent.cfg")]) == EXIT_CONFIG


def test_cli_solver_failure(tmp_path):
    cfg = tmp_path / "fail.cfg"
    cfg.write_text("domain.h = 1.0\ntime.N = 2\nphysics.b2S = 1.3e-11\nsolver.picard_max = 1\n")
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "out")]) == EXIT_SOLVER
    assert (tmp_path / "out" / "NNNN" / "timeseries.csv").exists()


def test_cli_io_error(tmp_path):
    cfg = tmp_path / "eq.cfg"
    cfg.write_text(EQUILIBRIUM_CONFIG)
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["simulate", "--config", str(cfg), "--out", str(blocker / "sub")]) == EXIT_IO
    (tmp_path / "locked").mkdir()
    (tmp_path / "locked" / LOCK_NAME).write_text("1\n")
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "locked")]) == EXIT_IO


def test_cli_preset_list(capsys):
    assert main(["preset", "--list"]) == EXIT_OK
    out = capsys.readouterr().out
    for name in ("NNNN", "TTTT", "PPPP", "TPTP", "PTPT"):
        assert name in out
    assert "pumps T P T P" in out
