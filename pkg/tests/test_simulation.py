import numpy as np
import pytest

from recirc.config import parse_config
from recirc.errors import ParameterError, ScheduleError
from recirc.mesh import PumpLayout, build_dofmap, build_rect_mesh
from recirc.simulation import (CSV_COLUMNS, PUMP_RATE, EnergyRecord, PumpSchedule, RadiationProfile,
                               energy_monitor_update, mean_upper_layer_temperature, run_simulation, scenario_preset)
from recirc.verification import check_equilibrium, equilibrium_config

RESERVOIR_SHORT = """\
domain.h = 1.0
time.N = {N}
physics.b2S = 1.322814619151034e-11
schedule.preset = {preset}
"""


def test_presets():
    assert not scenario_preset("NNNN").g.any()
    tttt = scenario_preset("TTTT")
    assert tttt.g.shape == (4, 96) and np.all(tttt.g == 2.0e-3)
    tptp = scenario_preset("tptp")
    np.testing.assert_array_equal(tptp.g[:, 0], [PUMP_RATE, -PUMP_RATE, PUMP_RATE, -PUMP_RATE])
    np.testing.assert_array_equal(scenario_preset("PTPT").g[:, 5], -tptp.g[:, 5])
    assert np.all(scenario_preset("PPPP").g == -2.0e-3)
    assert tttt.dt == 1800.0 and tttt.N == 96
    with pytest.raises(ScheduleError):
        scenario_preset("TTNN")


def test_schedule_before_first_step_is_off():
    s = scenario_preset("TTTT", N=3)
    assert not s.rates(0).any()
    np.testing.assert_array_equal(s.rates(3), [PUMP_RATE] * 4)
    with pytest.raises(ScheduleError):
        s.check_bound(1e-3)
    with pytest.raises(ScheduleError):
        PumpSchedule(np.zeros((4, 2)), 1800.0, 3)


def test_radiation_profile():
    r = RadiationProfile()
    assert r(0.0) == pytest.approx(278.0)
    assert r(21600.0) == pytest.approx(300.0)
    assert r(64800.0) == pytest.approx(278.0)
    table = RadiationProfile(times=np.array([0.0, 10.0]), values=np.array([280.0, 290.0]))
    assert table(5.0) == pytest.approx(285.0)


def test_upper_layer_mean(unit_square):
    mesh, dm = unit_square
    y = dm.node_coords[:, 1]
    assert mean_upper_layer_temperature(mesh, dm, np.full(dm.scalar_q2_count, 283.0), 0.5) == pytest.approx(283.0,
                                                                                                           abs=1e-12)
    assert mean_upper_layer_temperature(mesh, dm, y, 0.5) == pytest.approx(0.75, abs=1e-10)
    assert mean_upper_layer_temperature(mesh, dm, y ** 2, 0.5) == pytest.approx(7 / 12, abs=1e-8)
    # a strip edge that cuts through the triangles
    assert mean_upper_layer_temperature(mesh, dm, y ** 2, 0.3) == pytest.approx((1 - 0.7 ** 3) / 3 / 0.3, abs=1e-12)
    for bad in (0.0, 1.5):
        with pytest.raises(ParameterError):
            mean_upper_layer_temperature(mesh, dm, y, bad)


def test_energy_monitor_closed_forms():
    mesh = build_rect_mesh(2.0, 1.0, 0.5, PumpLayout())
    dm = build_dofmap(mesh)
    theta = np.full(dm.scalar_q2_count, 283.0)
    rec = energy_monitor_update(mesh, dm, theta, 10.0)
    assert rec.l2_sq == pytest.approx(283.0 ** 2 * 2.0, rel=1e-12)
    for k in range(1, 4):
        rec = energy_monitor_update(mesh, dm, theta, 10.0, rec)
    assert rec.grad_integral <= 1e-12  # roundoff in the gradients of a constant
    assert rec.surface_l5_integral == pytest.approx(283.0 ** 5 * 2.0 * 30.0, rel=1e-12)
    zero = energy_monitor_update(mesh, dm, np.zeros(dm.scalar_q2_count), 10.0, EnergyRecord())
    assert zero == EnergyRecord()
    assert not EnergyRecord(float("inf")).is_finite()


def test_equilibrium_run():
    res = run_simulation(equilibrium_config())
    assert res.ok and len(res.records) == 12
    assert check_equilibrium(res).passed
    assert np.all(res.column("energy2") <= 1e-12)
    assert np.all(np.abs(res.column("mean_upper_K") - 283.0) <= 1e-9)


def test_zero_steps_records_only_initial_state():
    cfg = parse_config(RESERVOIR_SHORT.format(N=0, preset="TTTT"))
    res = run_simulation(cfg)
    assert res.ok and [r.step for r in res.records] == [0]
    assert res.records[0].mean_upper_K == pytest.approx(283.0)


def test_row_layout_and_snapshots():
    cfg = parse_config(RESERVOIR_SHORT.format(N=2, preset="TPTP"))
    seen = []
    res = run_simulation(cfg.with_output(snapshot_every=1), snapshot=lambda n, *a: seen.append(n))
    assert res.ok
    assert [r.step for r in res.records] == [0, 1, 2, 3]
    assert np.isnan(res.records[-1].div_v_l2)
    assert seen == [0, 1, 2, 3]
    assert all(len(r.csv_row()) == len(CSV_COLUMNS) for r in res.records)


def test_bounded_temperatures_and_pump_constraints():
    cfg = parse_config(RESERVOIR_SHORT.format(N=4, preset="TTTT"))
    res = run_simulation(cfg)
    assert res.ok
    lo = min(283.0, 286.0, 0.99 * 278.0) - 0.5
    hi = max(283.0, 286.0, 1.01 * 300.0) + 0.5
    assert res.column("theta_min_K").min() >= lo and res.column("theta_max_K").max() <= hi
    assert res.column("constraint_residual").max() <= 1e-7
    assert np.all(res.column("div_v_l2")[1:-1] <= 1e-6 * (1 + res.column("velocity_l2")[1:-1]))


def test_mirror_symmetry_of_tttt():
    cfg = parse_config(RESERVOIR_SHORT.format(N=3, preset="TTTT"))
    res = run_simulation(cfg)
    assert res.ok
    xy = res.dofmap.node_coords
    mirrored = np.column_stack([16.0 - xy[:, 0], xy[:, 1]])
    order = np.lexsort(np.round(xy, 9).T)
    order_m = np.lexsort(np.round(mirrored, 9).T)
    theta = res.theta
    assert np.abs(theta[order] - theta[order_m]).max() <= 1e-6 * np.abs(theta).max()


def test_determinism():
    a = run_simulation(equilibrium_config())
    b = run_simulation(equilibrium_config())
    assert [repr(r.csv_row()) for r in a.records] == [repr(r.csv_row()) for r in b.records]


def test_step_failure_returns_partial_result():
    # one Picard sweep cannot settle the radiative surface, so the first step fails
    cfg = parse_config(RESERVOIR_SHORT.format(N=3, preset="TTTT") + "solver.picard_max = 1\n")
    res = run_simulation(cfg)
    assert not res.ok
    assert res.failed_step == 1 and res.error_kind == "StepError"
    assert [r.step for r in res.records] == [0]
