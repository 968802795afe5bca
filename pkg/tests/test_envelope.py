import numpy as np
import pytest

from tesrefrig import cycle_statics as cs
from tesrefrig import envelope as ev
from tesrefrig import pcm_tank as pt


@pytest.fixture(scope="module")
def mode7(plant):
    return ev.sweep_envelope(7, "halfway", 5, plant)


def test_vec_root_many_brackets():
    a = np.array([1.0, 4.0, 9.0, -1.0])
    x = ev.vec_root(lambda x: x * x - np.abs(a), np.zeros(4), np.full(4, 5.0), xtol=1e-12)
    np.testing.assert_allclose(x, np.sqrt(np.abs(a)), rtol=1e-10)
    x = ev.vec_root(lambda x: x - 10.0, np.zeros(2), np.ones(2))
    assert np.all(np.isnan(x))


def test_active_powers():
    assert ev.active_powers(7) == ev.POWERS
    assert ev.active_powers(4) == ("Q_TES_sec",)
    assert ev.active_powers(8) == ()


def test_mode8_is_empty(plant):
    env = ev.sweep_envelope(8, "edge", 5, plant)
    assert env.empty and env.ranges == {}


def test_bad_arguments(plant):
    with pytest.raises(ValueError):
        ev.sweep_envelope(2, "middle", 5, plant)
    with pytest.raises(ValueError):
        ev.sweep_envelope(2, "edge", 1, plant)
    with pytest.raises(ValueError):
        ev.coupled_power_map(2, "edge", 5, plant)


def test_ranges_ordered_and_deterministic(plant, mode7):
    again = ev.sweep_envelope(7, "halfway", 5, plant)
    assert again.ranges == mode7.ranges
    for lo, hi in mode7.ranges.values():
        assert 0 < lo <= hi


def test_points_meet_superheat_floor(mode7):
    assert mode7.n_feasible > 0.9 * mode7.n_grid
    assert np.nanmin(mode7.points["T_SH"]) >= 2.0
    N = mode7.points["N"]
    assert np.all((N >= 30.0 - 1e-9) & (N <= 50.0 + 1e-9))


def test_points_are_statics_solutions(plant, mode7):
    fl = plant.fluid
    p = mode7.points
    for i in np.linspace(0, mode7.n_feasible - 1, 6).astype(int):
        inputs = cs.CycleInputs(p["N"][i], p["A_v"][i], p["A_v_TES"][i], p["m_TES_sec"][i],
                                plant.m_e_sec, plant.T_sec_in)
        op = cs.solve_statics(fl, inputs, p["T_int"][i], p["P_c"][i], fl.h_liq(p["P_c"][i]), plant.cycle, plant.tank)
        assert op.P_e == pytest.approx(p["P_e"][i], abs=5.0)
        assert abs(op.Q_e_sec) == pytest.approx(p["Q_e_sec"][i], rel=1e-4)
        assert abs(op.Q_TES) == pytest.approx(p["Q_TES"][i], rel=1e-4)
        assert abs(op.Q_TES_sec) == pytest.approx(p["Q_TES_sec"][i], rel=1e-6)
        # condenser balance at the reported pressure
        cond = plant.condenser
        duty = op.m_total * (op.h_comp_out - fl.h_liq(op.P_c))
        assert duty == pytest.approx(cond.UA_c * (fl.sat_temperature(op.P_c) - cond.T_amb), rel=1e-4)


def test_intermediate_fluid_balance(plant, mode7):
    p, geom, T_lat = mode7.points, plant.tank, plant.pcm.T_lat
    i = mode7.n_feasible // 2
    T = p["T_int"][i]
    G = pt.shell_conductance("halfway", "discharge" if T > T_lat else "charge", geom)
    net = G * (T_lat - T) + geom.UA_amb * (plant.T_surr - T) - p["Q_TES"][i] + p["Q_TES_sec"][i]
    assert abs(net) < 1e-3 * p["Q_TES_sec"][i]


def test_mode2_location_independent(plant):
    r = [ev.sweep_envelope(2, loc, 6, plant).range("Q_e_sec") for loc in pt.BOUNDARY_LOCATIONS]
    assert r[0] == r[1] == r[2]


def test_mode4_discharge_degrades_inwards(plant):
    top = [ev.sweep_envelope(4, loc, 6, plant).range("Q_TES_sec")[1] for loc in pt.BOUNDARY_LOCATIONS]
    assert top[0] > top[1] > top[2]


def test_frontier_helper():
    q_e = np.array([0.0, 1.0, 2.0, 3.0, 3.9])
    q_t = np.array([5.0, 4.0, 4.5, 1.0, 0.5])
    c, top, w = ev.frontier(q_e, q_t, 2)
    np.testing.assert_allclose(top, [5.0, 4.5])   # bins [0, 1.95) and [1.95, 3.9]
    assert w == pytest.approx(1.95)


@pytest.fixture(scope="module")
def maps(plant):
    return ev.coupled_power_map(1, "edge", 6, plant), ev.coupled_power_map(1, "edge", 11, plant)


def test_frontier_nonincreasing_and_corner(maps):
    for pm in maps:
        assert np.all(np.diff(pm.frontier_Q_TES) <= 0)
        assert not pm.corner_feasible()


def test_coarse_frontier_within_one_cell(maps):
    coarse, fine = maps
    assert ev.frontier_cell_distance(coarse, fine, 6).max() <= 1.0


def test_write_tables(tmp_path, mode7, plant):
    ev.write_envelope_table([mode7, ev.sweep_envelope(8, "edge", 3, plant)], tmp_path / "env.csv")
    lines = (tmp_path / "env.csv").read_text().splitlines()
    assert lines[0].startswith("mode,location,n_feasible,Q_e_sec_min")
    assert lines[2].startswith("8,edge,0,,")
    mode7.write_points_csv(tmp_path / "pts.csv")
    assert len((tmp_path / "pts.csv").read_text().splitlines()) == mode7.n_feasible + 1


def test_reference_warnings_flag_out_of_range(plant):
    from tesrefrig.control import PowerReferences
    from tesrefrig.sim_runner import Breakpoint, Scenario
    sc = Scenario("x", 60.0, (Breakpoint(0.0, PowerReferences(5000.0, 0.0, 0.0)),))
    msgs = ev.reference_warnings(sc, plant, resolution=4)
    assert len(msgs) == 1 and "Q_e_sec" in msgs[0]
