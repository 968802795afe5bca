import math

import numpy as np
import pytest

from tesrefrig.control import Mode, PowerReferences
from tesrefrig.sim_runner import (IDENTIFIED_MODEL, TRACE_COLUMNS, Breakpoint, PlantConfig, Scenario,
                                  ScenarioError, bundled_scenario_path, check_rates, cross_coupling,
                                  identify_linear_model, load_scenario, mode_sequence, parse_scenario,
                                  read_trace, run_scenario, step_metrics, summarize, tes_process)

GOOD = """\
name: short
duration_min: 2
rates: {fast_dt: 1, control_dt: 5, slow_dt: 30}
initial: {T_int: 244.15, gamma: 0.5}
references:
  - {t_min: 0, Q_e_sec: 500, Q_TES: 400}
  - {t_min: 1, Q_e_sec: 560, Q_TES: 400}
"""


@pytest.fixture(scope="module")
def short_run():
    return run_scenario(parse_scenario(GOOD))


# -- parsing ---------------------------------------------------------------------------

def test_parse_good():
    sc = parse_scenario(GOOD)
    assert sc.name == "short" and sc.duration == 120.0
    assert [b.t for b in sc.breakpoints] == [0.0, 60.0]
    assert sc.breakpoints[1].refs == PowerReferences(560.0, 400.0, 0.0)
    assert sc.refs_at(59.0).Q_e_sec == 500 and sc.refs_at(60.0).Q_e_sec == 560


@pytest.mark.parametrize("text, line, needle", [
    ("name: x\nduration_min: [1\n", 2, "YAML syntax"),
    ("name: x\nduration_min: 1\nbogus: 3\nreferences: [{t_min: 0}]\n", 3, "unknown field"),
    ("name: x\nduration_min: 1\nreferences:\n  - {t_min: 0, Q_e_sec: lots}\n", 4, "expected a number"),
    ("name: x\nduration_min: 1\nreferences:\n  - {t_min: 0, Q_TES: -5}\n", 4, ">= 0"),
    ("name: x\nduration_min: 1\ninitial:\n  gamma: 1.5\nreferences: [{t_min: 0}]\n", 4, "[0, 1]"),
    ("name: x\nduration_min: 1\nrates: {fast_dt: 2, control_dt: 5}\nreferences: [{t_min: 0}]\n", 4,
     "rates must nest"),
    ("name: x\nduration_min: 1\nreferences:\n  - {t_min: 0}\n  - {t_min: 0.5}\n  - {t_min: 0.2}\n", 4,
     "strictly increasing"),
    ("name: x\nduration_min: 1\nreferences: [{t_min: 0}]\noutputs: [t, nope]\n", 4, "unknown trace column"),
    ("name: x\nduration_min: 1\noverrides:\n  cycle: {warp: 2}\nreferences: [{t_min: 0}]\n", 4,
     "unknown parameter"),
])
def test_parse_errors_name_line(text, line, needle):
    with pytest.raises(ScenarioError) as exc:
        parse_scenario(text, "s.yaml")
    msg = str(exc.value)
    assert f"line {line}" in msg and needle in msg


def test_parse_requires_first_breakpoint_at_zero():
    with pytest.raises(ScenarioError, match="t = 0"):
        parse_scenario("duration_min: 1\nreferences: [{t_min: 1}]\n")


def test_outputs_selection_keeps_time_first():
    sc = parse_scenario(GOOD + "outputs: [Q_TES, T_SH]\n")
    assert sc.outputs == ("t", "Q_TES", "T_SH")


@pytest.mark.parametrize("name", ["mode_tour", "decoupler_step"])
def test_bundled_scenarios_load(name):
    sc = load_scenario(bundled_scenario_path(name))
    assert sc.name == name and sc.duration > 0


def test_check_rates():
    check_rates(1, 5, 30)
    check_rates(0.5, 5, 30)
    for bad in [(2, 5, 30), (1, 7, 30), (5, 1, 30), (0, 5, 30)]:
        with pytest.raises(ScenarioError):
            check_rates(*bad)


# -- runs ------------------------------------------------------------------------------

def test_trace_schema(short_run):
    assert short_run.failure is None
    assert len(short_run.rows) == 24
    t = short_run.column("t")
    assert np.all(np.diff(t) == 5.0) and t[0] == 0.0
    for name in TRACE_COLUMNS:
        assert np.all(np.isfinite(short_run.column(name)))


def test_reference_step_tracks(short_run):
    (m,) = [m for m in step_metrics(short_run) if m.channel == "Q_e_sec" and m.t_step == 60.0]
    assert math.isfinite(m.settling_time) and m.steady_error < 0.05


def test_csv_roundtrip_and_determinism(short_run, tmp_path):
    a = short_run.write_csv(tmp_path / "a.csv")
    b = run_scenario(parse_scenario(GOOD)).write_csv(tmp_path / "b.csv")
    assert a.read_bytes() == b.read_bytes()
    data = read_trace(a)
    assert list(data) == list(TRACE_COLUMNS)
    assert np.array_equal(data["Q_TES"], short_run.column("Q_TES"))


def test_csv_output_selection(short_run, tmp_path):
    path = short_run.write_csv(tmp_path / "c.csv", columns=("t", "N"))
    assert list(read_trace(path)) == ["t", "N"]


def test_read_trace_rejects_foreign_csv(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        read_trace(p)


def test_zero_references_stay_off():
    sc = Scenario("off", 120.0, (Breakpoint(0.0, PowerReferences(0, 0, 0)),))
    res = run_scenario(sc)
    assert res.failure is None
    assert set(res.column("mode")) == {Mode.OFF}
    for name in ("N", "A_v", "A_v_TES", "m_e", "m_TES", "Q_e_sec", "Q_TES"):
        assert np.all(res.column(name) == 0.0)


def test_secondary_only_mode_runs_without_compressor():
    sc = Scenario("dis", 300.0, (Breakpoint(0.0, PowerReferences(0, 0, 1000)),))
    res = run_scenario(sc)
    assert mode_sequence(res) == [Mode.DISCHARGE]
    assert np.all(res.column("N") == 0.0)
    assert abs(res.column("Q_TES_sec")[-1] - 1000) < 0.05 * 1000


def test_failure_truncates_trace():
    sc = Scenario("hot", 600.0, (Breakpoint(0.0, PowerReferences(500, 400, 0)),), T_amb=345.0)
    res = run_scenario(sc)
    assert res.failure is not None and res.failure.startswith("t=")
    assert 0 < len(res.rows) < 120


def test_summary_keys(short_run):
    s = summarize(short_run)
    assert {"scenario", "rows", "failure", "min_T_SH", "max_settling_s", "max_steady_error",
            "max_cross_coupling", "modes"} <= set(s)
    assert s["modes"] == [Mode.CHAMBER_CHARGE]
    assert s["max_cross_coupling"] == cross_coupling(short_run) > 0


def test_cross_coupling_ignores_joint_steps():
    sc = Scenario("joint", 120.0, (Breakpoint(0.0, PowerReferences(500, 400, 0)),
                                   Breakpoint(60.0, PowerReferences(560, 450, 0))))
    res = run_scenario(sc)
    assert cross_coupling(res) == 0.0


def test_superheat_floor_in_tour():
    res = run_scenario(load_scenario(bundled_scenario_path("mode_tour")))
    t, sh, n = res.column("t"), res.column("T_SH"), res.column("N")
    on = (n > 0) & (t >= 120)
    assert res.failure is None
    assert np.min(sh[on]) >= 2.0


# -- tank-only runs and identification ------------------------------------------------

def test_tes_process_charge_and_discharge(plant):
    ch = tes_process(plant, "charge", 50)
    dis = tes_process(plant, "discharge", 0.25)
    assert ch.completed and dis.completed
    assert ch.gamma[0] == 0.0 and ch.gamma[-1] >= 0.99
    assert dis.gamma[0] == 1.0 and dis.gamma[-1] <= 0.01
    assert np.all(ch.Q > 0) and np.all(dis.Q > 0)
    assert ch.power_at(0.5) <= ch.power_at(0.1)


def test_tes_process_rejects_unknown(plant):
    with pytest.raises(ValueError):
        tes_process(plant, "melt", 1.0)


def test_identification_reproduces_frozen_model():
    ident = identify_linear_model(PlantConfig.default())
    m = ident.model
    assert np.allclose(m.K, IDENTIFIED_MODEL.K, rtol=0.01, atol=1.0)
    assert m.tau_dp == pytest.approx(IDENTIFIED_MODEL.tau_dp, rel=0.01)
    assert m.tau_z == pytest.approx(IDENTIFIED_MODEL.tau_z, rel=0.01)


def test_exponent_numbers_without_dot_accepted():
    sc = parse_scenario(GOOD.replace("gamma: 0.5}", "gamma: 0.5, P_c: 1.9e6}"))
    assert sc.P_c0 == 1.9e6
