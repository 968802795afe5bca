import json

from tesrefrig.cli import EXIT_FAIL, EXIT_OK, EXIT_USAGE, main, selftest_checks
from tesrefrig.sim_runner import read_trace

SMALL = """\
name: tiny
duration_min: 1
initial: {T_int: 244.15}
references:
  - {t_min: 0, Q_e_sec: 500, Q_TES: 400}
outputs: [Q_e_sec, Q_TES, T_SH]
"""


def test_selftest_passes(capsys):
    assert all(ok for _, ok, _ in selftest_checks())
    assert main(["selftest"]) == EXIT_OK
    assert capsys.readouterr().out.count("PASS") == 3


def test_run_writes_trace_and_summary(tmp_path):
    sc = tmp_path / "tiny.yaml"
    sc.write_text(SMALL)
    assert main(["run", str(sc), "--out", str(tmp_path), "--no-check"]) == EXIT_OK
    trace = read_trace(tmp_path / "tiny.csv")
    assert list(trace) == ["t", "Q_e_sec", "Q_TES", "T_SH"]
    assert len(trace["t"]) == 12
    summary = json.loads((tmp_path / "tiny_summary.json").read_text())
    assert summary["rows"] == 12 and summary["failure"] is None
    assert "max_cross_coupling" in summary and summary["steps"]


def test_run_reports_malformed_file(tmp_path, capsys):
    sc = tmp_path / "bad.yaml"
    sc.write_text("duration_min: 1\nreferences: [{t_min: 0, Q_TES: oops}]\n")
    assert main(["run", str(sc), "--out", str(tmp_path)]) == EXIT_USAGE
    assert "line 2" in capsys.readouterr().err


def test_run_missing_file(tmp_path):
    assert main(["run", str(tmp_path / "nope.yaml"), "--out", str(tmp_path)]) == EXIT_USAGE


def test_run_infeasible_reference_warns(tmp_path, capsys):
    sc = tmp_path / "big.yaml"
    sc.write_text(SMALL.replace("Q_e_sec: 500", "Q_e_sec: 5000"))
    main(["run", str(sc), "--out", str(tmp_path)])
    assert "warning" in capsys.readouterr().err


def test_run_failure_exit_code(tmp_path):
    sc = tmp_path / "hot.yaml"
    sc.write_text(SMALL.replace("initial:", "conditions: {T_amb: 345}\ninitial:"))
    assert main(["run", str(sc), "--out", str(tmp_path), "--no-check"]) == EXIT_FAIL
    assert (tmp_path / "tiny.csv").exists()


def test_envelope_small(tmp_path, capsys):
    assert main(["envelope", "--modes", "2", "8", "--locations", "edge", "--resolution", "5",
                 "--out", str(tmp_path)]) == EXIT_OK
    assert (tmp_path / "envelope.csv").exists()
    assert "mode" in capsys.readouterr().out


def test_run_resolves_bundled_name(tmp_path):
    assert main(["run", "decoupler_step", "--out", str(tmp_path)]) == EXIT_OK
    assert len(read_trace(tmp_path / "decoupler_step.csv")["t"]) == 120
