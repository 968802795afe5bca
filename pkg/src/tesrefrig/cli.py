"""Command-line entry point: ``tesrefrig {run,envelope,calibrate,selftest}``."""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import control as ctl
from .cycle_statics import nominal_condensing_pressure

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _cmd_run(args) -> int:
    from .sim_runner import (ScenarioError, bundled_scenario_path, load_scenario, run_scenario,
                             step_metrics, summarize)
    path = args.scenario_opt or args.scenario or bundled_scenario_path()
    if not Path(path).exists() and bundled_scenario_path(str(path)).exists():
        path = bundled_scenario_path(str(path))
    try:
        sc = load_scenario(path)
        kw = {}
        if args.fast_dt is not None:
            kw["dt_fast"] = args.fast_dt
        if args.slow_dt is not None:
            kw["dt_slow"] = args.slow_dt
        if args.no_decoupler:
            kw["use_decoupler"] = False
        if args.no_feedforward:
            kw["use_feedforward"] = False
        sc = replace(sc, **kw) if kw else sc
    except (OSError, ScenarioError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if not args.no_check:
        from .envelope import reference_warnings
        for msg in reference_warnings(sc):
            print(f"warning: {msg}", file=sys.stderr)
    res = run_scenario(sc)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    trace = res.write_csv(out / f"{sc.name}.csv")
    summary = summarize(res)
    summary["steps"] = [vars(m) for m in step_metrics(res)]
    (out / f"{sc.name}_summary.json").write_text(json.dumps(summary, indent=2, default=float))
    print(f"wrote {trace} ({len(res.rows)} rows)")
    if res.failure:
        print(f"error: simulation stopped at {res.failure}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def _cmd_envelope(args) -> int:
    from .envelope import coupled_power_map, sweep_envelope, write_envelope_table
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    envs = []
    for mode in args.modes:
        for loc in args.locations:
            env = sweep_envelope(mode, loc, args.resolution)
            envs.append(env)
            if args.points and not env.empty:
                env.write_points_csv(out / f"points_mode{mode}_{loc}.csv")
            if args.frontier and mode in (1, 7):
                pm = coupled_power_map(mode, loc, args.resolution)
                with open(out / f"frontier_mode{mode}_{loc}.csv", "w") as fh:
                    fh.write("Q_e_sec,Q_TES_max\n")
                    for x, y in zip(pm.frontier_Q_e, pm.frontier_Q_TES):
                        fh.write(f"{x:.3f},{y:.3f}\n")
    table = out / "envelope.csv"
    write_envelope_table(envs, table)
    print(table.read_text(), end="")
    return EXIT_OK


def _cmd_calibrate(args) -> int:
    from .sim_runner import PlantConfig, identify_linear_model
    plant = PlantConfig.default()
    ident = identify_linear_model(plant)
    m = ident.model
    dec = ctl.synthesize_decoupler(m.K_hat)
    gains = ctl.normalized_gains(np.diag(dec.K_diag), m.K[2, 2])
    lines = [
        "calibration report",
        f"valve coefficient c_v        {plant.cycle.c_v:.6g} kg/(s sqrt(kg Pa/m3))",
        f"displacement V_disp          {plant.cycle.V_disp:.6g} m3/rev",
        f"nominal condensing pressure  {nominal_condensing_pressure(plant.fluid):.6g} Pa",
        "static gain matrix K [W/(kg/s)]:",
        *("  " + "  ".join(f"{v:11.4g}" for v in row) for row in m.K),
        f"tau_dp {m.tau_dp:.2f} s   tau_z {m.tau_z:.2f} s",
        "fitted time constants: " + ", ".join(f"{k}: {v:.1f}" for k, v in ident.taus.items()),
        "RGA: " + np.array2string(ctl.rga(m.K_hat), precision=4),
        "decoupler D: " + np.array2string(dec.D_hat, precision=4),
        "decoupled diagonal: " + np.array2string(np.diag(dec.K_diag), precision=4),
        "normalised PI gains: " + ", ".join(f"{k}=({g.Kp:.4g}, {g.Ti:g})" for k, g in gains.items()),
    ]
    text = "\n".join(lines) + "\n"
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "calibration.txt").write_text(text)
    print(text, end="")
    return EXIT_OK


def selftest_checks() -> list[tuple[str, bool, str]]:
    """Numeric anchors: (name, passed, detail)."""
    from .cycle_statics import junction
    from .thermo import load_fluid
    K = np.array([[4.5e4, -2.0e4], [-2.0e4, 5.0e4]])
    checks = []
    lam = ctl.rga(K)
    ok = np.allclose(lam, [[1.22, -0.22], [-0.22, 1.22]], atol=5e-3)
    checks.append(("rga", ok, np.array2string(lam, precision=4)))
    dec = ctl.synthesize_decoupler(K)
    ok = (np.allclose(dec.D_hat, [[1, 0.44], [0.4, 1]], atol=5e-3)
          and np.allclose(np.diag(dec.K_diag), [3.7e4, 4.1e4], atol=0.05e4))
    checks.append(("decoupler", ok, f"D={np.array2string(dec.D_hat, precision=4)} "
                                    f"diag={np.array2string(np.diag(dec.K_diag), precision=5)}"))
    fl = load_fluid()
    rng = np.random.default_rng(0)
    P = 1.5e5
    m_e, m_t = rng.uniform(1e-3, 1e-2, 2)
    h_e, h_t = rng.uniform(fl.h_vap(P), fl.h_vap(P) + 3e4, 2)
    j = junction(fl, m_e, h_e, m_t, h_t, P)
    err = abs((m_e + m_t) * j.h_comp_in - m_e * h_e - m_t * h_t) / (m_e * h_e + m_t * h_t)
    checks.append(("junction", err < 1e-12, f"relative energy error {err:.2e}"))
    return checks


def _cmd_selftest(args) -> int:
    checks = selftest_checks()
    for name, ok, detail in checks:
        print(f"{'PASS' if ok else 'FAIL'}  {name:10s} {detail}")
    return EXIT_OK if all(ok for _, ok, _ in checks) else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tesrefrig", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="closed-loop simulation of a scenario file")
    r.add_argument("scenario", nargs="?", help="scenario YAML or bundled name "
                   "(mode_tour, decoupler_step; default mode_tour)")
    r.add_argument("--scenario", dest="scenario_opt", help="same as the positional argument")
    r.add_argument("--out", default=".", help="output directory")
    r.add_argument("--fast-dt", type=float)
    r.add_argument("--slow-dt", type=float)
    r.add_argument("--no-decoupler", action="store_true")
    r.add_argument("--no-feedforward", action="store_true")
    r.add_argument("--no-check", action="store_true", help="skip the reference feasibility check")
    r.set_defaults(func=_cmd_run)

    e = sub.add_parser("envelope", help="steady cooling-power ranges per mode")
    e.add_argument("--modes", type=int, nargs="+", default=list(range(1, 9)), choices=range(1, 9))
    e.add_argument("--locations", nargs="+", default=["edge", "halfway", "centre"],
                   choices=["edge", "halfway", "centre"])
    e.add_argument("--resolution", type=int, default=21)
    e.add_argument("--out", default=".")
    e.add_argument("--points", action="store_true", help="also write feasible point clouds")
    e.add_argument("--frontier", action="store_true", help="also write mode 1/7 frontiers")
    e.set_defaults(func=_cmd_envelope)

    c = sub.add_parser("calibrate", help="identify the linear power model and write a report")
    c.add_argument("--out", default=".")
    c.set_defaults(func=_cmd_calibrate)

    s = sub.add_parser("selftest", help="numeric anchors")
    s.set_defaults(func=_cmd_selftest)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
