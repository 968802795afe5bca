"""Two-time-scale closed-loop simulation, scenarios, traces and plant identification.

Each fast step (default 1 s) solves the cycle statics at the current
condenser and tank states and advances the condenser.  Every control step
(default 5 s) the power loops update the flow references.  Every slow step
(default 30 s) the tank advances with the bundle powers averaged over the
elapsed interval, i.e. held constant across it.
"""
from __future__ import annotations

import csv
import math
import re
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import yaml
from scipy.optimize import curve_fit

from . import condenser_dyn as cd
from . import pcm_tank as pt
from .control import (ControlConfig, ControllerBank, CoolingPowers, LinearPlantModel, Mode,
                      PowerReferences, SUPERHEAT_GAINS, SecondaryInverse, compressor_running, normalized_gains, synthesize_decoupler)
from .cycle_statics import (P_TES_IN_NOMINAL, CycleInputs, CycleParams, StaticsError, VirtualInputs,
                            nominal_condensing_pressure, solve_statics, valve_mass_flow)
from .thermo import FluidModel, PropertyRangeError, load_fluid

TRACE_FORMAT = "tesrefrig-trace"
TRACE_VERSION = 1


# -- plant ------------------------------------------------------------------------

@dataclass(frozen=True)
class PlantConfig:
    fluid: FluidModel
    cycle: CycleParams
    condenser: cd.CondenserParams
    tank: pt.TesGeometry
    pcm: pt.PcmCurve
    T_sec_in: float = 253.15        # chamber return, feeds both the evaporator and the tank
    m_e_sec: float = 0.2
    T_surr: float = 293.15

    @classmethod
    def default(cls, fluid: FluidModel | None = None, **kw) -> "PlantConfig":
        fluid = fluid or load_fluid()
        base = dict(cycle=CycleParams.calibrated(fluid), condenser=cd.CondenserParams(),
                    tank=pt.TesGeometry(), pcm=pt.PcmCurve())
        base.update(kw)
        return cls(fluid=fluid, **base)


# Static gains and time constants identified on the default plant by
# ``identify_linear_model`` (see the ``calibrate`` command); frozen here so a
# simulation does not have to re-identify.  Powers as magnitudes.
IDENTIFIED_MODEL = LinearPlantModel(
    K=[[8.206e4, -1.270e4, 0.0], [-1.147e4, 7.763e4, 0.0], [0.0, 0.0, 1.554e3]],
    tau_dp=40.5, tau_z=46.8)


def default_control_config(model: LinearPlantModel = IDENTIFIED_MODEL, **kw) -> ControlConfig:
    """Controller set-up derived from ``model``.

    The cross-coupling of the plant is a pure lag, so the decoupler's
    off-diagonal terms are filtered with the model's zero time constant; a
    static decoupler would inject the proportional kick of one loop into the other.
    """
    dec = synthesize_decoupler(model.K_hat)
    gains = normalized_gains(np.diag(dec.K_diag), model.K[2, 2])
    gains["C_TSH"] = SUPERHEAT_GAINS
    base = dict(decoupler=dec, gains=gains, tau_z=model.tau_z)
    base.update(kw)
    return ControlConfig(**base)


# -- scenarios --------------------------------------------------------------------------

class ScenarioError(ValueError):
    """Malformed scenario; the message names the line and the field."""


@dataclass(frozen=True)
class Breakpoint:
    t: float                 # [s]
    refs: PowerReferences


@dataclass(frozen=True)
class Scenario:
    name: str
    duration: float                          # [s]
    breakpoints: tuple
    T_int0: float = 244.65
    gamma0: float = 0.5
    P_c0: float | None = None
    T_sec_in: float = 253.15
    m_e_sec: float = 0.2
    T_surr: float = 293.15
    T_amb: float = 298.15
    dt_fast: float = 1.0
    dt_control: float = 5.0
    dt_slow: float = 30.0
    use_decoupler: bool = True
    use_feedforward: bool = True
    overrides: dict = field(default_factory=dict)
    outputs: tuple | None = None             # trace columns to write; None = all

    def __post_init__(self):
        ts = [b.t for b in self.breakpoints]
        if not ts or ts[0] != 0:
            raise ScenarioError("the first reference breakpoint must be at t = 0")
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ScenarioError("reference breakpoints must be strictly increasing in time")
        check_rates(self.dt_fast, self.dt_control, self.dt_slow)
        if not self.duration > 0:
            raise ScenarioError("duration must be positive")

    def refs_at(self, t: float) -> PowerReferences:
        ref = self.breakpoints[0].refs
        for b in self.breakpoints:
            if b.t <= t + 1e-9:
                ref = b.refs
            else:
                break
        return ref


def check_rates(dt_fast, dt_control, dt_slow):
    """Reject rate settings unless fast divides control divides slow."""
    def divides(a, b):
        if not (a > 0 and b > 0):
            return False
        r = b / a
        return abs(r - round(r)) < 1e-9 and round(r) >= 1

    if not (divides(dt_fast, dt_control) and divides(dt_control, dt_slow)):
        raise ScenarioError(f"rates must nest: fast {dt_fast} | control {dt_control} | slow {dt_slow}")


_SCENARIO_KEYS = {"name", "duration_min", "rates", "initial", "conditions", "references",
                  "overrides", "control", "outputs"}
_OVERRIDE_TARGETS = {"cycle": CycleParams, "condenser": cd.CondenserParams, "tank": pt.TesGeometry,
                     "pcm": pt.PcmCurve}


_EXP_NUMBER = re.compile(r"[-+]?(\d+\.?\d*|\.\d+)[eE][-+]?\d+")


def _line_of(node, path):
    """1-based source line of the YAML node at ``path`` (best effort)."""
    line = node.start_mark.line + 1
    for key in path:
        if isinstance(node, yaml.MappingNode):
            nxt = [v for k, v in node.value if k.value == key]
            if not nxt:
                break
            node = nxt[0]
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            node = node.value[key]
        else:
            break
        line = node.start_mark.line + 1
    return line


def parse_scenario(text: str, source: str = "<scenario>") -> Scenario:
    try:
        root = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}" if mark else "unknown line"
        raise ScenarioError(f"{source}: {where}: YAML syntax error: {exc}") from exc
    if not isinstance(data, dict):
        raise ScenarioError(f"{source}: line 1: top level must be a mapping")

    def fail(path, msg):
        raise ScenarioError(f"{source}: line {_line_of(root, path)}: field '{'.'.join(map(str, path))}': {msg}")

    for key in data:
        if key not in _SCENARIO_KEYS:
            fail([key], "unknown field")

    def num(path, value, positive=False):
        if isinstance(value, str) and _EXP_NUMBER.fullmatch(value.strip()):
            value = float(value)            # YAML 1.1 reads 1.9e6 (no dot/sign) as a string
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            fail(path, f"expected a number, got {value!r}")
        if positive and not value > 0:
            fail(path, "must be positive")
        return float(value)

    def section(name, allowed):
        sec = data.get(name, {}) or {}
        if not isinstance(sec, dict):
            fail([name], "expected a mapping")
        for k in sec:
            if k not in allowed:
                fail([name, k], "unknown field")
        return sec

    kw = {"name": str(data.get("name", Path(source).stem))}
    if "duration_min" not in data:
        fail([], "missing 'duration_min'")
    kw["duration"] = 60.0 * num(["duration_min"], data["duration_min"], positive=True)

    rates = section("rates", {"fast_dt", "control_dt", "slow_dt"})
    for src, dst in (("fast_dt", "dt_fast"), ("control_dt", "dt_control"), ("slow_dt", "dt_slow")):
        if src in rates:
            kw[dst] = num(["rates", src], rates[src], positive=True)
    init = section("initial", {"T_int", "gamma", "P_c"})
    for src, dst in (("T_int", "T_int0"), ("gamma", "gamma0"), ("P_c", "P_c0")):
        if src in init:
            kw[dst] = num(["initial", src], init[src])
    if "gamma0" in kw and not 0 <= kw["gamma0"] <= 1:
        fail(["initial", "gamma"], "must lie in [0, 1]")
    cond = section("conditions", {"T_sec_in", "m_e_sec", "T_surr", "T_amb"})
    for k in cond:
        kw[k] = num(["conditions", k], cond[k], positive=True)
    ctl = section("control", {"decoupler", "feedforward"})
    for src, dst in (("decoupler", "use_decoupler"), ("feedforward", "use_feedforward")):
        if src in ctl:
            if not isinstance(ctl[src], bool):
                fail(["control", src], "expected true/false")
            kw[dst] = ctl[src]

    refs = data.get("references")
    if not isinstance(refs, list) or not refs:
        fail(["references"], "expected a non-empty list of breakpoints")
    bps = []
    for i, item in enumerate(refs):
        if not isinstance(item, dict):
            fail(["references", i], "expected a mapping")
        for k in item:
            if k not in {"t_min", "Q_e_sec", "Q_TES", "Q_TES_sec"}:
                fail(["references", i, k], "unknown field")
        if "t_min" not in item:
            fail(["references", i], "missing 't_min'")
        t = 60.0 * num(["references", i, "t_min"], item["t_min"])
        vals = {k: num(["references", i, k], item.get(k, 0.0)) for k in ("Q_e_sec", "Q_TES", "Q_TES_sec")}
        for k, v in vals.items():
            if v < 0:
                fail(["references", i, k], "power references are magnitudes and must be >= 0")
        bps.append(Breakpoint(t, PowerReferences(**vals)))
    kw["breakpoints"] = tuple(bps)

    over = section("overrides", set(_OVERRIDE_TARGETS))
    checked = {}
    for target, values in over.items():
        if not isinstance(values, dict):
            fail(["overrides", target], "expected a mapping")
        names = {f.name for f in fields(_OVERRIDE_TARGETS[target])}
        for k, v in values.items():
            if k not in names:
                fail(["overrides", target, k], "unknown parameter")
            num(["overrides", target, k], v)
        checked[target] = dict(values)
    kw["overrides"] = checked
    if "outputs" in data:
        outs = data["outputs"]
        if not isinstance(outs, list) or not outs:
            fail(["outputs"], "expected a non-empty list of trace columns")
        for i, c in enumerate(outs):
            if c not in TRACE_COLUMNS:
                fail(["outputs", i], f"unknown trace column {c!r}")
        kw["outputs"] = tuple(["t"] + [c for c in outs if c != "t"])
    try:
        return Scenario(**kw)
    except ScenarioError as exc:
        raise ScenarioError(f"{source}: line {_line_of(root, ['references'])}: {exc}") from exc


def load_scenario(path) -> Scenario:
    path = Path(path)
    return parse_scenario(path.read_text(), str(path))


def bundled_scenario_path(name: str = "mode_tour") -> Path:
    return Path(__file__).parent / "data" / f"{name}.yaml"


def apply_overrides(plant: PlantConfig, overrides: dict) -> PlantConfig:
    kw = {}
    for target, values in overrides.items():
        kw[target] = replace(getattr(plant, target), **values)
    return replace(plant, **kw) if kw else plant


# -- trace ------------------------------------------------------------------------------

@dataclass(frozen=True)
class TraceRow:
    t: float
    mode: int
    Q_e_sec_ref: float
    Q_TES_ref: float
    Q_TES_sec_ref: float
    Q_e_sec: float
    Q_TES: float
    Q_TES_sec: float
    T_SH: float
    T_SH_ref: float
    N: float
    A_v: float
    A_v_TES: float
    m_e: float
    m_TES: float
    m_TES_sec: float
    m_e_ref: float
    m_TES_ref: float
    P_e: float
    P_c: float
    T_int: float
    gamma_TES: float
    W_comp: float


TRACE_COLUMNS = tuple(f.name for f in fields(TraceRow))


@dataclass
class SimResult:
    scenario: Scenario
    rows: list
    failure: str | None = None
    tank_log: list = field(default_factory=list)     # (t, SlowStepInfo)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows], dtype=float)

    def write_csv(self, path, columns=None):
        """Write the trace; ``columns`` defaults to the scenario's output selection."""
        path = Path(path)
        cols = tuple(columns or self.scenario.outputs or TRACE_COLUMNS)
        with open(path, "w", newline="") as fh:
            fh.write(f"# {TRACE_FORMAT} v{TRACE_VERSION}\n")
            w = csv.writer(fh)
            w.writerow(cols)
            for r in self.rows:
                d = asdict(r)
                w.writerow([repr(float(d[c])) if isinstance(d[c], (float, np.floating)) else d[c] for c in cols])
            if self.failure:
                fh.write(f"# failure: {self.failure}\n")
        return path


def read_trace(path) -> dict:
    """Read a trace CSV back into numpy columns."""
    with open(path) as fh:
        head = fh.readline()
        if not head.startswith(f"# {TRACE_FORMAT}"):
            raise ValueError("not a trace file")
        rows = [r for r in csv.reader(line for line in fh if not line.startswith("#"))]
    cols = rows[0]
    data = np.array([[float(v) for v in r] for r in rows[1:]]) if len(rows) > 1 else np.zeros((0, len(cols)))
    return {c: data[:, i] for i, c in enumerate(cols)}


# -- runner -----------------------------------------------------------------------------------

def run_scenario(scenario: Scenario, plant: PlantConfig | None = None,
                 control: ControlConfig | None = None) -> SimResult:
    """Closed-loop simulation of ``scenario``; failures truncate the trace."""
    plant = plant or PlantConfig.default()
    plant = apply_overrides(plant, scenario.overrides)
    plant = replace(plant, T_sec_in=scenario.T_sec_in, m_e_sec=scenario.m_e_sec, T_surr=scenario.T_surr,
                    condenser=replace(plant.condenser, T_amb=scenario.T_amb))
    control = control or default_control_config()
    control = replace(control, use_decoupler=scenario.use_decoupler and control.use_decoupler,
                      use_feedforward=scenario.use_feedforward and control.use_feedforward,
                      dt_control=scenario.dt_control, dt_fast=scenario.dt_fast)
    fl, cyc, geom, curve = plant.fluid, plant.cycle, plant.tank, plant.pcm
    bank = ControllerBank(control)

    dt, dt_c, dt_s = scenario.dt_fast, scenario.dt_control, scenario.dt_slow
    k_ctrl, k_slow = round(dt_c / dt), round(dt_s / dt)
    n_fast = int(round(scenario.duration / dt))

    P_c0 = scenario.P_c0 or nominal_condensing_pressure(fl)
    cond = cd.state_from_pressure(fl, P_c0, plant.condenser)
    tank = pt.TesState.from_charge(scenario.gamma0, scenario.T_int0, curve, geom)
    tank_inputs = pt.TesInputs(T_TES_sec_in=plant.T_sec_in, T_surr=plant.T_surr)
    op = solve_statics(fl, CycleInputs(0.0, 0.0, 0.0, 0.0, plant.m_e_sec, plant.T_sec_in), tank.T_int,
                       cond.P_c, cond.h_c_out, cyc, geom)
    result = SimResult(scenario, [])
    m_e_ref = m_t_ref = m_sec = 0.0
    E_tes = E_sec = 0.0
    try:
        for k in range(n_fast):
            t = k * dt
            if k % k_ctrl == 0:
                refs = scenario.refs_at(t)
                meas = CoolingPowers.from_signed(op.Q_e_sec, op.Q_TES, op.Q_TES_sec)
                sec = SecondaryInverse(geom.UA_sec, geom.secondary.cp, plant.T_sec_in - tank.T_int)
                m_e_ref, m_t_ref, m_sec, _ = bank.power_control_step(refs, meas, dt_c, sec)
            running = compressor_running(bank.sup.mode)
            T_SH_meas = op.T_SH if op.compressor_on else float("nan")
            _, N = bank.tsh_supervisor_step(T_SH_meas, dt)
            if running:
                rho = fl.density_ph(cond.P_c, cond.h_c_out)
                A_v = bank.valve_cascade_step(m_e_ref, op.m_e, cond.P_c, op.P_e, rho, bank.C_me, cyc.c_v, dt)
                A_t = bank.valve_cascade_step(m_t_ref, op.m_TES, cond.P_c, op.P_e, rho, bank.C_mt, cyc.c_v, dt)
            else:
                A_v = A_t = N = 0.0
            inputs = CycleInputs(N, A_v, A_t, m_sec, plant.m_e_sec, plant.T_sec_in)
            op = solve_statics(fl, inputs, tank.T_int, cond.P_c, cond.h_c_out, cyc, geom,
                               P_e_guess=op.P_e if op.compressor_on else None)
            if k % k_ctrl == 0:
                result.rows.append(_row(t, bank, refs, op, tank, curve, geom))
            cond = cd.step_fast(fl, cond, op.m_total, op.h_comp_out, op.m_total, dt, plant.condenser)
            E_tes += op.Q_TES * dt
            E_sec += op.Q_TES_sec * dt
            if (k + 1) % k_slow == 0:
                tank, info = pt.step_slow_detailed(tank, tank_inputs, E_tes / dt_s, E_sec / dt_s, dt_s,
                                                   curve, geom)
                result.tank_log.append(((k + 1) * dt, info))
                E_tes = E_sec = 0.0
    except (StaticsError, PropertyRangeError) as exc:
        result.failure = f"t={k * dt:g} s: {type(exc).__name__}: {exc}"
    return result


def _row(t, bank, refs, op, tank, curve, geom) -> TraceRow:
    return TraceRow(
        t=t, mode=int(bank.sup.mode), Q_e_sec_ref=refs.Q_e_sec, Q_TES_ref=refs.Q_TES,
        Q_TES_sec_ref=refs.Q_TES_sec, Q_e_sec=abs(op.Q_e_sec), Q_TES=abs(op.Q_TES),
        Q_TES_sec=abs(op.Q_TES_sec), T_SH=op.T_SH, T_SH_ref=bank.sup.T_SH_ref, N=op.N, A_v=op.A_v,
        A_v_TES=op.A_v_TES, m_e=op.m_e, m_TES=op.m_TES, m_TES_sec=op.m_TES_sec,
        m_e_ref=float(bank.m_refs[0]), m_TES_ref=float(bank.m_refs[1]), P_e=op.P_e, P_c=op.P_c, T_int=tank.T_int,
        gamma_TES=pt.charge_ratio(tank, curve, geom), W_comp=op.W_comp)


# -- tank-only charge / discharge runs --------------------------------------------------------

@dataclass(frozen=True)
class TesProcessResult:
    process: str
    setting: float             # valve opening [%] or secondary flow [kg/s]
    t: np.ndarray              # [s]
    gamma: np.ndarray
    Q: np.ndarray              # magnitude of the driving bundle power [W]
    T_int: np.ndarray
    completed: bool

    @property
    def duration(self) -> float:
        return float(self.t[-1]) if self.completed else math.inf

    def power_at(self, gamma: float) -> float:
        """Bundle power when the charge ratio first crosses ``gamma``."""
        g = self.gamma if self.process == "charge" else -self.gamma
        target = gamma if self.process == "charge" else -gamma
        return float(np.interp(target, np.maximum.accumulate(g), self.Q))


def tes_process(plant: PlantConfig, process: str, setting: float, *, dt: float = 30.0,
                t_max: float = 48 * 3600.0, T_int0: float | None = None,
                stop: float = 0.01) -> TesProcessResult:
    """Full charge (valve opening ``setting`` %) or discharge (secondary flow ``setting`` kg/s).

    Charging feeds the tank from the nominal condenser outlet through the TES
    valve into ``P_TES_IN_NOMINAL``; the run stops when the charge ratio is
    within ``stop`` of its end value.
    """
    fl, geom, curve = plant.fluid, plant.tank, plant.pcm
    if process == "charge":
        P_up = nominal_condensing_pressure(fl)
        rho = fl.density_ph(P_up, fl.h_liq(P_up))
        m = valve_mass_flow(setting, rho, P_up, P_TES_IN_NOMINAL, plant.cycle.c_v)
        inputs = pt.TesInputs(m_TES=m, P_TES_in=P_TES_IN_NOMINAL, h_TES_in=fl.h_liq(P_up), T_surr=plant.T_surr)
        state = pt.TesState.from_charge(0.0, 242.15 if T_int0 is None else T_int0, curve, geom)
        done = lambda g: g >= 1.0 - stop
    elif process == "discharge":
        inputs = pt.TesInputs(m_TES_sec=setting, T_TES_sec_in=plant.T_sec_in, T_surr=plant.T_surr)
        state = pt.TesState.from_charge(1.0, 246.15 if T_int0 is None else T_int0, curve, geom)
        done = lambda g: g <= stop
    else:
        raise ValueError("process must be 'charge' or 'discharge'")
    ts, gs, qs, Ts = [], [], [], []
    t = 0.0
    completed = False
    while t <= t_max:
        out = pt.exchange(fl, state, inputs, geom)
        g = pt.charge_ratio(state, curve, geom)
        ts.append(t); gs.append(g); Ts.append(state.T_int)
        qs.append(out.abs_Q_TES if process == "charge" else out.abs_Q_TES_sec)
        if done(g):
            completed = True
            break
        state = pt.step_slow(state, inputs, out.Q_TES, out.Q_TES_sec, dt, curve, geom)
        t += dt
    return TesProcessResult(process, float(setting), np.array(ts), np.array(gs), np.array(qs),
                            np.array(Ts), completed)


# -- metrics ------------------------------------------------------------------------------------

@dataclass(frozen=True)
class StepMetrics:
    channel: str
    t_step: float
    ref: float
    settling_time: float       # inf if never settled within the segment
    steady_error: float        # relative
    segment_end: float


_CHANNELS = (("Q_e_sec", "Q_e_sec_ref"), ("Q_TES", "Q_TES_ref"), ("Q_TES_sec", "Q_TES_sec_ref"))


def step_metrics(res: SimResult, band: float = 0.05, tail: float = 30.0) -> list:
    """Settling time (into +-band) and steady error for every active step reference.

    A segment runs from one breakpoint to the next; the steady error is the
    mean relative error over the last ``tail`` seconds of the segment.
    """
    t = res.column("t")
    out = []
    bps = res.scenario.breakpoints
    ends = [b.t for b in bps[1:]] + [res.scenario.duration]
    for bp, t_end in zip(bps, ends):
        for meas_name, ref_name in _CHANNELS:
            ref = getattr(bp.refs, meas_name)
            if ref <= 1.0:
                continue
            sel = (t >= bp.t) & (t < t_end)
            if not np.any(sel):
                continue
            y = res.column(meas_name)[sel]
            ts = t[sel]
            err = np.abs(y - ref) / ref
            outside = np.nonzero(err > band)[0]
            if outside.size == 0:
                settle = 0.0
            elif outside[-1] == len(err) - 1:
                settle = math.inf
            else:
                settle = ts[outside[-1] + 1] - bp.t
            steady = float(np.mean(y[ts >= t_end - tail]) - ref) / ref
            out.append(StepMetrics(meas_name, bp.t, ref, settle, abs(steady), t_end))
    return out


def cross_coupling(res: SimResult, pre: float = 30.0) -> float:
    """Largest excursion of one coupled power while only the other one's reference steps.

    Measured against the mean over ``pre`` seconds before the step, up to the
    next breakpoint.  0 when no breakpoint steps exactly one of the pair.
    """
    t = res.column("t")
    bps = res.scenario.breakpoints
    ends = [b.t for b in bps[1:]] + [res.scenario.duration]
    worst = 0.0
    for prev, bp, t_end in zip(bps, bps[1:], ends[1:]):
        moved = [abs(getattr(bp.refs, c) - getattr(prev.refs, c)) > 1e-9 for c in ("Q_e_sec", "Q_TES")]
        if moved[0] == moved[1]:
            continue
        other = "Q_TES" if moved[0] else "Q_e_sec"
        if getattr(bp.refs, other) <= 1.0:
            continue
        y = res.column(other)
        before = (t >= bp.t - pre) & (t < bp.t)
        after = (t >= bp.t) & (t < t_end)
        if np.any(before) and np.any(after):
            worst = max(worst, float(np.max(np.abs(y[after] - y[before].mean()))))
    return worst


def summarize(res: SimResult) -> dict:
    T_SH = res.column("T_SH")
    m = step_metrics(res)
    return {
        "scenario": res.scenario.name,
        "rows": len(res.rows),
        "failure": res.failure,
        "min_T_SH": float(np.nanmin(T_SH)) if np.any(np.isfinite(T_SH)) else None,
        "max_settling_s": float(max((s.settling_time for s in m), default=0.0)),
        "max_steady_error": max((s.steady_error for s in m), default=0.0),
        "max_cross_coupling": cross_coupling(res),
        "modes": mode_sequence(res),
    }


def mode_sequence(res: SimResult) -> list:
    seq = []
    for r in res.rows:
        if not seq or seq[-1] != r.mode:
            seq.append(r.mode)
    return seq


# -- open-loop identification ---------------------------------------------------------------

@dataclass(frozen=True)
class IdentPoint:
    """Operating point for step identification (virtual-flow mode, fixed speed)."""

    m_e: float = 0.006
    m_TES: float = 0.005
    m_TES_sec: float = 0.25
    N: float = 30.0
    T_int: float = 244.15


def simulate_virtual(plant: PlantConfig, schedule, T_int: float, n_steps: int, dt: float = 1.0,
                     cond: cd.CondenserState | None = None):
    """Open-loop fast simulation with virtual inputs ``schedule(k) -> VirtualInputs``.

    The tank temperature is frozen.  Returns ``(powers[n, 3], final condenser state)``
    with power magnitudes in columns (Q_e_sec, Q_TES, Q_TES_sec).
    """
    fl = plant.fluid
    cond = cond or cd.state_from_pressure(fl, nominal_condensing_pressure(fl), plant.condenser)
    out = np.zeros((n_steps, 3))
    P_e = None
    for k in range(n_steps):
        op = solve_statics(fl, schedule(k), T_int, cond.P_c, cond.h_c_out, plant.cycle, plant.tank,
                           P_e_guess=P_e)
        P_e = op.P_e
        out[k] = (abs(op.Q_e_sec), abs(op.Q_TES), abs(op.Q_TES_sec))
        cond = cd.step_fast(fl, cond, op.m_total, op.h_comp_out, op.m_total, dt, plant.condenser)
    return out, cond


def _lead_lag(t, K, J, tau):
    return K + (J - K) * np.exp(-t / tau)


@dataclass(frozen=True)
class IdentificationResult:
    model: LinearPlantModel
    taus: dict            # per-channel fitted time constants [s]
    jumps: np.ndarray     # instantaneous gains (3x3)


def identify_linear_model(plant: PlantConfig | None = None, point: IdentPoint = IdentPoint(),
                          du=(5e-4, 5e-4, 0.02), settle: int = 600, horizon: int = 400,
                          dt: float = 1.0) -> IdentificationResult:
    """Step-response identification of the three powers against the three flows."""
    plant = plant or PlantConfig.default()
    base = [point.m_e, point.m_TES, point.m_TES_sec]

    def vin(u):
        return VirtualInputs(point.N, u[0], u[1], u[2], plant.m_e_sec, plant.T_sec_in)

    y0, cond = simulate_virtual(plant, lambda k: vin(base), point.T_int, settle, dt)
    y_ss = y0[-1]
    K = np.zeros((3, 3))
    J = np.zeros((3, 3))
    taus = {}
    t = np.arange(horizon) * dt
    for j in range(3):
        u = list(base)
        u[j] += du[j]
        y, _ = simulate_virtual(plant, lambda k: vin(u), point.T_int, horizon, dt, cond)
        dy = (y - y_ss) / du[j]
        for i in range(3):
            K[i, j] = dy[-1, i]
            J[i, j] = dy[0, i]
            if i < 2 and j < 2:
                try:
                    p, _ = curve_fit(_lead_lag, t, dy[:, i], p0=(dy[-1, i], dy[0, i], 40.0), maxfev=5000)
                    taus[(i, j)] = float(p[2])
                except RuntimeError:
                    taus[(i, j)] = float("nan")
    tau_dp = float(np.nanmean([taus[(0, 0)], taus[(1, 1)]]))
    tau_z = float(np.mean([J[0, 0] / K[0, 0], J[1, 1] / K[1, 1]]) * tau_dp)
    Km = K.copy()
    Km[[0, 1, 2, 2], [2, 2, 0, 1]] = 0.0      # neglected refrigerant/secondary couplings
    return IdentificationResult(LinearPlantModel(Km, tau_dp, tau_z), taus, J)


__all__ = [
    "Breakpoint", "IDENTIFIED_MODEL", "IdentPoint", "IdentificationResult", "PlantConfig", "Scenario", "TesProcessResult",
    "ScenarioError", "SimResult", "StepMetrics", "TRACE_COLUMNS", "TraceRow", "bundled_scenario_path",
    "check_rates", "cross_coupling", "default_control_config", "identify_linear_model", "load_scenario", "mode_sequence",
    "parse_scenario", "read_trace", "run_scenario", "simulate_virtual", "step_metrics", "summarize", "tes_process",
]
