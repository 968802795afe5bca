"""Steady-state cooling-power envelopes per operating mode.

A steady point is a grid point of the admissible actuator box for which the
condenser, the intermediate fluid and the refrigerant flows all balance.  The
PCM is represented by a frozen layer profile: the phase front sits at the
requested boundary location and exchanges heat with the intermediate fluid
through the conductance of the sensible shell around it.  Compressor speed is
not gridded; it follows the superheat rule (minimum speed unless superheat
would drop below ``T_SH_target``, then the speed that holds it there).

All grid points are solved together with vectorised bracketing iterations.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
import numpy as np

from . import pcm_tank as pt
from .control import _MODE_TABLE, Mode
from .cycle_statics import (A_RANGE, M_SEC_RANGE, N_RANGE, _compressor, branch_states,
                            flow_residual, nominal_condensing_pressure, valve_mass_flow,
                            volumetric_efficiency)
from .sim_runner import PlantConfig

POWERS = ("Q_e_sec", "Q_TES", "Q_TES_sec")
_FLAGS = {mode: flags for flags, mode in _MODE_TABLE.items()}
POINT_COLUMNS = ("A_v", "A_v_TES", "m_TES_sec", "N", "P_e", "P_c", "T_int", "T_SH",
                 "Q_e_sec", "Q_TES", "Q_TES_sec")


def active_powers(mode: int) -> tuple[str, ...]:
    """Powers that are nonzero in ``mode`` (1..8)."""
    flags = _FLAGS[Mode(mode)]
    return tuple(p for p, on in zip(POWERS, flags) if on)


@dataclass(frozen=True)
class EnvelopeSettings:
    T_SH_target: float | None = None     # default: the cycle's T_SH_min
    P_tol: float = 1e-2                  # [Pa]
    T_tol: float = 1e-5                  # [K]
    max_outer: int = 80


@dataclass(frozen=True)
class PowerEnvelope:
    mode: int
    boundary_location: str
    ranges: dict                         # power -> (min, max) magnitudes [W]
    points: dict = field(repr=False)     # column -> array over feasible points
    n_grid: int = 0

    @property
    def n_feasible(self) -> int:
        return len(self.points["N"]) if self.points else 0

    @property
    def empty(self) -> bool:
        return self.n_feasible == 0

    def range(self, power: str):
        return self.ranges.get(power)

    def write_points_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(POINT_COLUMNS)
            for row in zip(*(self.points[c] for c in POINT_COLUMNS)):
                w.writerow([f"{x:.8g}" for x in row])


def write_envelope_table(envelopes, path) -> None:
    """One row per envelope with min/max columns per power; blank when inactive."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["mode", "location", "n_feasible"] + [f"{p}_{b}" for p in POWERS for b in ("min", "max")])
        for env in envelopes:
            cells = []
            for p in POWERS:
                r = env.range(p)
                cells += ["", ""] if r is None else [f"{r[0]:.1f}", f"{r[1]:.1f}"]
            w.writerow([env.mode, env.boundary_location, env.n_feasible] + cells)


# -- vectorised root finding --------------------------------------------------------------

def vec_root(f, lo, hi, f_lo=None, f_hi=None, xtol=1e-2, maxit=200):
    """Illinois regula falsi on many brackets at once.

    ``f`` maps an array of abscissae to an array of values.  Points whose
    bracket holds no sign change come back as NaN.
    """
    a = np.array(lo, dtype=float)
    b = np.array(hi, dtype=float)
    fa = f(a) if f_lo is None else np.array(f_lo, dtype=float)
    fb = f(b) if f_hi is None else np.array(f_hi, dtype=float)
    valid = np.sign(fa) * np.sign(fb) <= 0
    side = np.zeros(a.shape, dtype=int)
    x = np.where(fa == 0, a, b)
    done = ~valid | (fa == 0) | (fb == 0)
    for k in range(maxit):
        if done.all():
            break
        with np.errstate(divide="ignore", invalid="ignore"):
            x_new = (a * fb - b * fa) / (fb - fa)
        # fall back to bisection every third step and whenever the secant misbehaves
        bad = ~np.isfinite(x_new) | (x_new <= np.minimum(a, b)) | (x_new >= np.maximum(a, b)) | (k % 3 == 2)
        x_new = np.where(bad, 0.5 * (a + b), x_new)
        x = np.where(done, x, x_new)
        fx = f(x)
        left = np.sign(fx) == np.sign(fa)           # root lies in [x, b]
        upd = ~done
        a_new = np.where(upd & left, x, a)
        fa_new = np.where(upd & left, fx, fa)
        b_new = np.where(upd & ~left, x, b)
        fb_new = np.where(upd & ~left, fx, fb)
        # Illinois: halve the stale end point when the same side is kept twice
        fb_new = np.where(upd & left & (side == 1), 0.5 * fb_new, fb_new)
        fa_new = np.where(upd & ~left & (side == -1), 0.5 * fa_new, fa_new)
        side = np.where(upd, np.where(left, 1, -1), side)
        a, fa, b, fb = a_new, fa_new, b_new, fb_new
        done |= (np.abs(b - a) < xtol) | (fx == 0)
    return np.where(valid, x, np.nan)


# -- steady solution on a batch of actuator settings ------------------------------------

def _refrigerant(plant: PlantConfig, A_v, A_t, P_c, T_int, T_SH_target):
    fl, cyc, geom = plant.fluid, plant.cycle, plant.tank
    h_c = fl.h_liq(P_c)
    lo = np.full_like(P_c, fl.P_min)
    hi = np.minimum(P_c * (1.0 - 1e-6), fl.P_max)

    def psi(P, N):
        return flow_residual(fl, P, N, P_c, h_c, T_int, plant.T_sec_in, cyc, geom, A_v=A_v, A_v_TES=A_t)

    def superheat(P):
        m_e, m_t = _flows(plant, P, A_v, A_t, P_c, h_c)
        _, _, h_mix = branch_states(fl, P, m_e, m_t, P_c, h_c, T_int, plant.T_sec_in, cyc, geom)
        return fl.temperature_ph(P, h_mix) - fl.sat_temperature(P)

    N_min, N_max = N_RANGE
    P30 = vec_root(lambda P: psi(P, N_min), lo, hi, xtol=1e-3)
    sh30 = superheat(np.where(np.isfinite(P30), P30, hi))
    low_sh = np.isfinite(P30) & (sh30 < T_SH_target)
    P_e = P30.copy()
    N = np.full_like(P_c, N_min)
    if low_sh.any():
        # faster compressor: evaporating pressure where superheat equals the target
        P_sh = vec_root(lambda P: superheat(P) - T_SH_target - 1e-3, lo, np.where(low_sh, P30, hi), xtol=1e-3)
        m_e, m_t = _flows(plant, P_sh, A_v, A_t, P_c, h_c)
        _, _, h_mix = branch_states(fl, P_sh, m_e, m_t, P_c, h_c, T_int, plant.T_sec_in, cyc, geom)
        rho = fl.density_ph(np.where(np.isfinite(P_sh), P_sh, hi), h_mix)
        N_sh = (m_e + m_t) / (volumetric_efficiency(P_sh, P_c, cyc) * cyc.V_disp * rho)
        P_e = np.where(low_sh, P_sh, P_e)
        N = np.where(low_sh, N_sh, N)
    ok = np.isfinite(P_e) & (N <= N_max + 1e-9)
    P_e = np.where(ok, P_e, 0.5 * (lo + hi))
    m_e, m_t = _flows(plant, P_e, A_v, A_t, P_c, h_c)
    h_e, h_t, h_mix = branch_states(fl, P_e, m_e, m_t, P_c, h_c, T_int, plant.T_sec_in, cyc, geom)
    _, h_out = _compressor(fl, N, P_e, P_c, h_mix, cyc)
    T_SH = fl.temperature_ph(P_e, h_mix) - fl.sat_temperature(P_e)
    return dict(ok=ok, P_e=P_e, N=N, m=m_e + m_t, h_out=h_out, T_SH=T_SH,
                Q_e=m_e * (h_e - h_c), Q_t=m_t * (h_t - h_c))


def _flows(plant, P, A_v, A_t, P_c, h_c):
    rho = plant.fluid.density_ph(P_c, h_c)
    c_v = plant.cycle.c_v
    return valve_mass_flow(A_v, rho, P_c, P, c_v), valve_mass_flow(A_t, rho, P_c, P, c_v)


def _secondary_magnitude(plant, m_sec, T_int):
    geom = plant.tank
    C = np.where(m_sec > 0, m_sec * geom.secondary.cp, 1.0)
    eff = np.where(m_sec > 0, 1.0 - np.exp(-geom.UA_sec / C), 0.0)
    return C * eff * (plant.T_sec_in - T_int)


def steady_points(plant: PlantConfig, location: str, A_v, A_v_TES, m_TES_sec,
                  settings: EnvelopeSettings = EnvelopeSettings()) -> dict:
    """Steady operating points for arrays of actuator settings (0 = branch off).

    Returns a dict of arrays (see ``POINT_COLUMNS``) plus a boolean ``feasible``.
    Powers are magnitudes of heat removed.
    """
    fl, geom, curve = plant.fluid, plant.tank, plant.pcm
    A_v, A_t, m_sec = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (A_v, A_v_TES, m_TES_sec)))
    A_v, A_t, m_sec = A_v.ravel().copy(), A_t.ravel().copy(), m_sec.ravel().copy()
    n = A_v.size
    target = plant.cycle.T_SH_min if settings.T_SH_target is None else settings.T_SH_target
    comp = (A_v > 0) | (A_t > 0)
    G_ch = pt.shell_conductance(location, "charge", geom)
    G_dis = pt.shell_conductance(location, "discharge", geom)
    T_lat = curve.T_lat
    P_c = np.full(n, nominal_condensing_pressure(fl))
    T_int = np.full(n, T_lat)
    conv = np.zeros(n, dtype=bool)
    ref = None
    cond = plant.condenser
    P_c_lo, P_c_hi = fl.sat_pressure(cond.T_amb + 0.5), 0.98 * fl.P_max

    for _ in range(settings.max_outer):
        ref = _refrigerant(plant, np.where(comp, A_v, 0.0), A_t, P_c, T_int, target) if comp.any() else None
        Q_t = np.where(comp, ref["Q_t"], 0.0) if ref is not None else np.zeros(n)
        # intermediate-fluid balance with the refrigerant duty frozen
        def int_balance(T):
            G = np.where(T > T_lat, G_dis, G_ch)
            return (G * (T_lat - T) + geom.UA_amb * (plant.T_surr - T) - Q_t
                    + _secondary_magnitude(plant, m_sec, T))
        T_new = vec_root(int_balance, np.full(n, T_lat - 60.0), np.full(n, T_lat + 60.0), xtol=1e-7)
        if ref is not None:
            m, h_out = ref["m"], ref["h_out"]
            P_new = vec_root(lambda P: m * (h_out - fl.h_liq(P)) - cond.UA_c * (fl.sat_temperature(P) - cond.T_amb),
                             np.full(n, P_c_lo), np.full(n, P_c_hi), xtol=1e-3)
            P_new = np.where(comp & ref["ok"] & np.isfinite(P_new), P_new, P_c)
        else:
            P_new = P_c
        dP, dT = np.abs(P_new - P_c), np.abs(T_new - T_int)
        conv = (dP < settings.P_tol) & (dT < settings.T_tol)
        P_c, T_int = P_new, T_new
        if conv.all():
            break
    if comp.any():
        ref = _refrigerant(plant, np.where(comp, A_v, 0.0), A_t, P_c, T_int, target)
        ok = np.where(comp, ref["ok"] & (ref["T_SH"] >= target - 1e-9), True)
        get = {k: np.where(comp, ref[k], v) for k, v in
               (("P_e", fl.sat_pressure(np.minimum(plant.T_sec_in, T_int))), ("N", 0.0), ("T_SH", np.nan),
                ("Q_e", 0.0), ("Q_t", 0.0))}
    else:
        ok = np.ones(n, dtype=bool)
        get = dict(P_e=fl.sat_pressure(np.minimum(plant.T_sec_in, T_int)), N=np.zeros(n),
                   T_SH=np.full(n, np.nan), Q_e=np.zeros(n), Q_t=np.zeros(n))
    feasible = ok & conv & np.isfinite(T_int)
    return dict(A_v=A_v, A_v_TES=A_t, m_TES_sec=m_sec, N=get["N"], P_e=get["P_e"], P_c=P_c, T_int=T_int,
                T_SH=get["T_SH"], Q_e_sec=get["Q_e"], Q_TES=get["Q_t"],
                Q_TES_sec=_secondary_magnitude(plant, m_sec, T_int), feasible=feasible)


def _grid(mode: int, resolution: int):
    on = dict(zip(POWERS, _FLAGS[Mode(mode)]))
    axes = []
    for p in POWERS:
        lo, hi = M_SEC_RANGE if p == "Q_TES_sec" else A_RANGE
        axes.append(np.linspace(lo, hi, resolution) if on[p] else np.zeros(1))
    return np.meshgrid(*axes, indexing="ij")


def sweep_envelope(mode: int, boundary_location: str, resolution: int = 21, plant: PlantConfig | None = None,
                   settings: EnvelopeSettings = EnvelopeSettings()) -> PowerEnvelope:
    """Per-power ranges over the admissible actuator box for one mode and front location."""
    if boundary_location not in pt.BOUNDARY_LOCATIONS:
        raise ValueError(f"unknown boundary location {boundary_location!r}")
    mode = int(Mode(mode))
    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    powers = active_powers(mode)
    if not powers:
        return PowerEnvelope(mode, boundary_location, {}, {c: np.zeros(0) for c in POINT_COLUMNS}, 0)
    plant = plant or PlantConfig.default()
    A_v, A_t, m_sec = _grid(mode, resolution)
    sol = steady_points(plant, boundary_location, A_v, A_t, m_sec, settings)
    keep = sol["feasible"]
    points = {c: sol[c][keep] for c in POINT_COLUMNS}
    ranges = {p: (float(points[p].min()), float(points[p].max())) for p in powers if keep.any()}
    return PowerEnvelope(mode, boundary_location, ranges, points, int(A_v.size))


@dataclass(frozen=True)
class PowerMap:
    mode: int
    boundary_location: str
    Q_e_sec: np.ndarray
    Q_TES: np.ndarray
    frontier_Q_e: np.ndarray            # bin centres
    frontier_Q_TES: np.ndarray          # per-bin maximum of |Q_TES|
    bin_width: float

    def corner_feasible(self, rel_tol: float = 0.02) -> bool:
        """Whether (max |Q_e_sec|, max |Q_TES|) is reached within ``rel_tol``."""
        top = self.frontier_Q_TES[np.isfinite(self.frontier_Q_TES)][-1]
        return bool(top >= (1.0 - rel_tol) * self.Q_TES.max())

    def frontier_at(self, q_e) -> np.ndarray:
        return np.interp(q_e, self.frontier_Q_e, self.frontier_Q_TES)


def frontier(q_e, q_t, n_bins: int):
    """Per-bin maxima of ``q_t`` over equal-width bins of ``q_e``; empty bins are dropped."""
    edges = np.linspace(q_e.min(), q_e.max(), n_bins + 1)
    idx = np.clip(np.digitize(q_e, edges) - 1, 0, n_bins - 1)
    top = np.full(n_bins, -np.inf)
    np.maximum.at(top, idx, q_t)
    centres = 0.5 * (edges[1:] + edges[:-1])
    keep = np.isfinite(top)
    return centres[keep], top[keep], edges[1] - edges[0]


def frontier_cell_distance(coarse: PowerMap, fine: PowerMap, coarse_resolution: int) -> np.ndarray:
    """Distance of each coarse frontier point to the fine frontier, in coarse grid cells.

    One cell spans ``range / (coarse_resolution - 1)`` on each power axis; the
    distance to a frontier point is the larger of the two scaled offsets.
    """
    n = coarse_resolution - 1
    ce = (coarse.Q_e_sec.max() - coarse.Q_e_sec.min()) / n
    ct = (coarse.Q_TES.max() - coarse.Q_TES.min()) / n
    xs = np.linspace(fine.frontier_Q_e[0], fine.frontier_Q_e[-1], 4000)
    ys = fine.frontier_at(xs)
    return np.array([np.min(np.maximum(np.abs(xs - x) / ce, np.abs(ys - y) / ct))
                     for x, y in zip(coarse.frontier_Q_e, coarse.frontier_Q_TES)])


def coupled_power_map(mode: int, boundary_location: str, resolution: int = 21, plant: PlantConfig | None = None,
                      n_bins: int | None = None, settings: EnvelopeSettings = EnvelopeSettings()) -> PowerMap:
    """Feasible (|Q_e_sec|, |Q_TES|) cloud and its upper frontier for mode 1 or 7."""
    if int(mode) not in (1, 7):
        raise ValueError("coupled power maps exist for modes 1 and 7 only")
    env = sweep_envelope(mode, boundary_location, resolution, plant, settings)
    q_e, q_t = env.points["Q_e_sec"], env.points["Q_TES"]
    centres, top, width = frontier(q_e, q_t, n_bins or resolution)
    return PowerMap(int(mode), boundary_location, q_e, q_t, centres, top, width)


def reference_warnings(scenario, plant: PlantConfig | None = None, resolution: int = 6,
                       rel_tol: float = 0.05) -> list[str]:
    """Messages for scenario references outside the steady envelope of their mode.

    The envelope is the union over the three boundary locations on a coarse
    grid, widened by ``rel_tol``.  Infeasible references are allowed; this
    only reports them.
    """
    from .control import mode_logic
    from .sim_runner import apply_overrides

    plant = apply_overrides(plant or PlantConfig.default(), scenario.overrides)
    cache = {}
    out = []
    for bp in scenario.breakpoints:
        mode = int(mode_logic(bp.refs))
        if mode == Mode.OFF:
            continue
        if mode not in cache:
            envs = [sweep_envelope(mode, loc, resolution, plant) for loc in pt.BOUNDARY_LOCATIONS]
            cache[mode] = {p: (min(e.ranges[p][0] for e in envs if p in e.ranges),
                               max(e.ranges[p][1] for e in envs if p in e.ranges))
                           for p in active_powers(mode) if any(p in e.ranges for e in envs)}
        for p in active_powers(mode):
            ref = getattr(bp.refs, p)
            lo, hi = cache[mode].get(p, (np.nan, np.nan))
            if not (lo * (1 - rel_tol) <= ref <= hi * (1 + rel_tol)):
                out.append(f"t={bp.t / 60:g} min, mode {mode}: {p} reference {ref:g} W outside "
                           f"steady range [{lo:.0f}, {hi:.0f}] W")
    return out


__all__ = [
    "EnvelopeSettings", "POINT_COLUMNS", "POWERS", "PowerEnvelope", "PowerMap", "active_powers",
    "coupled_power_map", "frontier", "frontier_cell_distance", "reference_warnings", "steady_points", "sweep_envelope", "vec_root", "write_envelope_table",
]
