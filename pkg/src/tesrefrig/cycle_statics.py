"""Steady-state component models of the refrigeration cycle and their solver.

Topology: the condenser feeds two expansion valves in parallel.  One serves
the evaporator (chamber load), the other the refrigerant bundle of the
storage tank.  Both branches merge at the compressor intake (the junction)
at the evaporating pressure ``P_e``.

Given the condenser state ``(P_c, h_c_out)`` and the intermediate-fluid
temperature, :func:`solve_statics` finds the ``P_e`` at which the
compressor swallows exactly what the valves deliver.  Two input styles are
supported:

* valve mode: openings ``A_v`` / ``A_v_TES`` and speed ``N`` are given;
* virtual-flow mode: the refrigerant flows ``m_e`` / ``m_TES`` and ``N`` are
  given and the openings that realise them are returned.

Most functions are vectorised over numpy arrays so that envelope sweeps can
evaluate whole grids at once.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .heat_exchange import two_zone_evaporation
from .pcm_tank import TesGeometry, secondary_side
from .thermo import BRINE, FluidModel, LiquidModel, PhaseError

# Admissible manipulated input ranges; zero means "branch off".
A_RANGE = (10.0, 90.0)
N_RANGE = (30.0, 50.0)
M_SEC_RANGE = (0.050, 0.440)
M_REF_RANGE = (0.001, 0.010)

P_TES_IN_NOMINAL = 1.0e5
H_TES_IN_NOMINAL = 258.0e3


class StaticsError(RuntimeError):
    """Fixed-point solver failed; ``residual`` holds the last flow mismatch."""

    def __init__(self, msg, residual=float("nan")):
        super().__init__(msg)
        self.residual = residual


class FeasibilityError(StaticsError):
    """No evaporating pressure below the condensing pressure balances the flows."""


class WetCompressionError(PhaseError):
    """Two-phase refrigerant at the compressor intake."""


# -- parameters --------------------------------------------------------------

@dataclass(frozen=True)
class CycleParams:
    """Component parameters of the cycle (see :meth:`calibrated`)."""

    c_v: float = 2.72e-7            # valve coefficient [m^2]
    V_disp: float = 1.35e-4         # compressor displacement [m^3/rev]
    clearance: float = 0.05         # clearance ratio for eta_v
    n_poly: float = 1.1             # re-expansion polytropic exponent
    eta_is: float = 0.65            # isentropic efficiency
    UA_e: float = 80.0              # evaporator overall UA [W/K]
    T_SH_min: float = 2.0           # minimum superheat [K]
    secondary: LiquidModel = BRINE

    @classmethod
    def calibrated(cls, fluid: FluidModel, **overrides) -> "CycleParams":
        """Parameters with ``c_v`` and ``V_disp`` fitted to the design anchors.

        * valve: 90 % opening passes 10 g/s of saturated liquid from the
          nominal condensing pressure down to 1 bar;
        * compressor: 30 Hz swallows 20 g/s (both valves at their maximum
          flow) at 1.7 bar intake with 5 K superheat.
        """
        base = cls(**overrides)
        P_c = nominal_condensing_pressure(fluid)
        rho = fluid.density_ph(P_c, fluid.h_liq(P_c))
        c_v = M_REF_RANGE[1] / (0.9 * math.sqrt(rho * (P_c - P_TES_IN_NOMINAL)))
        P_e = 1.7e5
        h_in = fluid.h_vap(P_e) + 5.0 * fluid.cp_vap(P_e)
        eta_v = volumetric_efficiency(P_e, P_c, base)
        V = 2 * M_REF_RANGE[1] / (eta_v * N_RANGE[0] * fluid.density_ph(P_e, h_in))
        fitted = {"c_v": c_v, "V_disp": V}
        fitted.update({k: v for k, v in overrides.items() if k in fitted})
        return replace(base, **fitted)


def nominal_condensing_pressure(fluid: FluidModel, h_out: float = H_TES_IN_NOMINAL) -> float:
    """Condensing pressure whose saturated liquid has enthalpy ``h_out``."""
    P = fluid.table["P"]
    return float(np.interp(h_out, fluid.table["h_liq"], P))


# -- components --------------------------------------------------------------

class ValveResult(tuple):
    """``(m_dot, h_down, backflow)``"""

    __slots__ = ()

    def __new__(cls, m_dot, h_down, backflow):
        return super().__new__(cls, (m_dot, h_down, backflow))

    m_dot = property(lambda s: s[0])
    h_down = property(lambda s: s[1])
    backflow = property(lambda s: s[2])


def valve_mass_flow(A_v, rho_up, P_up, P_down, c_v):
    """Orifice law ``c_v * (A/100) * sqrt(rho * dP)``, zero for dP <= 0 (vectorised)."""
    dP = np.maximum(np.asarray(P_up, dtype=float) - P_down, 0.0)
    m = c_v * (np.asarray(A_v, dtype=float) / 100.0) * np.sqrt(rho_up * dP)
    return float(m) if np.ndim(m) == 0 else m


def valve_flow(fluid: FluidModel, A_v: float, P_up: float, h_up: float, P_down: float,
               params: CycleParams) -> ValveResult:
    """Isenthalpic expansion valve; back-flow is blocked and flagged."""
    if not 0.0 <= A_v <= 100.0:
        raise ValueError("valve opening must lie in [0, 100] %")
    if P_up <= P_down:
        return ValveResult(0.0, h_up, True)
    rho = fluid.density_ph(P_up, h_up)
    return ValveResult(valve_mass_flow(A_v, rho, P_up, P_down, params.c_v), h_up, False)


def valve_opening(m_dot, rho_up, P_up, P_down, c_v):
    """Inverse orifice law: opening [%] that passes ``m_dot`` (vectorised, inf if dP <= 0)."""
    dP = np.asarray(P_up, dtype=float) - P_down
    with np.errstate(divide="ignore", invalid="ignore"):
        A = np.where(dP > 0, 100.0 * np.asarray(m_dot) / (c_v * np.sqrt(rho_up * np.maximum(dP, 0.0))),
                     np.inf)
    A = np.where(np.asarray(m_dot) == 0, 0.0, A)
    return float(A) if A.ndim == 0 else A


def volumetric_efficiency(P_e, P_c, params: CycleParams):
    ratio = np.maximum(np.asarray(P_c, dtype=float) / P_e, 1.0)
    eta = 1.0 - params.clearance * (ratio ** (1.0 / params.n_poly) - 1.0)
    eta = np.maximum(eta, 0.0)
    return float(eta) if eta.ndim == 0 else eta


def _compressor(fluid, N, P_e, P_c, h_in, params):
    rho = fluid.density_ph(P_e, h_in)
    m = volumetric_efficiency(P_e, P_c, params) * params.V_disp * np.asarray(N, dtype=float) * rho
    h_is = fluid.isentropic_enthalpy(P_c, P_e, h_in)
    h_out = h_in + (h_is - h_in) / params.eta_is
    return m, h_out


class CompressorResult(tuple):
    """``(m_dot, h_out, W)``"""

    __slots__ = ()

    def __new__(cls, m_dot, h_out, W):
        return super().__new__(cls, (m_dot, h_out, W))

    m_dot = property(lambda s: s[0])
    h_out = property(lambda s: s[1])
    W = property(lambda s: s[2])


def compressor(fluid: FluidModel, N: float, P_e: float, P_c: float, h_in: float,
               params: CycleParams, *, allow_wet: bool = False) -> CompressorResult:
    """Volumetric compressor with clearance re-expansion and isentropic efficiency."""
    if not allow_wet and h_in <= fluid.h_vap(P_e):
        raise WetCompressionError(f"two-phase suction at P_e={P_e:.5g} Pa, h={h_in:.6g} J/kg")
    if N < 0:
        raise ValueError("compressor speed must be non-negative")
    m, h_out = _compressor(fluid, N, P_e, P_c, h_in, params)
    m, h_out = float(m), float(h_out)
    return CompressorResult(m, h_out, m * (h_out - h_in))


class EvaporatorResult(tuple):
    """``(h_out, Q_e_sec, T_sec_out)``"""

    __slots__ = ()

    def __new__(cls, h_out, Q_e_sec, T_sec_out):
        return super().__new__(cls, (h_out, Q_e_sec, T_sec_out))

    h_out = property(lambda s: s[0])
    Q_e_sec = property(lambda s: s[1])
    T_sec_out = property(lambda s: s[2])


def evaporator_static(fluid: FluidModel, m_e, P_e, h_in, T_sec_in, m_e_sec,
                      params: CycleParams) -> EvaporatorResult:
    """Two-zone evaporator against the chamber secondary stream.

    The secondary inlet temperature acts as the isothermal source; its outlet
    temperature follows from the secondary energy balance.  ``Q_e_sec`` is
    the heat gained by the secondary fluid (negative when cooled).
    """
    h_out = two_zone_evaporation(fluid, m_e, P_e, h_in, T_sec_in, params.UA_e)
    Q = -np.asarray(m_e) * (h_out - h_in)
    cp = params.secondary.cp
    with np.errstate(divide="ignore", invalid="ignore"):
        T_out = np.where(np.asarray(m_e_sec) > 0, T_sec_in + Q / (np.asarray(m_e_sec) * cp), T_sec_in)
    conv = (lambda x: float(x)) if np.ndim(Q) == 0 else np.asarray
    return EvaporatorResult(conv(h_out), conv(Q) + 0.0, conv(T_out))


class JunctionResult(tuple):
    """``(h_comp_in, T_SH)``"""

    __slots__ = ()

    def __new__(cls, h_comp_in, T_SH):
        return super().__new__(cls, (h_comp_in, T_SH))

    h_comp_in = property(lambda s: s[0])
    T_SH = property(lambda s: s[1])


def junction(fluid: FluidModel, m_e, h_e_out, m_TES, h_TES_out, P_e) -> JunctionResult:
    """Adiabatic mixing of both branches; superheat of the mixture."""
    m_e = np.asarray(m_e, dtype=float)
    m_TES = np.asarray(m_TES, dtype=float)
    m = m_e + m_TES
    if np.any(m <= 0):
        raise ValueError("junction needs a positive total flow")
    h = (m_e * h_e_out + m_TES * h_TES_out) / m
    T_SH = np.asarray(fluid.temperature_ph(P_e, h)) - fluid.sat_temperature(P_e)
    if h.ndim == 0:
        return JunctionResult(float(h), float(T_SH))
    return JunctionResult(h, T_SH)


# -- inputs / outputs ----------------------------------------------------------

def _in_range(x, lo, hi, zero_ok=True):
    return (zero_ok and x == 0) or (lo <= x <= hi)


@dataclass(frozen=True)
class CycleInputs:
    """Manipulated inputs and secondary-side conditions of the cycle."""

    N: float
    A_v: float
    A_v_TES: float
    m_TES_sec: float = 0.0
    m_e_sec: float = 0.2
    T_sec_in: float = 253.15

    def check_ranges(self, strict: bool = True) -> list[str]:
        """Range violations (zero is an allowed 'off' value)."""
        bad = []
        if not _in_range(self.N, *N_RANGE):
            bad.append(f"N={self.N}")
        for name in ("A_v", "A_v_TES"):
            if not _in_range(getattr(self, name), *A_RANGE):
                bad.append(f"{name}={getattr(self, name)}")
        if not _in_range(self.m_TES_sec, *M_SEC_RANGE):
            bad.append(f"m_TES_sec={self.m_TES_sec}")
        if strict and bad:
            raise ValueError("inputs outside admissible ranges: " + ", ".join(bad))
        return bad


@dataclass(frozen=True)
class VirtualInputs:
    """Virtual-flow inputs: refrigerant flows are imposed directly."""

    N: float
    m_e: float
    m_TES: float
    m_TES_sec: float = 0.0
    m_e_sec: float = 0.2
    T_sec_in: float = 253.15


@dataclass(frozen=True)
class CycleOperatingPoint:
    P_e: float
    P_c: float
    m_e: float
    m_TES: float
    m_total: float
    h_c_out: float
    h_e_out: float
    h_TES_out: float
    h_comp_in: float
    h_comp_out: float
    T_SH: float
    Q_e_sec: float
    Q_TES: float
    Q_TES_sec: float
    W_comp: float
    N: float
    A_v: float
    A_v_TES: float
    m_TES_sec: float
    T_sec_out: float
    T_TES_sec_out: float
    converged: bool
    residual: float
    iterations: int = 0
    wet: bool = False
    compressor_on: bool = True
    T_e: float = float("nan")

    @property
    def h_c_in(self) -> float:
        return self.h_comp_out

    @property
    def Q_condenser(self) -> float:
        """Condenser duty implied by the static balance [W]."""
        return self.m_total * (self.h_comp_out - self.h_c_out)


# -- solver ----------------------------------------------------------------------

@dataclass(frozen=True)
class SolverSettings:
    tol: float = 1e-7            # |psi| [kg/s]
    max_iter: int = 100
    damping: float = 0.5         # backtracking factor on the Newton step
    dP_fd: float = 5.0           # finite-difference step [Pa]


def branch_states(fluid, P_e, m_e, m_TES, P_c, h_c_out, T_int, T_sec_in, params, geom):
    """Exchanger outlets and mixed intake for given flows at ``P_e`` (vectorised)."""
    h_e = two_zone_evaporation(fluid, m_e, P_e, h_c_out, T_sec_in, params.UA_e)
    h_t = two_zone_evaporation(fluid, m_TES, P_e, h_c_out, T_int, geom.UA_ref)
    m = np.asarray(m_e, dtype=float) + m_TES
    with np.errstate(divide="ignore", invalid="ignore"):
        h_mix = np.where(m > 0, (m_e * h_e + m_TES * h_t) / np.where(m > 0, m, 1.0), h_c_out)
    return h_e, h_t, h_mix


def _valve_flows(fluid, P_e, A_v, A_t, P_c, h_c_out, params):
    rho = fluid.density_ph(P_c, h_c_out)
    return (valve_mass_flow(A_v, rho, P_c, P_e, params.c_v),
            valve_mass_flow(A_t, rho, P_c, P_e, params.c_v))


def flow_residual(fluid, P_e, N, P_c, h_c_out, T_int, T_sec_in, params, geom, *,
                  A_v=None, A_v_TES=None, m_e=None, m_TES=None):
    """psi(P_e) = compressor flow - valve flows (vectorised in P_e and the inputs).

    Increasing in ``P_e``.  Pass openings (valve mode) or flows (virtual mode).
    """
    if m_e is None:
        m_e, m_TES = _valve_flows(fluid, P_e, A_v, A_v_TES, P_c, h_c_out, params)
    _, _, h_mix = branch_states(fluid, P_e, m_e, m_TES, P_c, h_c_out, T_int, T_sec_in, params, geom)
    m_comp, _ = _compressor(fluid, N, P_e, P_c, h_mix, params)
    return m_comp - (np.asarray(m_e) + m_TES)


def _off_point(fluid, P_c, h_c_out, T_int, inputs, geom, A_v, A_t):
    sec = secondary_side(inputs.T_sec_in, inputs.m_TES_sec, T_int, geom)
    T_e = min(inputs.T_sec_in, T_int)
    P_e = min(fluid.sat_pressure(T_e), 0.99 * P_c)
    return CycleOperatingPoint(
        P_e=P_e, P_c=P_c, m_e=0.0, m_TES=0.0, m_total=0.0, h_c_out=h_c_out, h_e_out=h_c_out,
        h_TES_out=h_c_out, h_comp_in=h_c_out, h_comp_out=h_c_out, T_SH=float("nan"), Q_e_sec=0.0,
        Q_TES=0.0, Q_TES_sec=sec.Q_TES_sec, W_comp=0.0, N=0.0, A_v=A_v, A_v_TES=A_t,
        m_TES_sec=inputs.m_TES_sec, T_sec_out=inputs.T_sec_in, T_TES_sec_out=sec.T_sec_out,
        converged=True, residual=0.0, compressor_on=False, T_e=T_e)


def solve_statics(fluid: FluidModel, inputs, T_int: float, P_c: float, h_c_out: float,
                  params: CycleParams, geom: TesGeometry, *, P_e_guess: float | None = None,
                  settings: SolverSettings = SolverSettings()) -> CycleOperatingPoint:
    """Fast-scale operating point for the current condenser and tank states.

    ``inputs`` is a :class:`CycleInputs` (valve mode) or :class:`VirtualInputs`
    (virtual-flow mode).  The evaporating pressure is found by a safeguarded,
    damped Newton iteration on the flow residual psi, falling back to
    bisection whenever a step leaves the current bracket.
    """
    virtual = isinstance(inputs, VirtualInputs)
    if virtual:
        kw = dict(m_e=float(inputs.m_e), m_TES=float(inputs.m_TES))
        flows_zero = kw["m_e"] <= 0 and kw["m_TES"] <= 0
    else:
        kw = dict(A_v=float(inputs.A_v), A_v_TES=float(inputs.A_v_TES))
        flows_zero = kw["A_v"] <= 0 and kw["A_v_TES"] <= 0
    if inputs.N <= 0 or flows_zero:
        if not flows_zero:
            raise FeasibilityError("refrigerant flow requested with the compressor stopped")
        return _off_point(fluid, P_c, h_c_out, T_int, inputs, geom,
                          0.0 if virtual else inputs.A_v, 0.0 if virtual else inputs.A_v_TES)

    def psi(P):
        return float(flow_residual(fluid, P, inputs.N, P_c, h_c_out, T_int, inputs.T_sec_in,
                                   params, geom, **kw))

    lo, hi = fluid.P_min, min(P_c * (1.0 - 1e-6), fluid.P_max)
    if lo >= hi:
        raise FeasibilityError("condensing pressure below the property range")
    f_lo, f_hi = psi(lo), psi(hi)
    if f_lo > 0:
        raise FeasibilityError("compressor overdraws the valves even at the lowest pressure", f_lo)
    if f_hi < 0:
        raise FeasibilityError("valves overfeed the compressor up to the condensing pressure", f_hi)

    P = P_e_guess if P_e_guess is not None and lo < P_e_guess < hi else 0.5 * (lo + hi)
    f = psi(P)
    it = 0
    while abs(f) >= settings.tol:
        it += 1
        if it > settings.max_iter:
            raise StaticsError(f"no convergence after {settings.max_iter} iterations", f)
        if f > 0:
            hi, f_hi = P, f
        else:
            lo, f_lo = P, f
        d = (psi(P + settings.dP_fd) - f) / settings.dP_fd
        step = -f / d if d > 0 else None
        accepted = False
        if step is not None:
            lam = 1.0
            for _ in range(4):
                cand = P + lam * step
                if lo < cand < hi:
                    f_c = psi(cand)
                    if abs(f_c) < abs(f):
                        P, f, accepted = cand, f_c, True
                        break
                lam *= settings.damping
        if not accepted:
            P = 0.5 * (lo + hi)
            f = psi(P)
        if hi - lo < 1e-9 * hi and abs(f) >= settings.tol:
            raise StaticsError("bracket collapsed before reaching the tolerance", f)

    return _assemble(fluid, inputs, P, f, it, T_int, P_c, h_c_out, params, geom, virtual)


def _assemble(fluid, inputs, P_e, resid, it, T_int, P_c, h_c_out, params, geom, virtual):
    if virtual:
        m_e, m_t = float(inputs.m_e), float(inputs.m_TES)
        rho = fluid.density_ph(P_c, h_c_out)
        A_v = valve_opening(m_e, rho, P_c, P_e, params.c_v)
        A_t = valve_opening(m_t, rho, P_c, P_e, params.c_v)
    else:
        m_e, m_t = (float(x) for x in _valve_flows(fluid, P_e, inputs.A_v, inputs.A_v_TES, P_c,
                                                  h_c_out, params))
        A_v, A_t = inputs.A_v, inputs.A_v_TES
    h_e, h_t, h_mix = (float(x) for x in branch_states(fluid, P_e, m_e, m_t, P_c, h_c_out, T_int,
                                                       inputs.T_sec_in, params, geom))
    m = m_e + m_t
    _, h_out = _compressor(fluid, inputs.N, P_e, P_c, h_mix, params)
    h_out = float(h_out)
    T_e = fluid.sat_temperature(P_e)
    T_SH = fluid.temperature_ph(P_e, h_mix) - T_e
    Q_e = -m_e * (h_e - h_c_out)
    cp = params.secondary.cp
    T_sec_out = inputs.T_sec_in + Q_e / (inputs.m_e_sec * cp) if inputs.m_e_sec > 0 else inputs.T_sec_in
    sec = secondary_side(inputs.T_sec_in, inputs.m_TES_sec, T_int, geom)
    return CycleOperatingPoint(
        P_e=P_e, P_c=P_c, m_e=m_e, m_TES=m_t, m_total=m, h_c_out=h_c_out, h_e_out=h_e,
        h_TES_out=h_t, h_comp_in=h_mix, h_comp_out=h_out, T_SH=T_SH, Q_e_sec=Q_e + 0.0,
        Q_TES=-m_t * (h_t - h_c_out) + 0.0, Q_TES_sec=sec.Q_TES_sec, W_comp=m * (h_out - h_mix),
        N=float(inputs.N), A_v=float(A_v), A_v_TES=float(A_t), m_TES_sec=inputs.m_TES_sec,
        T_sec_out=T_sec_out, T_TES_sec_out=sec.T_sec_out, converged=True, residual=resid,
        iterations=it, wet=h_mix <= fluid.h_vap(P_e), T_e=T_e)


__all__ = [
    "A_RANGE", "M_REF_RANGE", "M_SEC_RANGE", "N_RANGE", "CompressorResult", "CycleInputs",
    "CycleOperatingPoint", "CycleParams", "EvaporatorResult", "FeasibilityError", "JunctionResult",
    "SolverSettings", "StaticsError", "ValveResult", "VirtualInputs", "WetCompressionError",
    "branch_states", "compressor", "evaporator_static", "flow_residual", "junction",
    "nominal_condensing_pressure", "solve_statics", "valve_flow", "valve_mass_flow", "valve_opening",
    "volumetric_efficiency",
]
