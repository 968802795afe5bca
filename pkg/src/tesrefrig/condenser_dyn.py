"""Reduced-order condenser: lumped refrigerant charge and energy.

State: refrigerant mass ``M`` and total energy ``E = M*u + C_w*T_sat(P_c)``
held in a fixed volume ``V``.  The wall (and the air-side fins) is lumped at
the saturation temperature.  ``P_c`` is recovered from ``(M, E)`` by a 1-D
solve over the saturated mixture, and the outlet leaves as saturated liquid.
The heat rejected to the ambient is ``UA_c * (T_sat(P_c) - T_amb)``.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import brentq

from .thermo import FluidModel, PropertyRangeError


@dataclass(frozen=True)
class CondenserParams:
    V: float = 2.0e-3            # internal volume [m^3]
    M_charge: float = 0.532      # refrigerant charge [kg]
    C_w: float = 4.4e3           # wall + fin heat capacity [J/K]
    UA_c: float = 120.0          # overall coefficient to ambient [W/K]
    T_amb: float = 298.15        # ambient temperature [K]

    def __post_init__(self):
        if not (self.V > 0 and self.M_charge > 0 and self.C_w >= 0 and self.UA_c > 0):
            raise ValueError("condenser parameters must be positive")


@dataclass(frozen=True)
class CondenserState:
    P_c: float
    h_c_out: float
    M: float
    E: float


def _sat_props(fluid, P):
    h_l, h_v = fluid.h_liq(P), fluid.h_vap(P)
    v_l = 1.0 / fluid.density_ph(P, h_l)
    v_v = 1.0 / fluid.density_ph(P, h_v)
    return h_l, h_v, v_l, v_v


def specific_energy(fluid: FluidModel, P, v):
    """Internal energy of a saturated mixture with specific volume ``v`` at ``P``.

    Raises :class:`PropertyRangeError` when ``v`` lies outside the dome.
    """
    h_l, h_v, v_l, v_v = _sat_props(fluid, P)
    q = (v - v_l) / (v_v - v_l)
    if np.any(q < 0) or np.any(q > 1):
        raise PropertyRangeError("condenser content left the two-phase region")
    u_l = h_l - P * v_l
    u_v = h_v - P * v_v
    return u_l + q * (u_v - u_l)


def total_energy(fluid: FluidModel, P, M, params: CondenserParams):
    return M * specific_energy(fluid, P, params.V / M) + params.C_w * fluid.sat_temperature(P)


def state_from_pressure(fluid: FluidModel, P_c: float, params: CondenserParams,
                        M: float | None = None) -> CondenserState:
    M = params.M_charge if M is None else M
    return CondenserState(P_c, fluid.h_liq(P_c), M, total_energy(fluid, P_c, M, params))


def pressure_from_energy(fluid: FluidModel, M: float, E: float, params: CondenserParams,
                         P_hint: float | None = None) -> float:
    """Invert ``E(P)`` at fixed mass; ``E`` is increasing in ``P`` on the dome."""
    def g(P):
        return total_energy(fluid, P, M, params) - E

    # the dome bounds for this v limit the admissible bracket
    lo, hi = fluid.P_min * 1.0001, fluid.P_max * 0.9999
    if P_hint is not None:
        a, b = max(lo, 0.8 * P_hint), min(hi, 1.25 * P_hint)
        try:
            if g(a) < 0 < g(b):
                return brentq(g, a, b, xtol=1e-6, rtol=1e-12)
        except PropertyRangeError:
            pass
    try:
        return brentq(g, lo, hi, xtol=1e-6, rtol=1e-12)
    except (ValueError, PropertyRangeError) as exc:
        raise PropertyRangeError(f"condenser state (M={M:.4g} kg, E={E:.6g} J) has no valid pressure") from exc


def rejected_heat(fluid: FluidModel, P_c: float, params: CondenserParams) -> float:
    return params.UA_c * (fluid.sat_temperature(P_c) - params.T_amb)


def step_fast(fluid: FluidModel, state: CondenserState, m_in: float, h_c_in: float, m_out: float,
              dt_fast: float, params: CondenserParams, T_amb: float | None = None) -> CondenserState:
    """Explicit Euler step of the mass and energy balances, then pressure recovery."""
    if not dt_fast > 0:
        raise ValueError("dt_fast must be positive")
    if T_amb is not None and T_amb != params.T_amb:
        params = replace(params, T_amb=T_amb)
    Q_c = rejected_heat(fluid, state.P_c, params)
    M = state.M + (m_in - m_out) * dt_fast
    E = state.E + (m_in * h_c_in - m_out * state.h_c_out - Q_c) * dt_fast
    P = pressure_from_energy(fluid, M, E, params, P_hint=state.P_c)
    return CondenserState(P, fluid.h_liq(P), M, E)


def steady_pressure(fluid: FluidModel, m: float, h_c_in_of_P, params: CondenserParams,
                    bracket=(6.0e5, 31.0e5)) -> float:
    """Condensing pressure where the static duty equals the ambient rejection.

    ``h_c_in_of_P`` maps ``P_c`` to the compressor discharge enthalpy.
    """
    def r(P):
        return m * (h_c_in_of_P(P) - fluid.h_liq(P)) - rejected_heat(fluid, P, params)

    return brentq(r, *bracket, xtol=1e-3)


__all__ = ["CondenserParams", "CondenserState", "pressure_from_energy", "rejected_heat",
           "specific_energy", "state_from_pressure", "step_fast", "steady_pressure", "total_energy"]
