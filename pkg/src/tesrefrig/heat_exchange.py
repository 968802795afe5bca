"""Static heat-exchanger relations against an isothermal source.

Both the evaporator and the refrigerant bundle of the storage tank are
modelled as a two-zone (evaporating + superheating) exchanger whose other
side is held at a single temperature over the fast time scale.
"""
import numpy as np

from .thermo import FluidModel


def two_zone_evaporation(fluid: FluidModel, m_dot, P, h_in, T_src, UA):
    """Outlet enthalpy of refrigerant evaporating against a source at ``T_src``.

    The two-phase zone takes the area it needs at the isothermal driving
    difference ``T_src - T_sat(P)``; the remainder superheats the vapour with
    effectiveness ``1 - exp(-UA_sh / (m_dot * cp_vap))``.  If the area is not
    enough to evaporate all the liquid the outlet is wet.

    Returns
    -------
    h_out : float or ndarray
        Outlet specific enthalpy [J/kg]; equals ``h_in`` where there is no flow
        or no positive driving temperature difference.
    """
    m = np.asarray(m_dot, dtype=float)
    h_in = np.asarray(h_in, dtype=float)
    T_e = np.asarray(fluid.sat_temperature(P))
    h_v = np.asarray(fluid.h_vap(P))
    cp = np.asarray(fluid.cp_vap(P))
    dT = np.asarray(T_src, dtype=float) - T_e
    active = (m > 0) & (dT > 0)
    m_s = np.where(active, m, 1.0)
    dT_s = np.where(active, dT, 1.0)

    ua_2ph = m_s * np.maximum(h_v - h_in, 0.0) / dT_s
    wet = ua_2ph >= UA
    h_wet = h_in + UA * dT_s / m_s
    ua_sh = np.maximum(UA - ua_2ph, 0.0)
    # superheated inlet: single-zone exchange from the inlet temperature
    T_start = np.where(h_in > h_v, T_e + (h_in - h_v) / cp, T_e)
    T_out = T_src - (T_src - T_start) * np.exp(-ua_sh / (m_s * cp))
    h_dry = h_v + cp * (T_out - T_e)
    h_out = np.where(wet, h_wet, h_dry)
    h_out = np.where(active & (h_out > h_in), h_out, h_in)
    return float(h_out) if h_out.ndim == 0 else h_out


def isothermal_single_phase(T_in, m_dot, cp, T_src, UA):
    """Outlet temperature of a liquid stream exchanging with an isothermal source."""
    m = np.asarray(m_dot, dtype=float)
    C = np.where(m > 0, m * cp, 1.0)
    T_out = T_src + (np.asarray(T_in, dtype=float) - T_src) * np.exp(-UA / C)
    T_out = np.where(m > 0, T_out, T_in)
    return float(T_out) if T_out.ndim == 0 else T_out
