"""Generate the saturation table shipped with tesrefrig.

Run once, offline, with CoolProp installed::

    python tools/generate_fluid_table.py R404A src/tesrefrig/data/r404a.csv

The simulator reads the resulting text file and never calls CoolProp.
"""
import sys

import numpy as np
import CoolProp.CoolProp as CP

FORMAT_VERSION = 1
P_MIN = 0.30e5
P_MAX = 32.0e5
N_KNOTS = 320
SUPERHEAT_SPAN = 30.0   # K, secant span for the effective vapour c_p
SUBCOOL_SPAN = 10.0     # K, secant span for the effective liquid c_p


def row(fluid, P):
    T = CP.PropsSI("T", "P", P, "Q", 0, fluid)
    Tv = CP.PropsSI("T", "P", P, "Q", 1, fluid)
    h_l = CP.PropsSI("H", "P", P, "Q", 0, fluid)
    h_v = CP.PropsSI("H", "P", P, "Q", 1, fluid)
    s_l = CP.PropsSI("S", "P", P, "Q", 0, fluid)
    s_v = CP.PropsSI("S", "P", P, "Q", 1, fluid)
    d_l = CP.PropsSI("D", "P", P, "Q", 0, fluid)
    d_v = CP.PropsSI("D", "P", P, "Q", 1, fluid)
    # small temperature glide (below 1 K); the model uses the bubble/dew mean
    T_sat = 0.5 * (T + Tv)
    cp_v = (CP.PropsSI("H", "P", P, "T", T_sat + SUPERHEAT_SPAN, fluid) - h_v) / SUPERHEAT_SPAN
    T_sub = max(T_sat - SUBCOOL_SPAN, CP.PropsSI("Tmin", fluid) + 0.5)
    cp_l = (h_l - CP.PropsSI("H", "P", P, "T", T_sub, fluid)) / (T_sat - T_sub)
    return (P, T_sat, h_l, h_v, s_l, s_v, d_l, d_v, cp_l, cp_v)


def main(fluid, path):
    pressures = np.geomspace(P_MIN, P_MAX, N_KNOTS)
    rows = [row(fluid, P) for P in pressures]
    with open(path, "w") as fh:
        fh.write(f"# tesrefrig-fluid-table v{FORMAT_VERSION}\n")
        fh.write(f"# fluid: {fluid}\n")
        fh.write("# source: CoolProp %s (IIR enthalpy reference)\n" % CP.get_global_param_string("version"))
        fh.write("# units: P[Pa] T_sat[K] h[J/kg] s[J/(kg K)] rho[kg/m3] cp[J/(kg K)]\n")
        fh.write(f"# cp_liq: secant over {SUBCOOL_SPAN:g} K subcooling; cp_vap: secant over {SUPERHEAT_SPAN:g} K superheat\n")
        fh.write("P,T_sat,h_liq,h_vap,s_liq,s_vap,rho_liq,rho_vap,cp_liq,cp_vap\n")
        for r in rows:
            fh.write(",".join(f"{v:.10g}" for v in r) + "\n")


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
