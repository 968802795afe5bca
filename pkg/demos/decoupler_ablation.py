"""Cross-coupling into Q_TES after a Q_e_sec reference step, with and without the decoupler.

    python3 demos/decoupler_ablation.py
"""
from dataclasses import replace

import numpy as np

from tesrefrig.sim_runner import bundled_scenario_path, cross_coupling, load_scenario, run_scenario


def main():
    sc = load_scenario(bundled_scenario_path("decoupler_step"))
    t_step = sc.breakpoints[1].t
    runs = {"decoupled": run_scenario(sc), "no decoupler": run_scenario(replace(sc, use_decoupler=False))}
    for name, res in runs.items():
        t, q = res.column("t"), res.column("Q_TES")
        win = (t >= t_step - 10) & (t <= t_step + 120)
        print(f"{name:>13}: peak |dQ_TES| {cross_coupling(res):5.2f} W")
        print("   Q_TES:", np.round(q[win][::3], 1))
    ratio = cross_coupling(runs["no decoupler"]) / cross_coupling(runs["decoupled"])
    print(f"ratio {ratio:.2f}")


if __name__ == "__main__":
    main()
