"""Steady cooling-power ranges for a few modes plus the mode-1 frontier.

    python3 demos/envelope_map.py [--resolution N]
"""
import argparse

from tesrefrig.envelope import coupled_power_map, sweep_envelope


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--resolution", type=int, default=11)
    n = ap.parse_args().resolution
    for mode in (1, 2, 4):
        for loc in ("edge", "halfway", "centre"):
            env = sweep_envelope(mode, loc, n)
            cells = "  ".join(f"{k} {lo:6.0f}..{hi:6.0f}" for k, (lo, hi) in env.ranges.items())
            print(f"mode {mode} {loc:8s} {env.n_feasible:5d} pts  {cells}")
    pm = coupled_power_map(1, "halfway", n)
    print("\nmode 1 frontier (Q_e_sec -> max Q_TES):")
    for x, y in zip(pm.frontier_Q_e, pm.frontier_Q_TES):
        print(f"  {x:7.1f} W -> {y:7.1f} W")


if __name__ == "__main__":
    main()
