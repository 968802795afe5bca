"""Tank-only full charges and discharges: durations and power fade.

    python3 demos/tank_processes.py
"""
from tesrefrig.sim_runner import PlantConfig, tes_process


def main():
    plant = PlantConfig.default()
    print("charge   opening %  duration h  Q at gamma 0.1 / 0.9 [W]")
    for a in (10, 30, 50, 70, 90):
        r = tes_process(plant, "charge", a)
        print(f"         {a:9d}  {r.duration / 3600:10.2f}  {r.power_at(0.1):7.0f} / {r.power_at(0.9):7.0f}")
    print("discharge  flow kg/s  duration h  Q at gamma 0.9 / 0.1 [W]")
    for m in (0.05, 0.15, 0.25, 0.35, 0.45):
        r = tes_process(plant, "discharge", m)
        print(f"         {m:9.2f}  {r.duration / 3600:10.2f}  {r.power_at(0.9):7.0f} / {r.power_at(0.1):7.0f}")


if __name__ == "__main__":
    main()
