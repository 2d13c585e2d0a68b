"""Crosstalk under three sensor configurations, on a simulated finger wave.

Every configuration sees the same finger motion and the same noise draws.
Only the shield and the way magnetometer readings are combined differ.

    python3 demos/crosstalk_table.py [seconds] [trials]
"""
import sys

from osmoglove import analysis as an
from osmoglove import sensor_sim as ss


def main(seconds=60.0, trials=5):
    geometry = ss.load_geometry()
    scenario = an.Scenario(duration_s=seconds, trials=trials, seed=0)
    reports = an.compare_configurations(scenario, geometry=geometry)
    names = [t.name.replace("_", " ").title() for t in geometry.taxels]
    print(an.format_table(reports, names, title=f"RMS crosstalk (uT), {trials} x {seconds:g} s finger wave"))

    # the shield trades in-plane noise for extra z-axis noise
    for taxel in scenario.monitored:
        k = geometry.index_of(taxel)
        u1, u2, s2 = [r for r in reports if r.taxel_id == k]
        print(f"{taxel}: shielded+2 avg is {1 - s2.average / u1.average:.0%} below unshielded+1, "
              f"z-axis {u2.per_axis[2]:.1f} -> {s2.per_axis[2]:.1f} uT with the shield")


if __name__ == "__main__":
    args = [float(a) for a in sys.argv[1:3]]
    main(args[0] if args else 60.0, int(args[1]) if len(args) > 1 else 5)
