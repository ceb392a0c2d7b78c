"""Rotary-wing propulsion power: the bowl curve and its convex surrogate.

Hover costs 168.5 W; cruising near 10 m/s is ~40 W cheaper, which is why
optimized trajectories keep moving.  The velocity-slack surrogate used inside
the trajectory block is tight at hover and tracks the exact curve within a
small blade-profile gap.
"""

import numpy as np

from uav_see import physics, scenario

cfg = scenario.load_scenario("scenarios/table1.json")
rotor = cfg.rotor

speeds = np.linspace(0.0, 20.0, 21)
v = np.stack([speeds, np.zeros_like(speeds)], axis=1)
exact = physics.flight_power(v, rotor)
mu = physics.induced_slack(v, rotor)
surrogate = physics.flight_power_upper_bound(v, mu, rotor)

print(f"hover power: {exact[0]:.3f} W (blade profile {rotor.hover_profile_power} "
      f"+ induced {rotor.hover_induced_power})")
best = int(np.argmin(exact))
print(f"cheapest speed: {speeds[best]:.0f} m/s at {exact[best]:.1f} W")
print()
print(f"{'speed':>6} {'exact [W]':>10} {'slack mu':>9} {'surrogate [W]':>14} "
      f"{'gap [W]':>8}")
for i in range(0, len(speeds), 2):
    print(f"{speeds[i]:6.0f} {exact[i]:10.2f} {mu[i]:9.4f} "
          f"{surrogate[i]:14.2f} {surrogate[i] - exact[i]:8.3f}")

try:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(speeds, exact, label="exact propulsion power")
    ax.plot(speeds, surrogate, "--", label="velocity-slack surrogate")
    ax.set_xlabel("speed [m/s]")
    ax.set_ylabel("power [W]")
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig("demos/out_propulsion_power.png", dpi=120)
    print("\nsaved demos/out_propulsion_power.png")
except ImportError:
    pass
