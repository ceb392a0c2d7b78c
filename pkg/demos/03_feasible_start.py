"""Feasible initialization: circle when the mission time allows, pear-shaped
cyclic path when it does not.

With the default geometry the circle through the start point needs
2*pi*25/20 ~ 7.85 s, so a 7 s mission falls back to the pear path (width
picked by a grid search that keeps clear of the users while staying
feasible); down at 2*25/20 = 2.5 s not even a cyclic path fits.
"""

import numpy as np

from uav_see import orchestrator, scenario, subproblems

base = scenario.load_scenario("scenarios/table1.json")
layout = scenario.place_users(base)

for mission_time in (10.0, 7.0):
    cfg = scenario.replace(base, mission_time=mission_time)
    plan, alloc = orchestrator.initialize_feasible(cfg, layout)
    radii = np.linalg.norm(plan.q - np.asarray(cfg.bs_pos), axis=1)
    speed = np.linalg.norm(plan.v, axis=1)
    shape = "circle" if radii.std() < 1e-6 else "pear"
    audit = subproblems.audit_constraints(cfg, layout, plan, alloc)
    print(f"T = {mission_time:4.1f} s -> {shape:6s} | radius "
          f"{radii.min():5.1f}..{radii.max():5.1f} m | speed "
          f"{speed.min():5.2f}..{speed.max():5.2f} m/s | audit: "
          f"{'PASS' if audit.passed else audit.failures}")

try:
    cfg = scenario.replace(base, mission_time=2.0)
    orchestrator.initialize_feasible(cfg, layout)
except orchestrator.InfeasibleMissionError as exc:
    print(f"T = 2.0 s -> rejected: {exc}")

try:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5.5, 5.5))
    for mission_time, style in ((10.0, "-"), (7.0, "--")):
        cfg = scenario.replace(base, mission_time=mission_time)
        plan, _ = orchestrator.initialize_feasible(cfg, layout)
        ax.plot(plan.q[:, 0], plan.q[:, 1], style, label=f"T = {mission_time} s")
    ax.plot(*np.asarray(base.bs_pos), "k^", label="base station")
    ax.plot(layout.ue_positions[:, 0], layout.ue_positions[:, 1], "ro",
            label="users")
    ax.set_aspect("equal")
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig("demos/out_initial_paths.png", dpi=120)
    print("saved demos/out_initial_paths.png")
except ImportError:
    pass
