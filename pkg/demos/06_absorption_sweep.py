"""Molecular-absorption sensitivity: efficiency falls as the air gets lossier.

Runs the greedy joint design across an absorption grid with a fixed user
layout, so the trend is attributable to the channel alone.  The CLI `sweep`
subcommand does the same with per-cell seeds and CSV output.
"""

from uav_see import orchestrator, scenario

base = scenario.load_scenario("scenarios/desk.json")
layout = scenario.place_users(base)

print(f"{'a_f [1/m]':>10} {'MSEE [Mbit/J]':>14} {'min rate [Mbps]':>16}")
prev = None
monotone = True
for af in (0.005, 0.010, 0.015, 0.020, 0.025):
    cfg = scenario.replace(base, absorption=af)
    rep = orchestrator.run_msee_mi(cfg, layout)
    msee = rep.metrics.msee / 1e6
    print(f"{af:10.3f} {msee:14.2f} {rep.metrics.masr / 1e6:16.1f}")
    if prev is not None and msee > prev + 1e-9:
        monotone = False
    prev = msee
print(f"\nMSEE non-increasing in the absorption coefficient: {monotone}")
