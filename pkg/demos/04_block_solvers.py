"""One pass through the four block solvers on the desk scenario.

Each block keeps the others fixed and may only improve the exact objective
(normalized minimum secrecy energy efficiency), so the printed ladder is
non-decreasing.  Also shows the ratio-iteration trace of the trajectory
block and dumps one conic subproblem in the sparse text format for external
cross-checking.
"""

from uav_see import orchestrator, physics, scenario, subproblems

cfg = scenario.load_scenario("scenarios/desk.json")
layout = scenario.place_users(cfg)
plan, alloc = orchestrator.initialize_feasible(cfg, layout)


def msee_mbit(plan, alloc):
    gains = physics.link_gains(plan, layout, cfg)
    return physics.see_metrics(gains, alloc, plan, cfg).msee_unclipped / 1e6


print(f"{'stage':<26} {'min SEE [Mbit/J]':>17}")
print(f"{'initial feasible point':<26} {msee_mbit(plan, alloc):>17.3f}")

res1 = subproblems.solve_p1(cfg, layout, plan, alloc)
alloc = res1.alloc
print(f"{'scheduling + uplink power':<26} {msee_mbit(plan, alloc):>17.3f}"
      f"   (binary residual {subproblems.binary_residual(alloc.zeta):.1e})")

res2 = subproblems.solve_p2(cfg, layout, plan, alloc)
alloc = res2.alloc
print(f"{'relay power':<26} {msee_mbit(plan, alloc):>17.3f}")

res3 = subproblems.solve_p31(cfg, layout, plan, alloc)
alloc = res3.alloc
print(f"{'jamming power':<26} {msee_mbit(plan, alloc):>17.3f}")

res4 = subproblems.solve_p4_dinkelbach(cfg, layout, plan, alloc)
plan = res4.plan
print(f"{'trajectory + velocity':<26} {msee_mbit(plan, alloc):>17.3f}")

print("\nratio-iteration trace of the trajectory block:")
for row in res4.trace:
    print(f"  m={row['iter']:3d} lam={row['lam']:.6f} |F|={abs(row['F']):.2e}")

audit = subproblems.audit_constraints(cfg, layout, plan, alloc)
print(f"\nfinal audit: {audit}")

# dump the jamming subproblem in the plain-text standard form
consts = subproblems.P3Constants.from_state(
    cfg, physics.link_gains(plan, layout, cfg), alloc, plan)
prog, _ = subproblems.build_p3(cfg, consts, alloc.p_jam)
text = prog.dump_standard_form()
with open("demos/out_jamming_block.coneprog", "w", encoding="utf-8") as fh:
    fh.write(text)
print(f"dumped the jamming block ({prog.num_vars} vars) to "
      "demos/out_jamming_block.coneprog")
