"""Acceptance suite: one test per shipped criterion, each printing a
[PASS]/[FAIL] line (run with `pytest tests/test_acceptance.py -s` to see them
live).  Soft criteria (8, 9) log a warning instead of failing: they encode
expected trends of stochastic layouts, not hard guarantees.
"""

import itertools
import math
import time
import warnings

import numpy as np
import pytest

from uav_see import bounds, cli, orchestrator, physics, scenario, subproblems
from uav_see.conic import ConeProgram
from uav_see.physics import ResourceAllocation

from conftest import DESK, stationary_plan

RNG = np.random.default_rng(20240817)


def report(num, ok, text):
    print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {num}: {text}")
    assert ok, f"criterion {num}: {text}"


def soft_report(num, ok, text):
    print(f"\n[{'PASS' if ok else 'SOFT-WARN'}] criterion {num}: {text}")
    if not ok:
        warnings.warn(f"criterion {num} trend violated: {text}")


def test_criterion_01_hover_power(table1_config):
    got = float(physics.flight_power([0.0, 0.0], table1_config.rotor))
    ok = abs(got - 168.486) / 168.486 <= 1e-6
    report(1, ok, f"hover power {got:.6f} W == 168.486 W (rel 1e-6)")


def test_criterion_02_bound_suites():
    t0 = time.monotonic()
    n = 10_000

    def sample(lo, hi, size=n):
        return np.exp(RNG.uniform(np.log(lo), np.log(hi), size))

    # concave pair: tightness and over-estimate direction
    x, y, x0, y0, c = (sample(1e-2, 10) for _ in range(5))
    assert np.max(np.abs(bounds.f1_ub(x0, y0, x0, y0, c)
                         - bounds.z2(x0, y0, c))) <= 1e-9
    assert np.min(bounds.f1_ub(x, y, x0, y0, c) - bounds.z2(x, y, c)) >= -1e-9
    # log-fractional: tangent over concave regime / under convex regime
    a, b, cc = (sample(0.1, 5) for _ in range(3))
    d_conc = b * cc / a * (1 + sample(1e-3, 2))
    xs, xs0 = sample(1e-3, 20), sample(1e-3, 20)
    assert np.max(np.abs(bounds.f2_lb(xs0, xs0, a, b, cc, d_conc)
                         - bounds.f2(xs0, a, b, cc, d_conc))) <= 1e-9
    assert np.min(bounds.f2_lb(xs, xs0, a, b, cc, d_conc)
                  - bounds.f2(xs, a, b, cc, d_conc)) >= -1e-9
    d_cvx = b * cc / a * sample(0.05, 0.9)
    assert np.min(bounds.f2(xs, a, b, cc, d_cvx)
                  - bounds.f2_lb(xs, xs0, a, b, cc, d_cvx,
                                 require_concave=False)) >= -1e-9
    # jamming-block linearization
    pb, pb0 = RNG.uniform(0, 10, n), RNG.uniform(0, 10, n)
    hh, ii = sample(1e-2, 10), sample(1e-2, 10)
    assert np.max(np.abs(bounds.f3(pb0, pb0, hh, ii)
                         - bounds.f3_exact(pb0, hh, ii))) <= 1e-9
    assert np.min(bounds.f3_exact(pb, hh, ii)
                  - bounds.f3(pb, pb0, hh, ii)) >= -1e-9
    # convex family tangents
    xx, yy, xx0, yy0 = (sample(0.05, 10) for _ in range(4))
    aa, bb, ccc, dd, rr = (sample(0.05, 5) for _ in range(5))
    pp = sample(1e-3, 0.5)
    assert np.max(np.abs(bounds.f41_lb(xx0, yy0, xx0, yy0, aa, bb)
                         - bounds.f41(xx0, yy0, aa, bb))) <= 1e-9
    assert np.min(bounds.f41(xx, yy, aa, bb)
                  - bounds.f41_lb(xx, yy, xx0, yy0, aa, bb)) >= -1e-9
    assert np.min(bounds.f42(xx, yy, ccc, dd)
                  - bounds.f42_lb(xx, yy, xx0, yy0, ccc, dd)) >= -1e-9
    assert np.min(bounds.f43(xx, pp) - bounds.f43_lb(xx, xx0, pp)) >= -1e-9
    assert np.min(bounds.f44(xx, rr) - bounds.f44_lb(xx, xx0, rr)) >= -1e-9
    # curvature signs by finite differences
    for _ in range(100):
        px, py = np.exp(RNG.uniform(np.log(0.1), np.log(5), 2))
        pa, pb2, pc = np.exp(RNG.uniform(np.log(0.1), np.log(5), 3))
        h1 = bounds.fd_hessian(lambda u, v: bounds.z1(u, v, pa, pb2), (px, py))
        h2 = bounds.fd_hessian(lambda u, v: bounds.z2(u, v, pc), (px, py))
        assert np.linalg.eigvalsh(h1).max() <= 1e-6 * max(1, np.abs(h1).max())
        assert np.linalg.eigvalsh(h2).max() <= 1e-6 * max(1, np.abs(h2).max())
        h41 = bounds.fd_hessian(lambda u, v: bounds.f41(u, v, pa, pb2), (px, py))
        h42 = bounds.fd_hessian(lambda u, v: bounds.f42(u, v, pa, pb2), (px, py))
        assert np.linalg.eigvalsh(h41).min() >= -1e-6 * max(1, np.abs(h41).max())
        assert np.linalg.eigvalsh(h42).min() >= -1e-6 * max(1, np.abs(h42).max())
    elapsed = time.monotonic() - t0
    report(2, elapsed < 30.0,
           f"bound suites: 1e4-sample directions + tightness + curvature "
           f"in {elapsed:.1f} s (< 30 s)")


def test_criterion_03_conic_atom_oracle():
    t0 = time.monotonic()

    def minimize(builder):
        prog = ConeProgram()
        t = builder(prog)
        prog.set_objective(prog.var(t) * -1.0)
        rep = prog.solve()
        assert rep.status == "optimal", rep.raw_status
        return rep.value(t)

    for _ in range(200):
        xv, yv = np.exp(RNG.uniform(-2, 2, 2))

        def b_rel(prog):
            t = prog.add_var("t")
            prog.add_relative_entropy(
                prog.var(t), prog.var(prog.add_var("x", xv, xv)),
                prog.var(prog.add_var("y", yv, yv)))
            return t
        want = xv * math.log(xv / yv)
        assert minimize(b_rel) == pytest.approx(want, rel=1e-6, abs=1e-7)

    for _ in range(200):
        terms = RNG.uniform(-3, 3, RNG.integers(1, 5))

        def b_lse(prog):
            t = prog.add_var("t")
            prog.add_lse(prog.var(t), list(terms))
            return t
        want = math.log(np.sum(np.exp(terms)))
        assert minimize(b_lse) == pytest.approx(want, rel=1e-6, abs=1e-7)

    for _ in range(200):
        off = RNG.uniform(0, 30, 2)
        h = RNG.uniform(5, 20)
        af = RNG.uniform(0, 0.03)
        sc = float(np.exp(RNG.uniform(-2, 2)))

        def b_path(prog):
            y = prog.add_var("y", lb=0.0)
            qx = prog.add_var("qx", off[0], off[0])
            qy = prog.add_var("qy", off[1], off[1])
            prog.add_exp_path_atom(prog.var(y), (prog.var(qx), prog.var(qy)),
                                   (0.0, 0.0), h, af, sc)
            return y
        d = math.sqrt(off @ off + h * h)
        assert minimize(b_path) == pytest.approx(sc * d * d * math.exp(af * d),
                                                 rel=1e-6)

    for _ in range(200):
        t1v = float(np.exp(RNG.uniform(-2, 6)))
        coeff = float(np.exp(RNG.uniform(-5, 1)))

        def b_pow(prog):
            t2 = prog.add_var("t2")
            prog.add_pow32(t2 * 0.0 + prog.var(t2),
                           prog.var(prog.add_var("t1", t1v, t1v)), coeff,
                           scale=t1v)
            return t2
        assert minimize(b_pow) == pytest.approx(coeff * t1v ** 1.5, rel=1e-6)
    elapsed = time.monotonic() - t0
    report(3, elapsed < 60.0,
           f"conic atoms: 200 random parameterizations each vs closed form "
           f"(rel 1e-6) in {elapsed:.1f} s (< 60 s)")


def test_criterion_04_brute_force_scheduling(table1_config):
    t0 = time.monotonic()
    worst = 0.0
    for n_slots in (2, 3):
        cfg = scenario.replace(table1_config, num_users=2,
                               mission_time=0.5 * n_slots, slot_duration=0.5,
                               rng_seed=17)
        lay = scenario.place_users(cfg)
        plan = stationary_plan(cfg)
        gains = physics.link_gains(plan, lay, cfg)
        p_fix = np.full((2, n_slots), cfg.ue_avg_power)
        start = np.zeros((2, n_slots))
        start[0, ::2] = 1.0
        start[1, 1::2] = 1.0
        alloc0 = ResourceAllocation.from_tilde(
            start, start * p_fix, np.full(n_slots, cfg.relay_avg_power),
            np.full(n_slots, cfg.jam_avg_power))
        consts = subproblems.P1Constants.from_state(cfg, gains, alloc0, plan)
        best = -np.inf
        for assign in itertools.product(range(2), repeat=n_slots):
            zeta = np.zeros((2, n_slots))
            for n, k in enumerate(assign):
                zeta[k, n] = 1.0
            cand = ResourceAllocation.from_tilde(zeta, zeta * p_fix,
                                                 alloc0.p_relay, alloc0.p_jam)
            best = max(best, subproblems.p1_exact_psi(consts, cand))
        res = subproblems.solve_p1(cfg, lay, plan, alloc0, fix_powers=p_fix)
        rounded = subproblems.finalize_binary(res.alloc)
        got = subproblems.p1_exact_psi(consts, rounded)
        gap = (best - got) / abs(best)
        worst = max(worst, gap)
        assert gap <= 0.01, f"N={n_slots}: rounded {got} vs brute force {best}"
    elapsed = time.monotonic() - t0
    report(4, elapsed < 120.0,
           f"scheduling matches exhaustive enumeration within "
           f"{worst:.2%} (<= 1%) in {elapsed:.1f} s (< 2 min)")


def test_criterion_05_dinkelbach(desk_config, desk_layout, desk_state):
    t0 = time.monotonic()
    plan, alloc = desk_state
    res = subproblems.solve_p4_dinkelbach(desk_config, desk_layout, plan, alloc)
    lams = [row["lam"] for row in res.trace]
    mono = all(b >= a - 1e-8 for a, b in zip(lams, lams[1:]))
    stop = abs(res.trace[-1]["F"]) <= 1e-4
    iters = len(res.trace) - 1
    elapsed = time.monotonic() - t0
    report(5, mono and stop and iters <= 30 and elapsed < 120.0,
           f"ratio trace non-decreasing over {iters} iterations (<= 30), "
           f"|F|={abs(res.trace[-1]['F']):.2e} <= 1e-4, {elapsed:.1f} s (< 2 min)")


def test_criterion_06_bcd_monotone_convergence(seq_report, mi_report):
    ok = True
    msg = []
    for rep in (seq_report, mi_report):
        msee = [row["msee"] for row in rep.iterations]
        mono = all(b >= a - 1e-6 for a, b in zip(msee, msee[1:]))
        ok &= mono and rep.converged and \
            rep.outer_iterations <= 100 and rep.runtime_s < 600.0
        msg.append(f"{rep.scheme}: {rep.outer_iterations} iters in "
                   f"{rep.runtime_s:.1f} s, monotone={mono}, "
                   f"converged={rep.converged}")
    report(6, ok, "; ".join(msg))


def test_criterion_07_benchmark_ordering(desk_config, seq_report, mi_report,
                                         ftrj_report, fpow_report,
                                         initial_report):
    norm = desk_config.flight_power_limit / desk_config.bandwidth * 1e6
    mi = mi_report.iterations[-1]["msee"] * norm
    seq = seq_report.iterations[-1]["msee"] * norm
    ftrj = ftrj_report.iterations[-1]["msee"] * norm
    fpow = fpow_report.iterations[-1]["msee"] * norm
    init = initial_report.iterations[-1]["msee"] * norm
    ok = (mi >= seq - 1e-3 and seq >= max(fpow, ftrj) - 1e-3
          and max(fpow, ftrj) >= init - 1e-3 and min(fpow, ftrj) >= init - 1e-3
          and min(mi, seq) >= 1.10 * init)
    report(7, ok,
           f"normalized MSEE ordering mi={mi:.4f} ~ seq={seq:.4f} >= "
           f"fpow={fpow:.4f}, ftrj={ftrj:.4f} >= init={init:.4f}; joint gain "
           f"{min(mi, seq) / init - 1:.1%} >= 10%")


def test_criterion_08_masr_tradeoff(masr_report, seq_report):
    masr_ok = masr_report.metrics.masr >= seq_report.metrics.masr
    msee_ok = masr_report.metrics.msee < seq_report.metrics.msee
    soft_report(8, masr_ok and msee_ok,
                f"masr_seq MASR {masr_report.metrics.masr / 1e6:.1f} Mbps >= "
                f"msee_seq {seq_report.metrics.masr / 1e6:.1f} Mbps while MSEE "
                f"{masr_report.metrics.msee / 1e6:.2f} < "
                f"{seq_report.metrics.msee / 1e6:.2f} Mbit/J")


def test_criterion_09_absorption_trend(desk_config, desk_layout):
    msees = []
    for af in (0.005, 0.010, 0.015, 0.020, 0.025):
        cfg = scenario.replace(desk_config, absorption=af)
        rep = orchestrator.run_msee_mi(cfg, desk_layout)
        msees.append(rep.metrics.msee / 1e6)
    ok = all(b <= a + 1e-9 for a, b in zip(msees, msees[1:]))
    soft_report(9, ok, f"MSEE vs absorption {[f'{v:.2f}' for v in msees]} "
                       f"non-increasing")


def test_criterion_10_feasibility_audit(seq_report, mi_report, ftrj_report,
                                        fpow_report, masr_report,
                                        initial_report):
    ok = True
    msg = []
    for rep in (seq_report, mi_report, ftrj_report, fpow_report, masr_report,
                initial_report):
        pre = rep.binary_residual_pre_round
        post = subproblems.binary_residual(rep.alloc_binary.zeta)
        good = rep.audit.passed and pre <= 1e-3 and post == 0.0
        ok &= good
        msg.append(f"{rep.scheme}: audit={'ok' if rep.audit.passed else rep.audit.failures}, "
                   f"binary pre={pre:.1e} post={post:g}")
    report(10, ok, "; ".join(msg))


def test_criterion_11_determinism(tmp_path):
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["run", "--scenario", DESK, "--scheme", "msee_mi",
                     "--out", str(out_a)]) == 0
    assert cli.main(["run", "--scenario", DESK, "--scheme", "msee_mi",
                     "--out", str(out_b)]) == 0
    same = (out_a / "solution.json").read_bytes() == \
        (out_b / "solution.json").read_bytes()
    report(11, same, "repeat runs produce byte-identical solution files")
