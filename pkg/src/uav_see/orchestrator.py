"""Feasible initialization, the two outer block-coordinate drivers
(sequential and maximum-improvement), the benchmark schemes, and run
reporting.

Schemes
-------
msee_seq   cycle p1 -> p2 -> p3 -> p4 until the fractional objective gain
           drops below tol_outer
msee_mi    evaluate all four block updates from one snapshot per outer
           iteration, commit only the best
ftrj       max-improvement over the power/scheduling blocks, plan frozen
fpow       trajectory block only, powers/scheduling frozen at the start
masr_seq   sequential loop maximizing the minimum secrecy rate instead of
           the rate/power ratio
initial    the feasible starting point itself
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import physics, subproblems
from .physics import FlightPlan, ResourceAllocation, SeeMetrics
from .scenario import NodeLayout, ScenarioConfig

log = logging.getLogger("uav_see")

OUTER_CAP = 100

SCHEMES = ("msee_seq", "msee_mi", "ftrj", "fpow", "masr_seq", "initial")


class InfeasibleMissionError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# feasible initialization
# ---------------------------------------------------------------------------

def _resample_closed_curve(points: np.ndarray, n_slots: int) -> np.ndarray:
    """Resample a densely sampled closed curve at n_slots+1 equally spaced
    arc-length stations (constant traversal speed)."""
    seg = np.linalg.norm(np.diff(points, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    if total <= 0:
        return np.repeat(points[:1], n_slots + 1, axis=0)
    stations = np.linspace(0.0, total, n_slots + 1)
    out = np.empty((n_slots + 1, 2))
    out[:, 0] = np.interp(stations, cum, points[:, 0])
    out[:, 1] = np.interp(stations, cum, points[:, 1])
    return out


def _plan_from_positions(q: np.ndarray, config: ScenarioConfig) -> FlightPlan:
    q = np.array(q, dtype=float)
    q[0] = config.uav_start
    q[-1] = config.uav_start
    v = np.diff(q, axis=0) / config.slot_duration
    return FlightPlan(q=q, v=v, mu=physics.induced_slack(v, config.rotor))


def _plan_feasible(config: ScenarioConfig, layout: NodeLayout,
                   plan: FlightPlan) -> bool:
    speed = np.linalg.norm(plan.v, axis=1)
    if speed.max() > config.vmax + 1e-9:
        return False
    dv = np.linalg.norm(np.diff(plan.v, axis=0), axis=1)
    if dv.size and dv.max() > config.amax + 1e-9:
        return False
    radius = np.linalg.norm(plan.q - np.asarray(layout.bs_pos), axis=1)
    if radius.max() > config.outer_radius + 1e-9:
        return False
    pf = physics.flight_power(plan.v, config.rotor)
    return float(np.mean(pf)) <= config.flight_power_limit - 1e-9


def _piriform_positions(config: ScenarioConfig, a_y: float, dense: int = 4096):
    """Pear-shaped closed curve through the start point, BS frame; constant
    speed after arc-length resampling."""
    qb = np.asarray(config.bs_pos)
    qi = np.asarray(config.uav_start)
    r_c = float(np.linalg.norm(qi - qb))
    t = np.linspace(0.5 * np.pi, 2.5 * np.pi, dense)
    x = r_c * (np.sin(t) + 1.0) / 2.0
    y = a_y * (1.0 - np.sin(t)) * np.cos(t)
    pts = np.stack([x, y], axis=1)
    angle = math.atan2(qi[1] - qb[1], qi[0] - qb[0])
    rot = np.array([[math.cos(angle), -math.sin(angle)],
                    [math.sin(angle), math.cos(angle)]])
    pts = pts @ rot.T + qb
    return _resample_closed_curve(pts, config.n_slots)


def initial_plan(config: ScenarioConfig, layout: NodeLayout) -> FlightPlan:
    """Circular path through the start point when the mission time allows it,
    else a pear-shaped cyclic path with its width picked by a 32-point grid
    search (maximize the minimum UE-to-path distance among feasible widths)."""
    qb = np.asarray(config.bs_pos)
    qi = np.asarray(config.uav_start)
    r_c = float(np.linalg.norm(qi - qb))
    if r_c < 1e-12:
        hover = np.repeat(qi[None, :], config.n_slots + 1, axis=0)
        return _plan_from_positions(hover, config)
    t_circle = 2.0 * np.pi * r_c / config.vmax
    t_cyclic = 2.0 * r_c / config.vmax
    if config.mission_time >= t_circle:
        theta0 = math.atan2(qi[1] - qb[1], qi[0] - qb[0])
        theta = theta0 + np.linspace(0.0, 2.0 * np.pi, config.n_slots + 1)
        q = qb + r_c * np.stack([np.cos(theta), np.sin(theta)], axis=1)
        plan = _plan_from_positions(q, config)
        if _plan_feasible(config, layout, plan):
            return plan
    if config.mission_time < t_cyclic:
        raise InfeasibleMissionError(
            f"mission time {config.mission_time} s below the minimum cyclic "
            f"time {t_cyclic:.3f} s (circular needs {t_circle:.3f} s)")
    best_plan, best_score = None, -np.inf
    for a_y in np.linspace(0.0, r_c, 32):
        plan = _plan_from_positions(_piriform_positions(config, a_y), config)
        if not _plan_feasible(config, layout, plan):
            continue
        score = float(np.min(np.linalg.norm(
            plan.q[None, :, :] - layout.ue_positions[:, None, :], axis=-1)))
        if score > best_score:
            best_plan, best_score = plan, score
    if best_plan is not None:
        return best_plan
    # coarse grids can make every pear width violate the velocity-change
    # budget at the tip; fall back to the largest feasible circle through the
    # start point, shrunk toward it (stays inside the permitted region)
    for r_small in np.linspace(r_c, r_c / 64.0, 64):
        center = qb + (qi - qb) * (1.0 - r_small / r_c)
        theta0 = math.atan2(qi[1] - center[1], qi[0] - center[0])
        theta = theta0 + np.linspace(0.0, 2.0 * np.pi, config.n_slots + 1)
        q = center + r_small * np.stack([np.cos(theta), np.sin(theta)], axis=1)
        plan = _plan_from_positions(q, config)
        if _plan_feasible(config, layout, plan):
            return plan
    raise InfeasibleMissionError(
        f"no feasible cyclic path found; mission time {config.mission_time} s "
        f"(circular needs {t_circle:.3f} s, cyclic at least {t_cyclic:.3f} s)")


def initialize_feasible(config: ScenarioConfig, layout: NodeLayout):
    """Starting point: cyclic path, flat relay/jam powers at their averages,
    round-robin scheduling with floor(N/K) slots per user."""
    plan = initial_plan(config, layout)
    kk, nn = config.num_users, config.n_slots
    zeta = np.zeros((kk, nn))
    per_user = nn // kk
    for i in range(per_user * kk):
        zeta[i % kk, i] = 1.0
    p_ue = np.where(zeta > 0.5, config.ue_avg_power, 0.0)
    alloc = ResourceAllocation(zeta=zeta, p_tilde=zeta * p_ue, p_ue=p_ue,
                               p_relay=np.full(nn, config.relay_avg_power),
                               p_jam=np.full(nn, config.jam_avg_power))
    audit = subproblems.audit_constraints(config, layout, plan, alloc)
    if not audit.passed:
        raise InfeasibleMissionError(
            f"initial point fails the constraint audit: {audit.failures} "
            f"({audit.residuals})")
    return plan, alloc


# ---------------------------------------------------------------------------
# run drivers
# ---------------------------------------------------------------------------

@dataclass
class RunReport:
    scheme: str
    iterations: list = field(default_factory=list)   # one dict per outer iteration
    plan: FlightPlan = None
    alloc: ResourceAllocation = None                 # relaxed final allocation
    alloc_binary: ResourceAllocation = None
    audit: subproblems.AuditReport = None
    metrics: SeeMetrics = None                       # of the rounded solution
    metrics_relaxed: SeeMetrics = None
    converged: bool = False
    flags: list = field(default_factory=list)
    block_traces: dict = field(default_factory=dict)
    block_seconds: dict = field(default_factory=dict)
    outer_iterations: int = 0
    runtime_s: float = 0.0
    binary_residual_pre_round: float = 0.0

    def solution_dict(self) -> dict:
        """Deterministic solution payload (no timing fields)."""
        return {
            "scheme": self.scheme,
            "plan": {"q": self.plan.q.tolist(), "v": self.plan.v.tolist(),
                     "mu": self.plan.mu.tolist()},
            "powers": {"ue": self.alloc_binary.p_ue.tolist(),
                       "ue_tilde": self.alloc.p_tilde.tolist(),
                       "relay": self.alloc_binary.p_relay.tolist(),
                       "jam": self.alloc_binary.p_jam.tolist()},
            "schedule": self.alloc_binary.zeta.astype(int).tolist(),
            "schedule_relaxed": self.alloc.zeta.tolist(),
            "audit": {k: float(v) for k, v in sorted(self.audit.residuals.items())},
            "audit_passed": bool(self.audit.passed),
            "metrics": self.metrics_dict(),
            "converged": bool(self.converged),
            "outer_iterations": int(self.outer_iterations),
            "flags": list(self.flags),
        }

    def metrics_dict(self) -> dict:
        m = self.metrics
        return {
            "msee_mbit_per_joule": m.msee / 1e6,
            "msee_unclipped_mbit_per_joule": m.msee_unclipped / 1e6,
            "masr_mbps": m.masr / 1e6,
            "afpc_w": m.afpc,
            "afpcr": m.afpcr,
            "see_per_user_mbit_per_joule": (m.see / 1e6).tolist(),
            "secure_bits_per_user": m.secure_bits.tolist(),
        }

    def summary_dict(self) -> dict:
        return {
            "scheme": self.scheme,
            "msee": self.metrics.msee / 1e6,
            "masr": self.metrics.masr / 1e6,
            "afpc_w": self.metrics.afpc,
            "afpcr": self.metrics.afpcr,
            "iters": self.outer_iterations,
            "runtime_s": self.runtime_s,
            "converged": self.converged,
        }


def _metrics(config, layout, plan, alloc) -> SeeMetrics:
    gains = physics.link_gains(plan, layout, config)
    return physics.see_metrics(gains, alloc, plan, config)


def _trace_row(config, layout, plan, alloc, it, committed, wall_ms) -> dict:
    m = _metrics(config, layout, plan, alloc)
    return {"iter": it, "block_committed": committed,
            "msee": m.msee_unclipped / 1e6, "masr": m.masr / 1e6,
            "afpc": m.afpc, "afpcr": m.afpcr, "wall_ms": wall_ms,
            "msee_clipped": m.msee / 1e6}


_BLOCKS = ("p1", "p2", "p3", "p4")


def _apply_block(name, config, layout, plan, alloc, masr_mode, keep_flight_limit):
    if name == "p1":
        return subproblems.solve_p1(config, layout, plan, alloc, masr_mode)
    if name == "p2":
        return subproblems.solve_p2(config, layout, plan, alloc, masr_mode)
    if name == "p3":
        return subproblems.solve_p31(config, layout, plan, alloc, masr_mode)
    if name == "p4":
        return subproblems.solve_p4_dinkelbach(config, layout, plan, alloc,
                                               masr_mode, keep_flight_limit)
    raise ValueError(f"unknown block {name}")


def _finalize(config, layout, plan, alloc, report: RunReport):
    report.plan = plan
    report.alloc = alloc
    report.binary_residual_pre_round = subproblems.binary_residual(
        np.clip(alloc.zeta, 0.0, 1.0))
    report.alloc_binary = subproblems.finalize_binary(alloc)
    report.audit = subproblems.audit_constraints(config, layout, plan,
                                                 report.alloc_binary,
                                                 binary_tol=0.0)
    report.metrics = _metrics(config, layout, plan, report.alloc_binary)
    report.metrics_relaxed = _metrics(config, layout, plan, alloc)
    return report


def _run_bcd(config: ScenarioConfig, layout: NodeLayout, scheme: str,
             blocks=_BLOCKS, greedy=False, masr_mode=False,
             keep_flight_limit=True) -> RunReport:
    t_start = time.perf_counter()
    report = RunReport(scheme=scheme)
    plan, alloc = initialize_feasible(config, layout)
    obj = subproblems.exact_objective(config, layout, plan, alloc, masr_mode)
    report.iterations.append(_trace_row(config, layout, plan, alloc, 0, "init", 0.0))

    try:
        _bcd_loop(config, layout, blocks, greedy, masr_mode, keep_flight_limit,
                  report, plan, alloc, obj)
    except subproblems.SubproblemError as exc:
        # hard errors abort the run but keep the partial trace attached
        exc.partial_report = report
        raise
    report.runtime_s = time.perf_counter() - t_start
    return report


def _bcd_loop(config, layout, blocks, greedy, masr_mode, keep_flight_limit,
              report, plan, alloc, obj):
    for it in range(1, OUTER_CAP + 1):
        t_it = time.perf_counter()
        committed = "+".join(blocks)
        if greedy:
            candidates = {}
            for name in blocks:
                t_blk = time.perf_counter()
                res = _apply_block(name, config, layout, plan, alloc,
                                   masr_mode, keep_flight_limit)
                report.block_seconds[name] = report.block_seconds.get(name, 0.0) \
                    + time.perf_counter() - t_blk
                gain = subproblems.exact_objective(
                    config, layout, res.plan, res.alloc, masr_mode) - obj
                candidates[name] = (gain, res)
                if res.flagged:
                    report.flags.append(f"iter{it}/{name}: {res.reason}")
                report.block_traces.setdefault(name, []).extend(res.trace)
            committed = max(blocks, key=lambda b: candidates[b][0])
            best_gain, best = candidates[committed]
            if best_gain > 0:
                plan, alloc = best.plan, best.alloc
        else:
            for name in blocks:
                t_blk = time.perf_counter()
                res = _apply_block(name, config, layout, plan, alloc,
                                   masr_mode, keep_flight_limit)
                report.block_seconds[name] = report.block_seconds.get(name, 0.0) \
                    + time.perf_counter() - t_blk
                plan, alloc = res.plan, res.alloc
                if res.flagged:
                    report.flags.append(f"iter{it}/{name}: {res.reason}")
                report.block_traces.setdefault(name, []).extend(res.trace)
        new_obj = subproblems.exact_objective(config, layout, plan, alloc, masr_mode)
        wall_ms = (time.perf_counter() - t_it) * 1e3
        report.iterations.append(
            _trace_row(config, layout, plan, alloc, it, committed, wall_ms))
        gain = new_obj - obj
        frac = gain / max(abs(obj), 1e-12)
        obj = new_obj
        if frac < config.tol_outer:   # gain >= 0 by the per-block best-of guard
            report.converged = True
            break
    report.outer_iterations = len(report.iterations) - 1
    _finalize(config, layout, plan, alloc, report)


def run_msee_seq(config: ScenarioConfig, layout: NodeLayout) -> RunReport:
    """Sequential block-coordinate driver over all four blocks."""
    return _run_bcd(config, layout, "msee_seq", greedy=False)


def run_msee_mi(config: ScenarioConfig, layout: NodeLayout) -> RunReport:
    """Maximum-improvement driver: all candidate blocks from one snapshot,
    commit only the largest exact gain."""
    return _run_bcd(config, layout, "msee_mi", greedy=True)


def run_baseline(config: ScenarioConfig, layout: NodeLayout, mode: str,
                 keep_flight_limit=True) -> RunReport:
    if mode == "ftrj":
        return _run_bcd(config, layout, "ftrj", blocks=("p1", "p2", "p3"),
                        greedy=True)
    if mode == "fpow":
        return _run_bcd(config, layout, "fpow", blocks=("p4",), greedy=False)
    if mode == "masr_seq":
        return _run_bcd(config, layout, "masr_seq", greedy=False, masr_mode=True,
                        keep_flight_limit=keep_flight_limit)
    if mode == "initial":
        return run_initial(config, layout)
    raise ValueError(f"unknown baseline mode {mode}")


def run_initial(config: ScenarioConfig, layout: NodeLayout) -> RunReport:
    t0 = time.perf_counter()
    report = RunReport(scheme="initial", converged=True)
    plan, alloc = initialize_feasible(config, layout)
    report.iterations.append(_trace_row(config, layout, plan, alloc, 0, "init", 0.0))
    _finalize(config, layout, plan, alloc, report)
    report.runtime_s = time.perf_counter() - t0
    return report


def run_scheme(config: ScenarioConfig, layout: NodeLayout, scheme: str) -> RunReport:
    if scheme == "msee_seq":
        return run_msee_seq(config, layout)
    if scheme == "msee_mi":
        return run_msee_mi(config, layout)
    if scheme in ("ftrj", "fpow", "masr_seq", "initial"):
        return run_baseline(config, layout, scheme)
    raise ValueError(f"unknown scheme {scheme}; pick one of {SCHEMES}")
