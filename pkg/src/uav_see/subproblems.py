"""Builders and inner-loop drivers for the four convexified blocks:

* block 1 - user scheduling + uplink power via penalty-SCA on the relaxed
  binary constraint (relative-entropy lowering of the concave rate term);
* block 2 - relay power, a single convex solve;
* block 3 - jamming power via SCA on the convex-minus-convex rate gap;
* block 4 - trajectory/velocity via Dinkelbach fractional iterations, each
  one convex solve with tangent surrogates rebuilt at the current iterate.

Every driver snapshots its inputs, trades exclusively in normalized
quantities (rates / bandwidth, powers / flight-power budget), and returns
the best iterate measured by the exact (non-surrogate) objective, so the
outer block-coordinate loop is monotone by construction.
"""

from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass

import numpy as np

from . import physics
from .conic import ConeProgram, LinExpr
from .physics import FlightPlan, LinkGains, ResourceAllocation
from .scenario import NodeLayout, ScenarioConfig

log = logging.getLogger("uav_see")


def _debug_tightness() -> bool:
    """UAV_SEE_DEBUG_TIGHTNESS=1 spot-checks, at every SCA iteration, that the
    surrogate rows coincide with their exact counterparts at the expansion
    point (raises on drift beyond 1e-9 relative)."""
    return os.environ.get("UAV_SEE_DEBUG_TIGHTNESS", "") not in ("", "0")


def _assert_tight(tag: str, surrogate, exact):
    gap = float(np.max(np.abs(np.asarray(surrogate) - np.asarray(exact))))
    scale = max(1.0, float(np.max(np.abs(np.asarray(exact)))))
    if gap > 1e-9 * scale:
        raise SubproblemError(
            f"surrogate not tight at expansion point ({tag}): gap {gap:.3e}")

LN2 = float(np.log(2.0))
ZETA_ACTIVE = 1e-6    # time shares below this are dropped from surrogate sums
POWER_FLOOR = 1e-9    # strict-interior safeguard before building surrogates
TOL_BINARY = 1e-3     # PSCA exit tolerance on sum(zeta - zeta^2)
C9_MARGIN = 1e-3      # watts shaved off the flight-power row (absorbs solver slack)
PSCA_CAP = 20         # max inner iterations of block 1
SCA_CAP = 15          # max inner iterations of block 3
DINKELBACH_CAP = 30   # max fractional iterations of block 4


class SubproblemError(RuntimeError):
    pass


class DinkelbachError(SubproblemError):
    """The fractional parameter regressed: a modeling bug, not a numeric blip."""


@dataclass
class BlockResult:
    alloc: ResourceAllocation
    plan: FlightPlan
    trace: list
    flagged: bool = False
    reason: str = ""
    psi: float = math.nan        # solver epigraph value at the returned iterate
    exact_psi: float = math.nan  # exact evaluation of the same quantity


def normalization(config: ScenarioConfig, plan: FlightPlan, masr_mode: bool) -> float:
    """kappa such that kappa * sum_n zeta*(relay - wiretap nats) is the
    normalized per-user objective (SEE or ASR/B)."""
    if masr_mode:
        return 1.0 / (2.0 * config.n_slots * LN2)
    pf_total = float(np.sum(physics.flight_power(plan.v, config.rotor)))
    return config.flight_power_limit / (2.0 * LN2 * pf_total)


def exact_objective(config, layout, plan, alloc, masr_mode=False) -> float:
    gains = physics.link_gains(plan, layout, config)
    return physics.objective_value(gains, alloc, plan, config, masr_mode)


def active_mask(alloc: ResourceAllocation) -> np.ndarray:
    return (alloc.zeta > ZETA_ACTIVE) & (alloc.p_tilde > 1e-12)


def _safe_powers(alloc: ResourceAllocation):
    """Per-slot powers clipped away from zero for surrogate constants."""
    pk = np.maximum(alloc.p_ue, POWER_FLOOR)
    pu = np.maximum(alloc.p_relay, POWER_FLOOR)
    pb = np.maximum(alloc.p_jam, POWER_FLOOR)
    return pk, pu, pb


# ---------------------------------------------------------------------------
# block 1: user scheduling and uplink power (penalty-SCA)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class P1Constants:
    kappa: float
    b: np.ndarray   # (K,N) wiretap gain ratio
    c: np.ndarray   # (N,)  relay power*gain
    d: np.ndarray   # (K,N) composite interference-over-gain

    @classmethod
    def from_state(cls, config, gains: LinkGains, alloc: ResourceAllocation,
                   plan: FlightPlan, masr_mode=False) -> "P1Constants":
        _, pu, pb = _safe_powers(alloc)
        b = gains.g_ue / (pb * gains.g_bs + 1.0)
        c = np.broadcast_to(gains.g_bs * pu, gains.g_bs.shape).copy()
        d = (gains.g_bs * (pu + pb) + 1.0) / gains.g_ue
        return cls(kappa=normalization(config, plan, masr_mode), b=b, c=c, d=d)


def binary_residual(zeta: np.ndarray) -> float:
    return float(np.sum(zeta - zeta * zeta))


def build_p1(config: ScenarioConfig, consts: P1Constants, zeta0: np.ndarray,
             ptil0: np.ndarray, mu_pen: float, fix_powers: np.ndarray | None = None):
    """One convex scheduling/uplink program at expansion point (zeta0, ptil0).

    fix_powers, if given, pins p_tilde = fix_powers * zeta (power fixed per
    slot, only the time shares move).
    """
    kk, nn = zeta0.shape
    prog = ConeProgram("p1")
    psi = prog.add_var("psi")
    eta = prog.add_var("eta", lb=0.0)
    zeta = [prog.add_vars(f"zeta{k}", nn, lb=0.0, ub=1.0) for k in range(kk)]
    ptil = [prog.add_vars(f"ptil{k}", nn, lb=0.0) for k in range(kk)]

    for k in range(kk):
        lhs = LinExpr()
        for n in range(nn):
            cc, dd, bb = consts.c[n], consts.d[k, n], consts.b[k, n]
            zv, pv = prog.var(zeta[k][n]), prog.var(ptil[k][n])
            # concave relay term x*ln(1 + c*y/(y + d*x)) lowered through a
            # pair of relative-entropy epigraphs
            e1 = pv + zv * dd
            e2 = pv * (1.0 + cc) + zv * dd
            ta = prog.add_var(f"_ta[{k},{n}]")
            tb = prog.add_var(f"_tb[{k},{n}]")
            prog.add_relative_entropy(prog.var(ta), e1, e2, f"p1/relay_a[{k},{n}]")
            prog.add_relative_entropy(prog.var(tb), e2, e1, f"p1/relay_b[{k},{n}]")
            c1 = (1.0 + cc) / (cc * dd)
            c2 = 1.0 / (cc * dd)
            # tangent over-estimator of the concave wiretap term
            z0, p0 = zeta0[k, n], ptil0[k, n]
            ratio = bb * p0 / z0
            dx = math.log1p(ratio) - bb * p0 / (z0 + bb * p0)
            dy = bb * z0 / (z0 + bb * p0)
            fub_const = z0 * math.log1p(ratio) - dx * z0 - dy * p0
            lhs = lhs + prog.var(ta) * (-c1) + prog.var(tb) * (-c2) \
                - (zv * dx + pv * dy + fub_const)
        prog.add_le(prog.var(psi) * (1.0 / consts.kappa) - lhs, 0.0, f"p1/rate[{k}]")

    avg = LinExpr()
    binary = LinExpr()
    for k in range(kk):
        for n in range(nn):
            zv, pv = prog.var(zeta[k][n]), prog.var(ptil[k][n])
            avg = avg + pv
            prog.add_le(pv - zv * config.ue_peak_power, 0.0, f"p1/peak[{k},{n}]")
            binary = binary + zv * (1.0 - 2.0 * zeta0[k, n]) + zeta0[k, n] ** 2
            if fix_powers is not None:
                prog.add_eq(pv - zv * float(fix_powers[k, n]), 0.0,
                            f"p1/fixpow[{k},{n}]")
    prog.add_le(avg, config.n_slots * config.ue_avg_power, "p1/avg_power")
    for n in range(nn):
        share = LinExpr()
        for k in range(kk):
            share = share + prog.var(zeta[k][n])
        prog.add_le(share, 1.0, f"p1/share[{n}]")
    prog.add_le(binary - prog.var(eta), 0.0, "p1/binary")
    prog.set_objective(prog.var(psi) - prog.var(eta) * mu_pen)
    handles = {"psi": psi, "eta": eta, "zeta": zeta, "ptil": ptil}
    return prog, handles


def p1_exact_psi(consts: P1Constants, alloc: ResourceAllocation) -> float:
    """Exact normalized min-user objective at fixed relay/jam powers."""
    zeta = alloc.zeta
    pk = alloc.p_ue
    relay = zeta * np.log1p(consts.c[None, :] * pk / (pk + consts.d + 1e-300))
    tap = zeta * np.log1p(consts.b * pk)
    return consts.kappa * float(np.min(np.sum(relay - tap, axis=1)))


def solve_p1(config: ScenarioConfig, layout: NodeLayout, plan: FlightPlan,
             alloc: ResourceAllocation, masr_mode=False,
             fix_powers: np.ndarray | None = None) -> BlockResult:
    """Penalty-SCA driver: grows the binary penalty whenever the inner SCA
    stalls, stops once near-binary and stalled (or at the iteration cap)."""
    gains = physics.link_gains(plan, layout, config)
    consts = P1Constants.from_state(config, gains, alloc, plan, masr_mode)
    zeta_cur, ptil_cur = alloc.zeta.copy(), alloc.p_tilde.copy()
    mu_pen = config.penalty_init
    trace = []
    incoming = exact_objective(config, layout, plan, alloc, masr_mode)
    best_alloc, best_obj = alloc, incoming
    prev_inner, flagged, reason = None, False, ""

    for it in range(PSCA_CAP):
        z0 = np.clip(zeta_cur, 1e-6, 1.0 - 1e-6)
        p0 = np.maximum(ptil_cur, POWER_FLOOR)
        if _debug_tightness():
            from . import bounds
            _assert_tight("p1/wiretap_tangent",
                          bounds.f1_ub(z0, p0, z0, p0, consts.b),
                          bounds.z2(z0, p0, consts.b))
            e1 = p0 + consts.d * z0
            e2 = p0 * (1.0 + consts.c[None, :]) + consts.d * z0
            c1 = (1.0 + consts.c[None, :]) / (consts.c[None, :] * consts.d)
            c2 = 1.0 / (consts.c[None, :] * consts.d)
            split = -c1 * e1 * np.log(e1 / e2) - c2 * e2 * np.log(e2 / e1)
            _assert_tight("p1/relay_entropy_split", split,
                          bounds.z1(z0, p0, consts.c[None, :], consts.d))
        prog, h = build_p1(config, consts, z0, p0, mu_pen, fix_powers)
        rep = prog.solve()
        if rep.status != "optimal":
            flagged, reason = True, f"p1 solve {rep.status} (worst {rep.worst_tag})"
            log.warning(reason)
            break
        zeta_cur = np.clip(np.array([[rep.value(i) for i in row] for row in h["zeta"]]),
                           0.0, 1.0)
        ptil_cur = np.maximum(np.array([[rep.value(i) for i in row] for row in h["ptil"]]),
                              0.0)
        eta_val = binary_residual(zeta_cur)
        inner = rep.value(h["psi"]) - mu_pen * max(eta_val, 0.0)
        cand = ResourceAllocation.from_tilde(zeta_cur, ptil_cur,
                                             alloc.p_relay, alloc.p_jam)
        cand_obj = exact_objective(config, layout, plan, cand, masr_mode)
        trace.append({"iter": it, "mu_pen": mu_pen, "psi": rep.value(h["psi"]),
                      "eta": eta_val, "inner_obj": inner, "exact_obj": cand_obj})
        if eta_val <= TOL_BINARY and cand_obj > best_obj:
            best_alloc, best_obj = cand, cand_obj
        stalled = prev_inner is not None and \
            abs(inner - prev_inner) <= config.tol_sca_p1 * max(1.0, abs(prev_inner))
        prev_inner = inner
        if stalled:
            if eta_val <= TOL_BINARY:
                break
            if mu_pen >= config.penalty_cap:
                flagged, reason = True, ("penalty cap reached with binary residual "
                                         f"{eta_val:.3g} above tolerance")
                log.warning(reason)
                break
            mu_pen = min(mu_pen * config.penalty_growth, config.penalty_cap)
            prev_inner = None
    return BlockResult(alloc=best_alloc, plan=plan, trace=trace, flagged=flagged,
                       reason=reason, psi=trace[-1]["psi"] if trace else math.nan,
                       exact_psi=p1_exact_psi(consts, best_alloc))


def round_scheduling(zeta: np.ndarray) -> np.ndarray:
    """Elementwise floor(zeta + 0.5); a double-active column (exact 0.5 ties)
    keeps the largest pre-rounding share, remaining ties to the lower index."""
    zeta = np.asarray(zeta, dtype=float)
    binary = np.floor(zeta + 0.5)
    binary = np.clip(binary, 0.0, 1.0)
    for n in range(zeta.shape[1]):
        if binary[:, n].sum() > 1.0:
            keep = int(np.argmax(zeta[:, n]))  # argmax takes the lowest index on ties
            binary[:, n] = 0.0
            binary[keep, n] = 1.0
    return binary


def finalize_binary(alloc: ResourceAllocation) -> ResourceAllocation:
    """Round the time shares and re-derive powers so the scheduling and power
    constraints hold exactly (active slots keep the optimized energy p_tilde)."""
    zb = round_scheduling(alloc.zeta)
    p_ue = np.where(zb > 0.5, alloc.p_tilde, 0.0)
    return ResourceAllocation(zeta=zb, p_tilde=p_ue.copy(), p_ue=p_ue,
                              p_relay=alloc.p_relay, p_jam=alloc.p_jam)


# ---------------------------------------------------------------------------
# block 2: relay power (single convex solve)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class P2Constants:
    kappa: float
    e: np.ndarray       # (K,N) uplink received SNR scale
    f: np.ndarray       # (K,N)
    lam: np.ndarray     # (K,N) per-term weight kappa*zeta
    g: np.ndarray       # (K,) wiretap part, constant in relay power
    active: np.ndarray  # (K,N) bool

    @classmethod
    def from_state(cls, config, gains, alloc, plan, masr_mode=False) -> "P2Constants":
        pk, _, pb = _safe_powers(alloc)
        kappa = normalization(config, plan, masr_mode)
        act = active_mask(alloc)
        e = pk * gains.g_ue
        f = (pk * gains.g_ue + pb * gains.g_bs + 1.0) / gains.g_bs
        lam = kappa * np.where(act, alloc.zeta, 0.0)
        tap = np.where(act, alloc.zeta * np.log1p(pk * gains.g_ue /
                                                  (pb * gains.g_bs + 1.0)), 0.0)
        return cls(kappa=kappa, e=e, f=f, lam=lam, g=kappa * tap.sum(axis=1),
                   active=act)


def p2_exact_objective(consts: P2Constants, p_relay: np.ndarray) -> float:
    """min over users of the exact block-2 epigraph value at relay powers p_relay."""
    vals = []
    for k in range(consts.e.shape[0]):
        total = 0.0
        for n in np.nonzero(consts.active[k])[0]:
            e, f = consts.e[k, n], consts.f[k, n]
            total += consts.lam[k, n] * math.log1p(e * p_relay[n] / (p_relay[n] + f))
        vals.append(total - consts.g[k])
    return float(min(vals))


def solve_p2(config: ScenarioConfig, layout: NodeLayout, plan: FlightPlan,
             alloc: ResourceAllocation, masr_mode=False) -> BlockResult:
    gains = physics.link_gains(plan, layout, config)
    consts = P2Constants.from_state(config, gains, alloc, plan, masr_mode)
    kk, nn = consts.e.shape
    prog = ConeProgram("p2")
    psi = prog.add_var("psi")
    pu = prog.add_vars("pu", nn, lb=0.0, ub=config.relay_peak_power)
    for k in range(kk):
        lhs = LinExpr()
        for n in np.nonzero(consts.active[k])[0]:
            e, f = consts.e[k, n], consts.f[k, n]
            # hypograph of ln(1 + e*x/(x + f)) = ln(q - e*f/(x + f)), q = 1 + e:
            # z >= exp(tau) (one exp cone) and (x + f)(q - z) >= e*f (one SOC)
            tau = prog.add_var(f"_tau[{k},{n}]")
            z = prog.add_var(f"_z[{k},{n}]", lb=0.0)
            prog.add_exp(prog.var(tau), 1.0, prog.var(z), f"p2/exp[{k},{n}]")
            prog.add_rotated(prog.var(pu[n]) + f, (1.0 + e) - prog.var(z),
                             [math.sqrt(e * f)], f"p2/frac[{k},{n}]")
            lhs = lhs + prog.var(tau) * consts.lam[k, n]
        prog.add_le(prog.var(psi) - lhs + consts.g[k], 0.0, f"p2/rate[{k}]")
    total = LinExpr()
    for n in range(nn):
        total = total + prog.var(pu[n])
    prog.add_le(total, config.n_slots * config.relay_avg_power, "p2/avg_power")
    prog.set_objective(prog.var(psi))
    rep = prog.solve()
    incoming = exact_objective(config, layout, plan, alloc, masr_mode)
    if rep.status != "optimal":
        return BlockResult(alloc=alloc, plan=plan, trace=[], flagged=True,
                           reason=f"p2 solve {rep.status}", exact_psi=incoming)
    p_new = np.clip(np.array([rep.value(i) for i in pu]), 0.0,
                    config.relay_peak_power)
    cand = ResourceAllocation(zeta=alloc.zeta, p_tilde=alloc.p_tilde,
                              p_ue=alloc.p_ue, p_relay=p_new, p_jam=alloc.p_jam)
    cand_obj = exact_objective(config, layout, plan, cand, masr_mode)
    best = cand if cand_obj >= incoming else alloc
    trace = [{"iter": 0, "psi": rep.value(psi), "exact_obj": max(cand_obj, incoming)}]
    return BlockResult(alloc=best, plan=plan, trace=trace,
                       psi=rep.value(psi),
                       exact_psi=p2_exact_objective(consts, best.p_relay))


# ---------------------------------------------------------------------------
# block 3: jamming power (SCA)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class P3Constants:
    lam: np.ndarray      # (K,N)
    h: np.ndarray        # (K,N) relay numerator
    i: np.ndarray        # (K,N) relay interference offset
    j: np.ndarray        # (K,N) wiretap numerator
    k_off: np.ndarray    # (N,) wiretap noise offset
    active: np.ndarray   # (K,N)

    @classmethod
    def from_state(cls, config, gains, alloc, plan, masr_mode=False) -> "P3Constants":
        pk, pu, _ = _safe_powers(alloc)
        kappa = normalization(config, plan, masr_mode)
        act = active_mask(alloc) & (pk * gains.g_ue > 1e-12)
        return cls(lam=kappa * np.where(act, alloc.zeta, 0.0),
                   h=gains.g_ue * pk * pu,
                   i=(pu * gains.g_bs + pk * gains.g_ue + 1.0) / gains.g_bs,
                   j=pk * gains.g_ue / gains.g_bs,
                   k_off=1.0 / gains.g_bs,
                   active=act)


def p3_exact_objective(consts: P3Constants, p_jam: np.ndarray) -> float:
    vals = []
    for k in range(consts.h.shape[0]):
        total = 0.0
        for n in np.nonzero(consts.active[k])[0]:
            relay = math.log1p(consts.h[k, n] / (p_jam[n] + consts.i[k, n]))
            tap = math.log1p(consts.j[k, n] / (p_jam[n] + consts.k_off[n]))
            total += consts.lam[k, n] * (relay - tap)
        vals.append(total)
    return float(min(vals))


def build_p3(config: ScenarioConfig, consts: P3Constants, pb0: np.ndarray):
    kk, nn = consts.h.shape
    prog = ConeProgram("p3")
    psi = prog.add_var("psi")
    pb = prog.add_vars("pb", nn, lb=0.0, ub=config.jam_peak_power)
    for k in range(kk):
        lhs = LinExpr()
        for n in np.nonzero(consts.active[k])[0]:
            hh, ii, jj, kk_off = (consts.h[k, n], consts.i[k, n],
                                  consts.j[k, n], consts.k_off[n])
            # tangent under-estimator of the convex relay term at pb0
            slope = -hh / ((pb0[n] + ii) * (pb0[n] + hh + ii))
            const = math.log1p(hh / (pb0[n] + ii)) - slope * pb0[n]
            relay = prog.var(pb[n]) * slope + const
            # exact hypograph of -ln(1 + j/(pb + k)) = ln(1 - j/(pb + k + j))
            tau = prog.add_var(f"_tau[{k},{n}]")
            z = prog.add_var(f"_z[{k},{n}]", lb=0.0)
            prog.add_exp(prog.var(tau), 1.0, prog.var(z), f"p3/exp[{k},{n}]")
            prog.add_rotated(prog.var(pb[n]) + kk_off + jj, 1.0 - prog.var(z),
                             [math.sqrt(jj)], f"p3/frac[{k},{n}]")
            lhs = lhs + (relay + prog.var(tau)) * consts.lam[k, n]
        prog.add_le(prog.var(psi) - lhs, 0.0, f"p3/rate[{k}]")
    total = LinExpr()
    for n in range(nn):
        total = total + prog.var(pb[n])
    prog.add_le(total, config.n_slots * config.jam_avg_power, "p3/avg_power")
    prog.set_objective(prog.var(psi))
    return prog, {"psi": psi, "pb": pb}


def solve_p31(config: ScenarioConfig, layout: NodeLayout, plan: FlightPlan,
              alloc: ResourceAllocation, masr_mode=False) -> BlockResult:
    gains = physics.link_gains(plan, layout, config)
    consts = P3Constants.from_state(config, gains, alloc, plan, masr_mode)
    pb_cur = alloc.p_jam.copy()
    incoming = exact_objective(config, layout, plan, alloc, masr_mode)
    best_alloc, best_obj = alloc, incoming
    trace = []
    prev_psi, flagged, reason = None, False, ""
    for it in range(SCA_CAP):
        pb0 = np.maximum(pb_cur, 0.0)
        if _debug_tightness():
            from . import bounds
            for k in range(consts.h.shape[0]):
                for n in np.nonzero(consts.active[k])[0]:
                    hh, ii = consts.h[k, n], consts.i[k, n]
                    jj, kk_off = consts.j[k, n], consts.k_off[n]
                    # builder's inline tangent vs the bound library (two
                    # points pin the affine function)
                    slope = -hh / ((pb0[n] + ii) * (pb0[n] + hh + ii))
                    const = math.log1p(hh / (pb0[n] + ii)) - slope * pb0[n]
                    for probe in (pb0[n], pb0[n] + 1.0):
                        _assert_tight(f"p3/relay_tangent[{k},{n}]",
                                      const + slope * probe,
                                      bounds.f3(probe, pb0[n], hh, ii))
                    _assert_tight(f"p3/relay_tangent_tight[{k},{n}]",
                                  const + slope * pb0[n],
                                  bounds.f3_exact(pb0[n], hh, ii))
                    _assert_tight(
                        f"p3/tap_hypograph[{k},{n}]",
                        math.log1p(-jj / (pb0[n] + kk_off + jj)),
                        -math.log1p(jj / (pb0[n] + kk_off)))
        prog, h = build_p3(config, consts, pb0)
        rep = prog.solve()
        if rep.status != "optimal":
            flagged, reason = True, f"p3 solve {rep.status} (worst {rep.worst_tag})"
            log.warning(reason)
            break
        pb_cur = np.clip(np.array([rep.value(i) for i in h["pb"]]), 0.0,
                         config.jam_peak_power)
        cand = ResourceAllocation(zeta=alloc.zeta, p_tilde=alloc.p_tilde,
                                  p_ue=alloc.p_ue, p_relay=alloc.p_relay,
                                  p_jam=pb_cur)
        cand_obj = exact_objective(config, layout, plan, cand, masr_mode)
        psi_val = rep.value(h["psi"])
        trace.append({"iter": it, "psi": psi_val, "exact_obj": cand_obj})
        if cand_obj > best_obj:
            best_alloc, best_obj = cand, cand_obj
        if prev_psi is not None and \
                abs(psi_val - prev_psi) <= config.tol_sca_p3 * max(1.0, abs(prev_psi)):
            break
        prev_psi = psi_val
    return BlockResult(alloc=best_alloc, plan=plan, trace=trace, flagged=flagged,
                       reason=reason, psi=trace[-1]["psi"] if trace else math.nan,
                       exact_psi=p3_exact_objective(consts, best_alloc.p_jam))


# ---------------------------------------------------------------------------
# block 4: trajectory and velocity (Dinkelbach + SCA)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class P4Constants:
    """Per-(user, slot) rate constants in scaled path-loss units
    (path loss variables carry d^2*exp(a_f*d), i.e. inverse gain * beta0/N0)."""

    k0: np.ndarray
    k1: np.ndarray
    k2: np.ndarray
    k3: np.ndarray
    zeta: np.ndarray
    active: np.ndarray
    coef: float          # 1/(2 N ln2): nats-sum -> normalized ASR

    @classmethod
    def from_state(cls, config, alloc) -> "P4Constants":
        pk, pu, pb = _safe_powers(alloc)
        scale = config.beta0_lin / config.noise_power
        act = active_mask(alloc)
        k0 = (pu + pb) / (pk * pu) / scale
        k1 = np.broadcast_to(1.0 / pu / scale, pk.shape).copy()
        k2 = pk * scale
        k3 = np.broadcast_to(pb * scale, pk.shape).copy()
        return cls(k0=k0, k1=k1, k2=k2, k3=k3, zeta=alloc.zeta, active=act,
                   coef=1.0 / (2.0 * config.n_slots * LN2))


def _plan_slacks(plan: FlightPlan, layout: NodeLayout, config: ScenarioConfig):
    """Equality-tight slack values at a plan: scaled path losses r/w, the
    distances u, and the induced-velocity slack mu."""
    pos = plan.slot_positions
    r = physics.path_loss_normalized(pos[None, :, :], layout.ue_positions[:, None, :],
                                     config.altitude, config.absorption)
    w = physics.path_loss_normalized(pos, layout.bs_pos, config.altitude,
                                     config.absorption)
    dist = np.sqrt(np.sum((pos[None, :, :] - layout.ue_positions[:, None, :]) ** 2,
                          axis=-1) + config.altitude ** 2)
    mu = physics.induced_slack(plan.v, config.rotor)
    return r, w, dist, mu


def p4_rate_lower(consts: P4Constants, r, w) -> np.ndarray:
    """Exact high-SNR per-user normalized rate at scaled path losses (r, w)."""
    relay = np.log1p(1.0 / (consts.k0 * r + consts.k1 * w[None, :]))
    tap = np.log1p(consts.k2 / r / (consts.k3 / w[None, :] + 1.0))
    per = np.where(consts.active, consts.zeta * (relay - tap), 0.0)
    return consts.coef * np.sum(per, axis=1)


def _power_row_coeffs(config: ScenarioConfig, blade_coeff: float):
    rotor = config.rotor
    return (rotor.hover_profile_power,
            blade_coeff * rotor.hover_profile_power / rotor.tip_speed_sq,
            rotor.parasite_coeff,
            rotor.hover_induced_power)


def build_p4(config: ScenarioConfig, layout: NodeLayout, consts: P4Constants,
             plan0: FlightPlan, lam: float, masr_mode: bool,
             keep_flight_limit: bool = True):
    """One convex trajectory program expanded at plan0."""
    nn = plan0.n_slots
    kk = consts.zeta.shape[0]
    dt = config.slot_duration
    r0, w0, dist0, mu0 = _plan_slacks(plan0, layout, config)
    prog = ConeProgram("p4")
    psi = prog.add_var("psi")
    qx = prog.add_vars("qx", nn + 1)
    qy = prog.add_vars("qy", nn + 1)
    vx = prog.add_vars("vx", nn)
    vy = prog.add_vars("vy", nn)
    mu = prog.add_vars("mu", nn, lb=1e-8)
    tq = prog.add_vars("tq", nn, lb=0.0)    # >= |v|^2
    tc = prog.add_vars("tc", nn, lb=0.0)    # >= |v|^3

    # start/end pinning and per-slot kinematics
    qi = config.uav_start
    prog.add_eq(prog.var(qx[0]), qi[0], "C10/x0")
    prog.add_eq(prog.var(qy[0]), qi[1], "C10/y0")
    prog.add_eq(prog.var(qx[nn]), qi[0], "C10/xN")
    prog.add_eq(prog.var(qy[nn]), qi[1], "C10/yN")
    for i in range(nn):
        prog.add_eq(prog.var(qx[i + 1]) - prog.var(qx[i]) - prog.var(vx[i]) * dt,
                    0.0, f"C11/x[{i}]")
        prog.add_eq(prog.var(qy[i + 1]) - prog.var(qy[i]) - prog.var(vy[i]) * dt,
                    0.0, f"C11/y[{i}]")
        prog.add_soc([config.vmax, prog.var(vx[i]), prog.var(vy[i])], f"C12[{i}]")
        if i + 1 < nn:
            prog.add_soc([config.amax,
                          prog.var(vx[i + 1]) - prog.var(vx[i]),
                          prog.var(vy[i + 1]) - prog.var(vy[i])], f"C13[{i}]")
    for i in range(nn + 1):
        prog.add_soc([config.outer_radius,
                      prog.var(qx[i]) - layout.bs_pos[0],
                      prog.var(qy[i]) - layout.bs_pos[1]], f"C14[{i}]")

    # speed epigraphs and the propulsion-power rows
    for i in range(nn):
        prog.add_sq_bound(prog.var(tq[i]), [prog.var(vx[i]), prog.var(vy[i])],
                          f"p4/speed_sq[{i}]")
        prog.add_pow32(prog.var(tc[i]), prog.var(tq[i]), 1.0, f"p4/speed_cube[{i}]",
                       scale=config.vmax ** 2)

    def power_total(blade_coeff: float) -> LinExpr:
        p0c, bladec, parc, indc = _power_row_coeffs(config, blade_coeff)
        total = LinExpr(const=nn * p0c)
        for i in range(nn):
            total = total + prog.var(tq[i]) * bladec + prog.var(tc[i]) * parc \
                + prog.var(mu[i]) * indc
        return total

    omega = None
    if not masr_mode:
        omega = prog.add_var("omega")
        # epigraph of the velocity-slack power surrogate (blade coefficient 2)
        prog.add_le(power_total(2.0) - prog.var(omega)
                    * (config.n_slots * config.flight_power_limit), 0.0, "p4/omega")
        if keep_flight_limit:
            prog.add_le(prog.var(omega), 1.0, "C9/omega")
    if keep_flight_limit:
        # rigorous upper bound on the exact propulsion power (blade coefficient 3)
        prog.add_le(power_total(3.0),
                    config.n_slots * (config.flight_power_limit - C9_MARGIN),
                    "C9/exact")

    # induced-velocity slack: tangent of mu^2 + |v|^2/nu0^2 at (mu0, v0) >= 1/mu^2
    nu0sq = config.rotor.induced_velocity ** 2
    for i in range(nn):
        zin = prog.add_var(f"_zinv[{i}]", lb=0.0)
        taum = prog.add_var(f"_taumu[{i}]", lb=0.0)
        prog.add_rotated(prog.var(taum), prog.var(mu[i]), [1.0], f"p4/mu_inv[{i}]")
        prog.add_rotated(prog.var(zin), 1.0, [prog.var(taum)], f"p4/mu_inv_sq[{i}]")
        v0 = plan0.v[i]
        affine = prog.var(mu[i]) * (2.0 * mu0[i]) - mu0[i] ** 2 \
            + (prog.var(vx[i]) * (2.0 * v0[0]) + prog.var(vy[i]) * (2.0 * v0[1])
               - float(v0 @ v0)) * (1.0 / nu0sq)
        prog.add_le(prog.var(zin) - affine, 0.0, f"p4/induced[{i}]")

    # per-pair slacks and rate rows
    rvar = {}
    svar = {}
    uvar = {}
    wvar = {}
    def _dist_sq_scale(center):
        reach = config.outer_radius + float(np.linalg.norm(
            np.asarray(center) - np.asarray(layout.bs_pos)))
        return reach ** 2 + config.altitude ** 2

    slot_active = np.nonzero(consts.active.any(axis=0))[0]
    for n in slot_active:
        wvar[n] = prog.add_var(f"w[{n}]", lb=1e-9)
        prog.add_exp_path_atom(prog.var(wvar[n]),
                               (prog.var(qx[n + 1]), prog.var(qy[n + 1])),
                               layout.bs_pos, config.altitude, config.absorption,
                               1.0, tag=f"p4/w_path[{n}]",
                               dist_sq_scale=_dist_sq_scale(layout.bs_pos))
    for k in range(kk):
        for n in np.nonzero(consts.active[k])[0]:
            rvar[k, n] = prog.add_var(f"r[{k},{n}]", lb=1e-9)
            svar[k, n] = prog.add_var(f"s[{k},{n}]", lb=1e-9)
            uvar[k, n] = prog.add_var(f"u[{k},{n}]", lb=0.0)
            ue = layout.ue_positions[k]
            prog.add_exp_path_atom(prog.var(rvar[k, n]),
                                   (prog.var(qx[n + 1]), prog.var(qy[n + 1])), ue,
                                   config.altitude, config.absorption, 1.0,
                                   tag=f"p4/r_path[{k},{n}]",
                                   dist_sq_scale=_dist_sq_scale(ue))
            # lower path-loss chain: tangent of u^2*exp(a_f*u) dominates s,
            # u^2 below the distance tangent
            u0 = dist0[k, n]
            g43 = u0 * math.exp(config.absorption * u0) * (config.absorption * u0 + 2.0)
            c43 = u0 * u0 * math.exp(config.absorption * u0) - g43 * u0
            prog.add_le(prog.var(svar[k, n]) - prog.var(uvar[k, n]) * g43 - c43,
                        0.0, f"p4/s_tangent[{k},{n}]")
            q0 = plan0.q[n + 1]
            const_d = -float(q0 @ q0) + float(ue @ ue) + config.altitude ** 2
            dist_aff = prog.var(qx[n + 1]) * (2.0 * (q0[0] - ue[0])) \
                + prog.var(qy[n + 1]) * (2.0 * (q0[1] - ue[1])) + const_d
            prog.add_rotated(dist_aff, 1.0, [prog.var(uvar[k, n])],
                             f"p4/u_dist[{k},{n}]")

    for k in range(kk):
        lhs = LinExpr()
        for n in np.nonzero(consts.active[k])[0]:
            k0, k1, k2, k3 = (consts.k0[k, n], consts.k1[k, n],
                              consts.k2[k, n], consts.k3[k, n])
            rv, wv, sv = prog.var(rvar[k, n]), prog.var(wvar[n]), prog.var(svar[k, n])
            # relay tangent at (r0, w0)
            ssum = k0 * r0[k, n] + k1 * w0[n]
            gden = ssum * (ssum + 1.0)
            f41c = math.log1p(1.0 / ssum) + (k0 * r0[k, n] + k1 * w0[n]) / gden
            relay = rv * (-k0 / gden) + wv * (-k1 / gden) + f41c
            # wiretap: exact log-sum-exp hypograph minus the tangent of ln(1+k3/w)
            t3 = prog.add_var(f"_t3[{k},{n}]")
            t4 = prog.add_var(f"_t4[{k},{n}]")
            t5 = prog.add_var(f"_t5[{k},{n}]")
            prog.add_exp(prog.var(t3) * -1.0, 1.0, sv * (1.0 / k2),
                         f"p4/tap_s[{k},{n}]")
            prog.add_exp(prog.var(t4) * -1.0, 1.0, wv * (1.0 / k3),
                         f"p4/tap_w[{k},{n}]")
            prog.add_lse(prog.var(t5), [0.0, prog.var(t3), prog.var(t4)],
                         f"p4/tap_lse[{k},{n}]")
            g44 = -k3 / (w0[n] * (w0[n] + k3))
            f44c = math.log1p(k3 / w0[n]) - g44 * w0[n]
            lhs = lhs + (relay - prog.var(t5) + wv * g44 + f44c) \
                * (consts.coef * consts.zeta[k, n])
        prog.add_le(prog.var(psi) - lhs, 0.0, f"p4/rate[{k}]")

    if masr_mode:
        prog.set_objective(prog.var(psi))
    else:
        prog.set_objective(prog.var(psi) - prog.var(omega) * lam)
    handles = {"psi": psi, "omega": omega, "qx": qx, "qy": qy, "vx": vx, "vy": vy,
               "mu": mu, "r": rvar, "s": svar, "u": uvar, "w": wvar}
    return prog, handles


def _extract_plan(rep, handles, config: ScenarioConfig) -> FlightPlan:
    """Rebuild a kinematically exact plan from the solver point: endpoints are
    snapped, velocities re-derived from positions, mu set equality-tight."""
    qx = np.array([rep.value(i) for i in handles["qx"]])
    qy = np.array([rep.value(i) for i in handles["qy"]])
    q = np.stack([qx, qy], axis=1)
    q[0] = config.uav_start
    q[-1] = config.uav_start
    v = np.diff(q, axis=0) / config.slot_duration
    return FlightPlan(q=q, v=v, mu=physics.induced_slack(v, config.rotor))


def _ub_power_norm(plan: FlightPlan, config: ScenarioConfig) -> float:
    """Normalized velocity-slack power surrogate at equality-tight mu."""
    pf = physics.flight_power_upper_bound(plan.v, plan.mu, config.rotor)
    return float(np.mean(pf)) / config.flight_power_limit


def solve_p4_dinkelbach(config: ScenarioConfig, layout: NodeLayout,
                        plan: FlightPlan, alloc: ResourceAllocation,
                        masr_mode=False, keep_flight_limit=True) -> BlockResult:
    """Fractional trajectory driver.

    In MSEE mode each iteration solves the parametric subtractive program at
    the current ratio lam; lam and the stopping functional F are evaluated
    from the solver-consistent pair (high-SNR normalized min-rate,
    velocity-slack power surrogate), which makes the lam trace exactly
    non-decreasing.  The returned plan is the iterate with the best exact
    objective.  In MASR mode the same model runs as a plain SCA loop on psi.
    """
    consts = P4Constants.from_state(config, alloc)

    def rate_min(p: FlightPlan) -> float:
        r, w, _, _ = _plan_slacks(p, layout, config)
        return float(np.min(p4_rate_lower(consts, r, w)))

    plan_cur = plan
    incoming = exact_objective(config, layout, plan, alloc, masr_mode)
    best_plan, best_obj = plan, incoming
    n_prev = rate_min(plan_cur)
    d_prev = _ub_power_norm(plan_cur, config)
    lam = 0.0 if masr_mode else n_prev / d_prev
    trace = [{"iter": -1, "lam": lam, "psi": n_prev, "omega": d_prev,
              "F": math.inf, "exact_obj": incoming}]
    flagged, reason, converged = False, "", False

    for m in range(DINKELBACH_CAP):
        if _debug_tightness():
            from . import bounds
            r0, w0, dist0, mu0 = _plan_slacks(plan_cur, layout, config)
            # mu really is equality-tight: the relaxed row holds with equality
            _assert_tight("p4/induced_identity",
                          mu0 ** 2 + np.sum(plan_cur.v ** 2, axis=1)
                          / config.rotor.induced_velocity ** 2,
                          1.0 / mu0 ** 2)
            # builder's inline tangent coefficients vs the bound library
            for k, n in zip(*np.nonzero(consts.active)):
                k0, k1, k3 = consts.k0[k, n], consts.k1[k, n], consts.k3[k, n]
                ssum = k0 * r0[k, n] + k1 * w0[n]
                gden = ssum * (ssum + 1.0)
                gx, gy = bounds.grad_f41(r0[k, n], w0[n], k0, k1)
                _assert_tight(f"p4/relay_grad[{k},{n}]",
                              (-k0 / gden, -k1 / gden), (gx, gy))
                _assert_tight(f"p4/tap_grad[{k},{n}]",
                              -k3 / (w0[n] * (w0[n] + k3)),
                              bounds.grad_f44(w0[n], k3))
                u0 = dist0[k, n]
                _assert_tight(f"p4/pathloss_grad[{k},{n}]",
                              u0 * math.exp(config.absorption * u0)
                              * (config.absorption * u0 + 2.0),
                              bounds.grad_f43(u0, config.absorption))
        prog, h = build_p4(config, layout, consts, plan_cur, lam, masr_mode,
                           keep_flight_limit)
        rep = prog.solve()
        if rep.status != "optimal":
            flagged, reason = True, f"p4 solve {rep.status} (worst {rep.worst_tag})"
            log.warning(reason)
            break
        plan_new = _extract_plan(rep, h, config)
        n_new = rate_min(plan_new)
        d_new = _ub_power_norm(plan_new, config)
        cand_obj = exact_objective(config, layout, plan_new, alloc, masr_mode)
        if cand_obj > best_obj:
            best_plan, best_obj = plan_new, cand_obj
        if masr_mode:
            improve = n_new - n_prev
            trace.append({"iter": m, "lam": 0.0, "psi": n_new, "omega": 0.0,
                          "F": improve, "exact_obj": cand_obj})
            plan_cur = plan_new
            if abs(improve) <= config.tol_sca_p4 * max(1.0, abs(n_prev)):
                converged = True
                n_prev = n_new
                break
            n_prev = n_new
            continue
        lam_new = n_new / d_new
        f_val = n_prev - lam_new * d_prev
        if lam_new < lam - 1e-8:
            # the stopping functional decides whether this is ordinary terminal
            # solver slack (F = omega*(lam - lam_new) within tolerance, the
            # stopping rule fires and the regressed iterate is simply not
            # committed) or a genuine modeling bug
            if abs(f_val) <= config.tol_dinkelbach:
                converged = True
                trace.append({"iter": m, "lam": lam, "psi": n_prev,
                              "omega": d_prev, "F": f_val,
                              "exact_obj": cand_obj})
                break
            raise DinkelbachError(
                f"fractional parameter regressed: {lam:.12g} -> {lam_new:.12g} "
                f"(F={f_val:.3g})")
        lam_new = max(lam_new, lam)
        trace.append({"iter": m, "lam": lam_new, "psi": n_new, "omega": d_new,
                      "F": f_val, "exact_obj": cand_obj})
        plan_cur, n_prev, d_prev, lam = plan_new, n_new, d_new, lam_new
        if abs(f_val) <= config.tol_dinkelbach:
            converged = True
            break
    if not converged and not flagged:
        flagged = True
        reason = reason or "p4 iteration cap reached before the stopping rule"
    return BlockResult(alloc=alloc, plan=best_plan, trace=trace, flagged=flagged,
                       reason=reason, psi=n_prev, exact_psi=rate_min(best_plan))


# ---------------------------------------------------------------------------
# constraint audit
# ---------------------------------------------------------------------------

POWER_TOL = 1e-6
GEOM_TOL = 1e-4


@dataclass
class AuditReport:
    residuals: dict
    passed: bool
    failures: list

    def __str__(self):
        mark = "PASS" if self.passed else "FAIL"
        worst = ", ".join(f"{k}={v:.2e}" for k, v in sorted(self.residuals.items()))
        return f"[{mark}] {worst}"


def audit_constraints(config: ScenarioConfig, layout: NodeLayout, plan: FlightPlan,
                      alloc: ResourceAllocation, binary_tol=TOL_BINARY) -> AuditReport:
    """Max residual per named constraint family.  Power/scheduling families
    pass at 1e-6, geometry/velocity at 1e-4, the binary budget at binary_tol."""
    z = alloc.zeta
    box = np.maximum(np.maximum(-z, z - 1.0), 0.0)
    res = {}
    res["C1"] = binary_residual(np.clip(z, 0.0, 1.0)) + float(box.max())
    res["C2"] = float(np.maximum(z.sum(axis=0) - 1.0, 0.0).max())
    res["C3"] = max(0.0, float(np.mean(np.sum(z * alloc.p_ue, axis=0)))
                    - config.ue_avg_power)
    res["C4"] = float(np.maximum(np.maximum(alloc.p_ue - config.ue_peak_power,
                                            -alloc.p_ue), 0.0).max())
    res["C5"] = max(0.0, float(np.mean(alloc.p_relay)) - config.relay_avg_power)
    res["C6"] = float(np.maximum(np.maximum(alloc.p_relay - config.relay_peak_power,
                                            -alloc.p_relay), 0.0).max())
    res["C7"] = max(0.0, float(np.mean(alloc.p_jam)) - config.jam_avg_power)
    res["C8"] = float(np.maximum(np.maximum(alloc.p_jam - config.jam_peak_power,
                                            -alloc.p_jam), 0.0).max())
    pf = physics.flight_power(plan.v, config.rotor)
    res["C9"] = max(0.0, float(np.mean(pf)) - config.flight_power_limit)
    qi = np.asarray(config.uav_start)
    res["C10"] = float(max(np.linalg.norm(plan.q[0] - qi),
                           np.linalg.norm(plan.q[-1] - qi)))
    kin = plan.q[1:] - plan.q[:-1] - plan.v * config.slot_duration
    res["C11"] = float(np.linalg.norm(kin, axis=1).max())
    speed = np.linalg.norm(plan.v, axis=1)
    res["C12"] = max(0.0, float(speed.max()) - config.vmax)
    dv = np.linalg.norm(np.diff(plan.v, axis=0), axis=1)
    res["C13"] = max(0.0, float(dv.max()) - config.amax) if dv.size else 0.0
    res["C14"] = max(0.0, float(np.linalg.norm(plan.q - np.asarray(layout.bs_pos),
                                               axis=1).max()) - config.outer_radius)
    mu_exact = physics.induced_slack(plan.v, config.rotor)
    res["mu"] = float(np.abs(plan.mu - mu_exact).max())

    tol = {"C1": binary_tol, "C2": POWER_TOL, "C3": POWER_TOL, "C4": POWER_TOL,
           "C5": POWER_TOL, "C6": POWER_TOL, "C7": POWER_TOL, "C8": POWER_TOL,
           "C9": POWER_TOL, "C10": GEOM_TOL, "C11": GEOM_TOL, "C12": GEOM_TOL,
           "C13": GEOM_TOL, "C14": GEOM_TOL, "mu": GEOM_TOL}
    failures = [name for name, v in res.items() if v > tol[name]]
    return AuditReport(residuals=res, passed=not failures, failures=failures)
