"""Closed-form link physics: THz channel gains, relay/wiretap rates, secrecy
metrics, and the rotary-wing propulsion power model.

Conventions
-----------
* Trajectories carry N+1 position samples q[0..N] (q[0] = q[N] = start point)
  and N per-slot velocities with q[i+1] = q[i] + v[i]*delta_t.  Slot n in
  1..N uses position q[n] and velocity v[n-1] (0-indexed arrays).
* Rates are in bps with the bandwidth as an explicit factor.  Optimizers work
  with normalized values (rate/B, power/P_lim); reports convert to
  Mbits/Joule.
* The unclipped secrecy rate (positive part removed) is the optimization
  objective; the clipped one is the reported metric.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scenario import NodeLayout, RotorParams, ScenarioConfig

# Below this time-sharing factor a slot is treated as unscheduled when
# recovering per-slot powers p = p_tilde / zeta (avoids 0/0).
ZETA_FLOOR = 1e-4


@dataclass(frozen=True)
class FlightPlan:
    """UAV horizontal path: positions q (N+1,2), velocities v (N,2), and the
    induced-velocity slack mu (N,), equality-tight unless mid-optimization."""

    q: np.ndarray
    v: np.ndarray
    mu: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        v = np.asarray(self.v, dtype=float)
        mu = np.asarray(self.mu, dtype=float)
        if q.ndim != 2 or q.shape[1] != 2 or v.shape != (q.shape[0] - 1, 2):
            raise ValueError(f"inconsistent plan shapes q{q.shape} v{v.shape}")
        if mu.shape != (v.shape[0],):
            raise ValueError(f"mu shape {mu.shape} != ({v.shape[0]},)")
        for a, name in ((q, "q"), (v, "v"), (mu, "mu")):
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @property
    def n_slots(self) -> int:
        return self.v.shape[0]

    @property
    def slot_positions(self) -> np.ndarray:
        """Position used by slot n = 1..N, i.e. q[1:]."""
        return self.q[1:]


@dataclass(frozen=True)
class ResourceAllocation:
    """Per-slot network resources.

    zeta is the (possibly relaxed) scheduling matrix in [0,1]; p_tilde is the
    product zeta*p_ue actually carried through the optimizers; p_ue is the
    recovered per-slot UE transmit power.
    """

    zeta: np.ndarray      # (K, N)
    p_tilde: np.ndarray   # (K, N) [W]
    p_ue: np.ndarray      # (K, N) [W]
    p_relay: np.ndarray   # (N,) [W]
    p_jam: np.ndarray     # (N,) [W]

    def __post_init__(self):
        k, n = np.asarray(self.zeta).shape
        for name in ("zeta", "p_tilde", "p_ue", "p_relay", "p_jam"):
            a = np.asarray(getattr(self, name), dtype=float)
            want = (n,) if name in ("p_relay", "p_jam") else (k, n)
            if a.shape != want:
                raise ValueError(f"{name} shape {a.shape} != {want}")
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @classmethod
    def from_tilde(cls, zeta, p_tilde, p_relay, p_jam) -> "ResourceAllocation":
        """Recover p_ue = p_tilde/zeta where zeta >= ZETA_FLOOR, else 0."""
        zeta = np.asarray(zeta, dtype=float)
        p_tilde = np.asarray(p_tilde, dtype=float)
        p_ue = np.where(zeta >= ZETA_FLOOR, p_tilde / np.maximum(zeta, ZETA_FLOOR), 0.0)
        return cls(zeta=zeta, p_tilde=p_tilde, p_ue=p_ue,
                   p_relay=np.asarray(p_relay, dtype=float),
                   p_jam=np.asarray(p_jam, dtype=float))

    @property
    def num_users(self) -> int:
        return self.zeta.shape[0]

    @property
    def n_slots(self) -> int:
        return self.zeta.shape[1]


@dataclass(frozen=True)
class LinkGains:
    """Noise-normalized channel power gains [1/W]: g = h/N0."""

    g_ue: np.ndarray   # (K, N) UE k -> UAV at slot n
    g_bs: np.ndarray   # (N,) BS <-> UAV at slot n

    def __post_init__(self):
        for name in ("g_ue", "g_bs"):
            a = np.asarray(getattr(self, name), dtype=float)
            if not np.all(np.isfinite(a)) or np.any(a <= 0):
                raise ValueError(f"{name} must be strictly positive and finite")
            a.setflags(write=False)
            object.__setattr__(self, name, a)


def channel_gain(q_uav, q_node, altitude, beta0_lin, absorption):
    """THz channel power gain beta0*exp(-a_f*d)/d^2 at 3D distance d.

    Broadcasts over leading dimensions of q_uav/q_node.
    """
    q_uav = np.asarray(q_uav, dtype=float)
    q_node = np.asarray(q_node, dtype=float)
    hsq = np.sum((q_uav - q_node) ** 2, axis=-1)
    d = np.sqrt(hsq + altitude ** 2)
    return beta0_lin * np.exp(-absorption * d) / (d * d)


def path_loss_normalized(q_uav, q_node, altitude, absorption):
    """d^2 * exp(a_f*d): the scaled inverse gain used as slack variables."""
    q_uav = np.asarray(q_uav, dtype=float)
    q_node = np.asarray(q_node, dtype=float)
    hsq = np.sum((q_uav - q_node) ** 2, axis=-1)
    d = np.sqrt(hsq + altitude ** 2)
    return d * d * np.exp(absorption * d)


def link_gains(plan: FlightPlan, layout: NodeLayout, config: ScenarioConfig) -> LinkGains:
    """Noise-normalized gains for every (user, slot) pair and every slot's BS link."""
    pos = plan.slot_positions  # (N, 2)
    h_ue = channel_gain(pos[None, :, :], layout.ue_positions[:, None, :],
                        config.altitude, config.beta0_lin, config.absorption)
    h_bs = channel_gain(pos, layout.bs_pos, config.altitude,
                        config.beta0_lin, config.absorption)
    return LinkGains(g_ue=h_ue / config.noise_power, g_bs=h_bs / config.noise_power)


def rate_matrices(gains: LinkGains, alloc: ResourceAllocation, bandwidth: float):
    """(relay, wiretap) rate matrices in bps, shape (K, N) each."""
    pk_g = alloc.p_ue * gains.g_ue                    # (K, N)
    pu_g = alloc.p_relay * gains.g_bs                 # (N,)
    pb_g = alloc.p_jam * gains.g_bs                   # (N,)
    sinr_relay = pk_g * pu_g / ((pu_g + pb_g) + pk_g + 1.0)
    sinr_tap = pk_g / (pb_g + 1.0)
    relay = alloc.zeta * bandwidth * np.log2(1.0 + sinr_relay)
    wiretap = alloc.zeta * bandwidth * np.log2(1.0 + sinr_tap)
    return relay, wiretap


def link_rates(gains: LinkGains, alloc: ResourceAllocation, bandwidth: float,
               n: int, k: int):
    """End-to-end relay rate and wiretap rate [bps] of user k at slot n."""
    relay, wiretap = rate_matrices(gains, alloc, bandwidth)
    return float(relay[k, n]), float(wiretap[k, n])


def average_secrecy_rate(gains: LinkGains, alloc: ResourceAllocation,
                         bandwidth: float, k: int, clipped: bool = True) -> float:
    """Per-user average secrecy rate [bps]: mean over slots of half the
    (relay - wiretap) rate gap, clipped at zero unless clipped=False."""
    relay, wiretap = rate_matrices(gains, alloc, bandwidth)
    gap = 0.5 * (relay[k] - wiretap[k])
    if clipped:
        gap = np.maximum(gap, 0.0)
    return float(np.mean(gap))


def flight_power(v, rotor: RotorParams):
    """Rotary-wing propulsion power [W] at velocity v (2-vector or (N,2))."""
    v = np.asarray(v, dtype=float)
    speed_sq = np.sum(v * v, axis=-1)
    return flight_power_from_speed_sq(speed_sq, rotor)


def flight_power_from_speed_sq(speed_sq, rotor: RotorParams):
    speed_sq = np.asarray(speed_sq, dtype=float)
    blade = rotor.hover_profile_power * (1.0 + 3.0 * speed_sq / rotor.tip_speed_sq)
    parasite = rotor.parasite_coeff * speed_sq ** 1.5
    induced = rotor.hover_induced_power * induced_slack_from_speed_sq(speed_sq, rotor)
    return blade + parasite + induced


def induced_slack(v, rotor: RotorParams):
    """mu(v) = (sqrt(1 + |v|^4/(4 nu0^4)) - |v|^2/(2 nu0^2))^(1/2), in (0, 1]."""
    v = np.asarray(v, dtype=float)
    speed_sq = np.sum(v * v, axis=-1)
    return induced_slack_from_speed_sq(speed_sq, rotor)


def induced_slack_from_speed_sq(speed_sq, rotor: RotorParams):
    nu0sq = rotor.induced_velocity ** 2
    x = np.asarray(speed_sq, dtype=float) / (2.0 * nu0sq)
    return np.sqrt(np.sqrt(1.0 + x * x) - x)


def flight_power_upper_bound(v, mu, rotor: RotorParams):
    """Velocity-slack propulsion surrogate [W]; affine in mu, convex in v.

    Uses the blade-profile coefficient 2 (vs 3 in the exact model), so with
    equality-tight mu it under-estimates the exact power by
    P0*|v|^2/(Omega*R)^2; the sampled sign relationship is pinned by tests
    rather than assumed.
    """
    mu = np.asarray(mu, dtype=float)
    if np.any(mu <= 0):
        raise ValueError("mu must be strictly positive")
    v = np.asarray(v, dtype=float)
    speed_sq = np.sum(v * v, axis=-1)
    blade = rotor.hover_profile_power * (1.0 + 2.0 * speed_sq / rotor.tip_speed_sq)
    parasite = rotor.parasite_coeff * speed_sq ** 1.5
    return blade + parasite + rotor.hover_induced_power * mu


@dataclass(frozen=True)
class SeeMetrics:
    """Secrecy/energy figures of one (plan, allocation) pair."""

    asr: np.ndarray             # (K,) clipped average secrecy rate [bps]
    asr_unclipped: np.ndarray   # (K,) unclipped [bps]
    see: np.ndarray             # (K,) clipped SEE [bits/J]
    see_unclipped: np.ndarray   # (K,) [bits/J]
    msee: float                 # min over users, clipped [bits/J]
    msee_unclipped: float       # [bits/J]
    masr: float                 # min over users, clipped [bps]
    afpc: float                 # average flight power [W]
    afpcr: float                # afpc / flight power limit
    msee_norm: float            # clipped, numerator/B and denominator/P_lim
    msee_norm_unclipped: float
    masr_norm: float            # masr / B
    secure_bits: np.ndarray     # (K,) achievable secure bits over the mission

    @property
    def msee_mbit_per_joule(self) -> float:
        return self.msee / 1e6

    @property
    def masr_mbps(self) -> float:
        return self.masr / 1e6


def see_metrics(gains: LinkGains, alloc: ResourceAllocation, plan: FlightPlan,
                config: ScenarioConfig) -> SeeMetrics:
    """Evaluate all reported metrics from exact closed forms."""
    relay, wiretap = rate_matrices(gains, alloc, config.bandwidth)
    gap = 0.5 * (relay - wiretap)
    asr = np.mean(np.maximum(gap, 0.0), axis=1)
    asr_un = np.mean(gap, axis=1)
    pf = flight_power(plan.v, config.rotor)
    afpc = float(np.mean(pf))
    see = asr / afpc
    see_un = asr_un / afpc
    norm = config.flight_power_limit / (config.bandwidth * afpc)
    return SeeMetrics(
        asr=asr, asr_unclipped=asr_un, see=see, see_unclipped=see_un,
        msee=float(np.min(see)), msee_unclipped=float(np.min(see_un)),
        masr=float(np.min(asr)), afpc=afpc,
        afpcr=afpc / config.flight_power_limit,
        msee_norm=float(np.min(asr)) * norm,
        msee_norm_unclipped=float(np.min(asr_un)) * norm,
        masr_norm=float(np.min(asr)) / config.bandwidth,
        secure_bits=asr * config.mission_time,
    )


def objective_value(gains: LinkGains, alloc: ResourceAllocation, plan: FlightPlan,
                    config: ScenarioConfig, masr_mode: bool = False) -> float:
    """The exact scalar the optimizers maximize: normalized unclipped MSEE
    (or unclipped min-ASR / B when masr_mode is set)."""
    m = see_metrics(gains, alloc, plan, config)
    if masr_mode:
        return float(np.min(m.asr_unclipped)) / config.bandwidth
    return m.msee_norm_unclipped
