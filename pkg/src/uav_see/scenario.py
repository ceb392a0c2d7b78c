"""Experiment scenarios: physical constants, node geometry, discretization, budgets.

A scenario is a flat JSON document (see `docs/scenario.schema.json` and
`scenarios/` for shipped files).  All dB-valued inputs are converted to linear
scale once, at load time; downstream code works in SI / linear units only.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger("uav_see")


class ScenarioError(ValueError):
    """A scenario file is malformed or violates a validity invariant."""


@dataclass(frozen=True)
class RotorParams:
    """Rotary-wing propulsion constants (see scenario keys rotor_*)."""

    blade_speed: float        # blade angular velocity Omega [rad/s]
    blade_radius: float       # rotor radius [m]
    air_density: float        # rho [kg/m^3]
    solidity: float           # rotor solidity s [-]
    disk_area: float          # rotor disk area A [m^2]
    induced_velocity: float   # mean induced velocity in hover nu0 [m/s]
    drag_ratio: float         # fuselage drag ratio d0 [-]
    hover_profile_power: float  # blade-profile power in hover P0 [W]
    hover_induced_power: float  # induced power in hover Pi [W]

    @property
    def tip_speed_sq(self) -> float:
        return (self.blade_speed * self.blade_radius) ** 2

    @property
    def parasite_coeff(self) -> float:
        # 0.5 * d0 * rho * s * A, multiplies |v|^3
        return 0.5 * self.drag_ratio * self.air_density * self.solidity * self.disk_area


@dataclass(frozen=True)
class ScenarioConfig:
    """Validated, immutable scenario.  Derived linear-scale fields are populated at load."""

    noise_psd_dbm: float      # noise PSD sigma^2 [dBm/Hz]
    carrier_freq: float       # f [Hz]
    bandwidth: float          # B [Hz]
    ref_gain_db: float        # beta0 [dB]
    absorption: float         # molecular absorption a_f [1/m]
    ue_avg_power: float       # p_k^ave [W]
    ue_peak_power: float      # p_k^max [W]
    relay_avg_power: float    # p_u^ave [W]
    relay_peak_power: float   # p_u^max [W]
    jam_avg_power: float      # p_b^ave [W]
    jam_peak_power: float     # p_b^max [W]
    altitude: float           # H [m]
    uav_start: tuple[float, float]   # q_I [m]
    bs_pos: tuple[float, float]      # q_b [m]
    inner_radius: float       # R1 [m]
    outer_radius: float       # R2 [m]
    num_users: int            # K
    flight_power_limit: float  # P_lim [W]
    vmax: float               # max speed [m/s]
    amax: float               # per-slot velocity-change budget [m/s]
    rotor: RotorParams
    mission_time: float       # T [s]
    slot_duration: float      # delta_t [s]
    tol_outer: float = 1e-3
    tol_dinkelbach: float = 1e-4
    tol_sca_p1: float = 1e-4
    tol_sca_p3: float = 1e-4
    tol_sca_p4: float = 1e-4
    penalty_init: float = 1e-3
    penalty_growth: float = 10.0
    penalty_cap: float = 1e6
    rng_seed: int = 0
    # derived (filled in __post_init__)
    n_slots: int = field(init=False)
    beta0_lin: float = field(init=False)
    noise_psd_w: float = field(init=False)
    noise_power: float = field(init=False)

    def __post_init__(self):
        self._validate()
        n = self.mission_time / self.slot_duration
        object.__setattr__(self, "n_slots", int(round(n)))
        object.__setattr__(self, "beta0_lin", 10.0 ** (self.ref_gain_db / 10.0))
        object.__setattr__(self, "noise_psd_w", 10.0 ** ((self.noise_psd_dbm - 30.0) / 10.0))
        object.__setattr__(self, "noise_power", self.bandwidth * self.noise_psd_w)

    def _validate(self):
        def positive(name, v):
            if not (v > 0):
                raise ScenarioError(f"{name} must be strictly positive, got {v}")

        for name in ("carrier_freq", "bandwidth", "ue_avg_power", "ue_peak_power",
                     "relay_avg_power", "relay_peak_power", "jam_avg_power",
                     "jam_peak_power", "altitude", "inner_radius", "outer_radius",
                     "flight_power_limit", "vmax", "amax", "mission_time",
                     "slot_duration"):
            positive(name, getattr(self, name))
        if self.num_users < 1:
            raise ScenarioError(f"num_users must be >= 1, got {self.num_users}")
        if not self.inner_radius < self.outer_radius:
            raise ScenarioError(
                f"inner_radius < outer_radius violated: "
                f"R1={self.inner_radius} >= R2={self.outer_radius}")
        for pk, av in (("ue", "ue"), ("relay", "relay"), ("jam", "jam")):
            if getattr(self, f"{pk}_peak_power") < getattr(self, f"{av}_avg_power"):
                raise ScenarioError(f"{pk}_peak_power < {av}_avg_power")
        n = self.mission_time / self.slot_duration
        if abs(n - round(n)) > 1e-9 or round(n) < 1:
            raise ScenarioError(
                f"mission_time/slot_duration = {n} is not a positive integer; "
                f"adjust T or delta_t (no silent truncation)")
        disp = self.slot_duration * self.vmax
        if disp > self.altitude:
            raise ScenarioError(
                f"per-slot displacement delta_t*vmax = {disp} exceeds altitude H = "
                f"{self.altitude}; the static-channel-per-slot assumption breaks")
        if disp > self.altitude / 2:
            log.warning("per-slot displacement delta_t*vmax = %.3g exceeds H/2 = %.3g; "
                        "discretization is coarse", disp, self.altitude / 2)
        start_off = math.hypot(self.uav_start[0] - self.bs_pos[0],
                               self.uav_start[1] - self.bs_pos[1])
        if start_off > self.outer_radius + 1e-12:
            raise ScenarioError(
                f"||q_I - q_b|| = {start_off:.6g} exceeds outer_radius = "
                f"{self.outer_radius} (start point outside permitted region)")


@dataclass(frozen=True)
class NodeLayout:
    """Fixed ground-node geometry: K user positions and the base-station position."""

    ue_positions: np.ndarray  # (K, 2) [m]
    bs_pos: np.ndarray        # (2,) [m]

    def __post_init__(self):
        self.ue_positions.setflags(write=False)
        self.bs_pos.setflags(write=False)


# scenario JSON key -> constructor argument
_KEYMAP = {
    "noise_psd_dbm_hz": "noise_psd_dbm",
    "carrier_freq_hz": "carrier_freq",
    "bandwidth_hz": "bandwidth",
    "ref_gain_db": "ref_gain_db",
    "absorption_af": "absorption",
    "ue_avg_power_w": "ue_avg_power",
    "ue_peak_power_w": "ue_peak_power",
    "relay_avg_power_w": "relay_avg_power",
    "relay_peak_power_w": "relay_peak_power",
    "jam_avg_power_w": "jam_avg_power",
    "jam_peak_power_w": "jam_peak_power",
    "altitude_m": "altitude",
    "uav_start_m": "uav_start",
    "bs_pos_m": "bs_pos",
    "inner_radius_m": "inner_radius",
    "outer_radius_m": "outer_radius",
    "num_users": "num_users",
    "flight_power_limit_w": "flight_power_limit",
    "vmax_m_s": "vmax",
    "amax_m_s": "amax",
    "mission_time_s": "mission_time",
    "slot_duration_s": "slot_duration",
    "tol_outer": "tol_outer",
    "tol_dinkelbach": "tol_dinkelbach",
    "tol_sca_p1": "tol_sca_p1",
    "tol_sca_p3": "tol_sca_p3",
    "tol_sca_p4": "tol_sca_p4",
    "penalty_init": "penalty_init",
    "penalty_growth": "penalty_growth",
    "penalty_cap": "penalty_cap",
    "rng_seed": "rng_seed",
}

_ROTOR_KEYMAP = {
    "rotor_speed_rad_s": "blade_speed",
    "rotor_radius_m": "blade_radius",
    "air_density_kg_m3": "air_density",
    "rotor_solidity": "solidity",
    "rotor_disk_area_m2": "disk_area",
    "induced_velocity_m_s": "induced_velocity",
    "fuselage_drag_ratio": "drag_ratio",
    "blade_profile_power_w": "hover_profile_power",
    "induced_power_w": "hover_induced_power",
}

_OPTIONAL = {"tol_outer", "tol_dinkelbach", "tol_sca_p1", "tol_sca_p3", "tol_sca_p4",
             "penalty_init", "penalty_growth", "penalty_cap", "rng_seed"}


def config_from_dict(doc: dict) -> ScenarioConfig:
    """Build a validated config from a parsed scenario document."""
    kwargs = {}
    for key, arg in _KEYMAP.items():
        if key in doc:
            v = doc[key]
            kwargs[arg] = tuple(float(x) for x in v) if arg in ("uav_start", "bs_pos") else v
        elif arg not in _OPTIONAL:
            raise ScenarioError(f"missing scenario field: {key}")
    rotor_kwargs = {}
    for key, arg in _ROTOR_KEYMAP.items():
        if key not in doc:
            raise ScenarioError(f"missing scenario field: {key}")
        rotor_kwargs[arg] = float(doc[key])
    kwargs["rotor"] = RotorParams(**rotor_kwargs)
    known = set(_KEYMAP) | set(_ROTOR_KEYMAP)
    unknown = set(doc) - known
    if unknown:
        raise ScenarioError(f"unknown scenario fields: {sorted(unknown)}")
    return ScenarioConfig(**kwargs)


def config_to_dict(config: ScenarioConfig) -> dict:
    """Inverse of `config_from_dict`; round-trips exactly."""
    doc = {}
    for key, arg in _KEYMAP.items():
        v = getattr(config, arg)
        doc[key] = list(v) if isinstance(v, tuple) else v
    for key, arg in _ROTOR_KEYMAP.items():
        doc[key] = getattr(config.rotor, arg)
    return doc


def load_scenario(path) -> ScenarioConfig:
    """Load and validate a scenario JSON file."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"scenario file is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ScenarioError("scenario file must contain a JSON object")
    return config_from_dict(doc)


def save_scenario(config: ScenarioConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(config_to_dict(config), fh, indent=2, sort_keys=True)
        fh.write("\n")


def place_users(config: ScenarioConfig) -> NodeLayout:
    """Sample K user positions uniformly (by area) on the annulus [R1, R2] around the BS.

    Radius density is proportional to r, so positions are uniform on the region;
    the draw is fully determined by config.rng_seed.
    """
    rng = np.random.default_rng(config.rng_seed)
    k = config.num_users
    theta = rng.uniform(0.0, 2.0 * np.pi, size=k)
    u = rng.uniform(0.0, 1.0, size=k)
    r1sq, r2sq = config.inner_radius ** 2, config.outer_radius ** 2
    radius = np.sqrt(r1sq + u * (r2sq - r1sq))
    pos = np.stack([radius * np.cos(theta), radius * np.sin(theta)], axis=1)
    pos = pos + np.asarray(config.bs_pos)
    return NodeLayout(ue_positions=pos, bs_pos=np.asarray(config.bs_pos, dtype=float))


def replace(config: ScenarioConfig, **changes) -> ScenarioConfig:
    """Return a re-validated copy of the config with the given fields changed."""
    return dataclasses.replace(config, **changes)
