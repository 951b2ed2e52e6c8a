"""Scenario configuration: a flat INI-style text format and its validated
in-memory form. Every run is fully described by one ScenarioConfig plus the
seed it carries."""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field

import numpy as np

from barlift.control import FollowerGains, ForceBox, LeaderGains, LowLevelGains
from barlift.model import PayloadParams, UavParams, default_allocation
from barlift.planning import Waypoint


@dataclass(frozen=True)
class NoiseConfig:
    """Sensor noise variances (true measurement corruption, not filter
    tuning; the filters keep their fixed default tuning)."""

    uav_pos_var: float = 0.0
    uav_vel_var: float = 0.0
    uav_att_var: float = 0.0
    uav_gyro_var: float = 0.0
    uav_accel_var: float = 0.0
    payload_accel_var: float = 0.0
    payload_yaw_var: float = 0.0
    payload_gyro_var: float = 0.0

    def __post_init__(self) -> None:
        for name in self.__dataclass_fields__:
            if getattr(self, name) < 0.0:
                raise ValueError(f"NoiseConfig.{name} must be nonnegative")


@dataclass(frozen=True)
class FilterTuning:
    """Estimator tuning: the noise densities the filters assume and the
    sigma-point spread. Distinct from NoiseConfig, which corrupts the
    actual measurements; these only shape the Kalman gains."""

    vehicle_pos_var: float = 1e-4
    vehicle_vel_var: float = 1e-4
    vehicle_att_var: float = 1e-6
    vehicle_gyro_var: float = 1e-4
    vehicle_accel_var: float = 1.0
    vehicle_force_walk: float = 1e-2
    payload_pos_var: float = 1e-4
    payload_accel_var: float = 1.0
    payload_force_walk: float = 1e-3
    alpha: float = 0.1
    beta: float = 2.0
    kappa: float = 0.0

    def __post_init__(self) -> None:
        for name in self.__dataclass_fields__:
            if name in ("alpha", "beta", "kappa"):
                continue
            if getattr(self, name) <= 0.0:
                raise ValueError(f"FilterTuning.{name} must be positive")
        if self.alpha <= 0.0:
            raise ValueError("FilterTuning.alpha must be positive")


FIDELITIES = ("force", "rotor")
FOLLOWER_MODES = ("active", "ideal", "none")
FEEDBACKS = ("ideal", "estimated")


@dataclass
class ScenarioConfig:
    duration: float
    name: str = "scenario"
    dt: float = 1e-3
    control_hz: float = 100.0
    seed: int = 0
    fidelity: str = "force"
    follower_mode: str = "active"
    feedback: str = "ideal"
    payload: PayloadParams = field(default_factory=PayloadParams)
    uav: UavParams = field(default_factory=UavParams)
    leader_gains: LeaderGains = field(default_factory=LeaderGains)
    follower_gains: FollowerGains = field(default_factory=FollowerGains)
    low_level: LowLevelGains = field(default_factory=LowLevelGains)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    filter: FilterTuning = field(default_factory=FilterTuning)
    sigma_L: float = 0.0  # leader force-disturbance variance [N^2]
    sigma_F: float = 0.0  # follower force-disturbance variance [N^2]
    waypoints: tuple[Waypoint, ...] | None = None
    grid_file: str | None = None
    grid_start: tuple[float, float, float] | None = None
    grid_goal: tuple[float, float, float] | None = None
    plan_speed: float = 0.5
    plan_rho_min: float = 1.0
    switch_t: float | None = None
    switch_points: tuple[Waypoint, ...] | None = None  # times relative to switch_t
    saturation: ForceBox | None = None

    def __post_init__(self) -> None:
        if not 0.0 < self.dt <= 0.02:
            raise ValueError("dt must lie in (0, 0.02]")
        if self.duration < 0.0:
            raise ValueError("duration must be nonnegative")
        if self.control_hz <= 0.0:
            raise ValueError("control_hz must be positive")
        spt = 1.0 / (self.dt * self.control_hz)
        if spt < 1.0 - 1e-9 or abs(spt - round(spt)) > 1e-9:
            raise ValueError("control period must be an integer number of dt steps")
        if self.fidelity not in FIDELITIES:
            raise ValueError(f"fidelity must be one of {FIDELITIES}")
        if self.follower_mode not in FOLLOWER_MODES:
            raise ValueError(f"follower_mode must be one of {FOLLOWER_MODES}")
        if self.feedback not in FEEDBACKS:
            raise ValueError(f"feedback must be one of {FEEDBACKS}")
        if self.sigma_L < 0.0 or self.sigma_F < 0.0:
            raise ValueError("disturbance variances must be nonnegative")
        has_wps = self.waypoints is not None
        has_grid = self.grid_file is not None
        if has_wps == has_grid:
            raise ValueError("provide exactly one of waypoints or a grid route")
        if has_wps:
            if len(self.waypoints) < 2:
                raise ValueError("need at least two waypoints")
            ts = [w.t for w in self.waypoints]
            if any(b <= a for a, b in zip(ts, ts[1:])):
                raise ValueError("waypoint times must be strictly increasing")
        if has_grid and (self.grid_start is None or self.grid_goal is None):
            raise ValueError("grid route needs start and goal poses")
        if (self.switch_t is None) != (self.switch_points is None):
            raise ValueError("switch needs both a time and waypoints")
        if self.switch_t is not None:
            if not 0.0 < self.switch_t < self.duration:
                raise ValueError("switch_t must fall inside the run")
            if len(self.switch_points) < 1:
                raise ValueError("switch needs at least one waypoint")

    @property
    def steps_per_tick(self) -> int:
        return int(round(1.0 / (self.dt * self.control_hz)))

    @property
    def n_ticks(self) -> int:
        return int(round(self.duration * self.control_hz))


def _parse_waypoints(text: str) -> tuple[Waypoint, ...]:
    out = []
    for line in text.strip().splitlines():
        parts = line.split()
        if len(parts) != 3:
            raise ValueError(f"waypoint line needs 'x y t', got: {line!r}")
        out.append(Waypoint(float(parts[0]), float(parts[1]), float(parts[2])))
    return tuple(out)


def _parse_pose(text: str) -> tuple[float, float, float]:
    parts = text.split()
    if len(parts) != 3:
        raise ValueError(f"pose needs 'x y theta', got: {text!r}")
    return float(parts[0]), float(parts[1]), float(parts[2])


def parse_scenario(path: str) -> ScenarioConfig:
    """Load a scenario file (INI sections, documented in the README)."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    read = cp.read(path)
    if not read:
        raise ValueError(f"cannot read scenario file: {path}")

    def fget(section: str, key: str, default: float) -> float:
        return cp.getfloat(section, key, fallback=default)

    sc = cp["scenario"] if cp.has_section("scenario") else {}
    kwargs: dict = dict(
        name=sc.get("name", "scenario"),
        duration=float(sc.get("duration", "0")),
        dt=float(sc.get("dt", "1e-3")),
        control_hz=float(sc.get("control_hz", "100")),
        seed=int(sc.get("seed", "0")),
        fidelity=sc.get("fidelity", "force"),
        follower_mode=sc.get("follower_mode", "active"),
        feedback=sc.get("feedback", "ideal"),
    )

    kwargs["payload"] = PayloadParams(
        m_p=fget("payload", "m_p", 0.5),
        I_zz=fget("payload", "I_zz", 0.083),
        L=fget("payload", "L", 1.0),
        l1=fget("payload", "l1", 0.18),
        l2=fget("payload", "l2", 0.18),
    )
    arm = fget("uav", "arm", 0.17)
    k_m = fget("uav", "k_m", 0.016)
    kwargs["uav"] = UavParams(
        m=fget("uav", "m", 0.72),
        J=np.diag(
            [fget("uav", "jx", 0.007), fget("uav", "jy", 0.007), fget("uav", "jz", 0.012)]
        ),
        n=4,
        k_i=np.full(4, fget("uav", "k_i", 8.54858e-6)),
        Gamma=default_allocation(arm, k_m),
    )
    kwargs["leader_gains"] = LeaderGains(
        k1=fget("leader_gains", "k1", 3.0),
        k2=fget("leader_gains", "k2", 1.0),
        k3=fget("leader_gains", "k3", 5.0),
        kv=fget("leader_gains", "kv", 5.0),
        k_omega=fget("leader_gains", "k_omega", 11.0),
    )
    kwargs["follower_gains"] = FollowerGains(
        kF1=fget("follower_gains", "kF1", 1.0),
        kF2=fget("follower_gains", "kF2", 3.0),
        Md=fget("follower_gains", "Md", 1.5),
        bd=fget("follower_gains", "bd", 2.0),
        kd=fget("follower_gains", "kd", 13.6),
        F_lower=fget("follower_gains", "F_lower", 0.2),
        F_upper=fget("follower_gains", "F_upper", 0.3),
    )
    kwargs["low_level"] = LowLevelGains(
        k_e=fget("low_level", "k_e", 0.8),
        k_Omega=fget("low_level", "k_Omega", 0.12),
    )
    kwargs["noise"] = NoiseConfig(
        uav_pos_var=fget("noise", "uav_pos_var", 0.0),
        uav_vel_var=fget("noise", "uav_vel_var", 0.0),
        uav_att_var=fget("noise", "uav_att_var", 0.0),
        uav_gyro_var=fget("noise", "uav_gyro_var", 0.0),
        uav_accel_var=fget("noise", "uav_accel_var", 0.0),
        payload_accel_var=fget("noise", "payload_accel_var", 0.0),
        payload_yaw_var=fget("noise", "payload_yaw_var", 0.0),
        payload_gyro_var=fget("noise", "payload_gyro_var", 0.0),
    )
    kwargs["sigma_L"] = fget("disturbance", "sigma_L", 0.0)
    kwargs["sigma_F"] = fget("disturbance", "sigma_F", 0.0)

    ft_defaults = FilterTuning()
    kwargs["filter"] = FilterTuning(
        **{
            name: fget("filter", name, getattr(ft_defaults, name))
            for name in FilterTuning.__dataclass_fields__
        }
    )

    if cp.has_section("saturation") and cp.getboolean("saturation", "enabled", fallback=True):
        kwargs["saturation"] = ForceBox(
            x_min=fget("saturation", "x_min", -2.6),
            x_max=fget("saturation", "x_max", 2.0),
            y_min=fget("saturation", "y_min", -7.0),
            y_max=fget("saturation", "y_max", 10.0),
        )

    if cp.has_section("waypoints"):
        kwargs["waypoints"] = _parse_waypoints(cp.get("waypoints", "points"))
    if cp.has_section("grid"):
        gf = cp.get("grid", "file")
        if not os.path.isabs(gf):
            # grid paths travel with the scenario file, not the CWD
            gf = os.path.join(os.path.dirname(os.path.abspath(path)), gf)
        kwargs["grid_file"] = gf
        kwargs["grid_start"] = _parse_pose(cp.get("grid", "start"))
        kwargs["grid_goal"] = _parse_pose(cp.get("grid", "goal"))
        kwargs["plan_speed"] = fget("grid", "speed", 0.5)
        kwargs["plan_rho_min"] = fget("grid", "rho_min", 1.0)
    if cp.has_section("switch"):
        kwargs["switch_t"] = fget("switch", "t", 0.0)
        kwargs["switch_points"] = _parse_waypoints(cp.get("switch", "points"))

    return ScenarioConfig(**kwargs)
