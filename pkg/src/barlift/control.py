"""Controllers: payload tracking (leader), force/impedance reaction
(follower), the hysteresis trigger between the follower's two longitudinal
modes, and the per-vehicle geometric attitude layer with rotor allocation.

Leader and follower share no state at all; the follower reads only its own
estimates, which is the communication-free premise of the architecture.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from barlift.model import (
    G,
    E3,
    PayloadParams,
    ReferenceSample,
    TrackingError,
    UavParams,
    UavState,
    error_kinematics,
)


@dataclass(frozen=True)
class LeaderGains:
    """Kinematic (k1, k2, k3) and dynamic (kv, k_omega) tracking gains."""

    k1: float = 3.0
    k2: float = 1.0
    k3: float = 5.0
    kv: float = 5.0
    k_omega: float = 11.0

    def __post_init__(self) -> None:
        for name in ("k1", "k2", "k3", "kv", "k_omega"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"LeaderGains.{name} must be positive")


@dataclass(frozen=True)
class FollowerGains:
    """Longitudinal gains, impedance parameters, and trigger thresholds."""

    kF1: float = 1.0
    kF2: float = 3.0
    Md: float = 1.5  # virtual inertia [kg]
    bd: float = 2.0  # virtual damping [N s/m]
    kd: float = 13.6  # virtual stiffness [N/m]
    F_lower: float = 0.2  # trigger release threshold [N]
    F_upper: float = 0.3  # trigger engage threshold [N]

    def __post_init__(self) -> None:
        for name in ("kF1", "kF2", "Md", "bd", "kd", "F_lower", "F_upper"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"FollowerGains.{name} must be positive")
        if self.F_lower >= self.F_upper:
            raise ValueError("F_lower must be below F_upper")


@dataclass(frozen=True)
class LowLevelGains:
    """Geometric attitude controller gains."""

    k_e: float = 0.8
    k_Omega: float = 0.12

    def __post_init__(self) -> None:
        if self.k_e <= 0.0 or self.k_Omega <= 0.0:
            raise ValueError("low-level gains must be positive")


@dataclass(frozen=True)
class ForceBox:
    """Saturation box for the leader's body-frame force commands [N]."""

    x_min: float = -2.6
    x_max: float = 2.0
    y_min: float = -7.0
    y_max: float = 10.0

    def __post_init__(self) -> None:
        if self.x_min >= self.x_max or self.y_min >= self.y_max:
            raise ValueError("saturation box must have positive extent")


class TriggerMode(enum.IntEnum):
    DIS = 0  # position hold
    EN = 1  # force following


@dataclass(frozen=True)
class TriggerState:
    mode: TriggerMode = TriggerMode.DIS
    p_d_x: float = 0.0  # latched longitudinal position [m]
    events: int = 0  # count of EN engagements


@dataclass
class ControlWrench:
    T: float  # collective thrust [N], nonnegative
    M: np.ndarray  # body moment [N m]


# ---------------------------------------------------------------------------
# leader side


def kinematic_control(
    err: TrackingError, ref: ReferenceSample, g: LeaderGains
) -> tuple[float, float]:
    """Unicycle tracking law: desired (v_d, omega_d) for the payload point c2."""
    v_d = ref.v_r * math.cos(err.theta_e) + g.k1 * err.x_e
    omega_d = ref.omega_r + ref.v_r * g.k2 * err.y_e + g.k3 * math.sin(err.theta_e)
    return v_d, omega_d


def kinematic_control_rates(
    err: TrackingError, ref: ReferenceSample, v: float, omega: float, g: LeaderGains
) -> tuple[float, float, float, float]:
    """(v_d, omega_d) plus their exact time derivatives.

    The derivatives chain through the open-loop error kinematics and the
    analytic reference rates, so no numerical differentiation touches the
    feedforward path.
    """
    v_d, omega_d = kinematic_control(err, ref, g)
    xe_dot, ye_dot, te_dot = error_kinematics(err, v, omega, ref)
    c, s = math.cos(err.theta_e), math.sin(err.theta_e)
    vdot_d = ref.vdot_r * c - ref.v_r * s * te_dot + g.k1 * xe_dot
    omegadot_d = (
        ref.omegadot_r
        + ref.vdot_r * g.k2 * err.y_e
        + ref.v_r * g.k2 * ye_dot
        + g.k3 * c * te_dot
    )
    return v_d, omega_d, vdot_d, omegadot_d


def leader_force_control(
    err: TrackingError,
    omega: float,
    vdot_d: float,
    omegadot_d: float,
    F_hat_F_y: float,
    params: PayloadParams,
    g: LeaderGains,
) -> tuple[float, float]:
    """Backstepping force command in the payload body frame.

    Substituted into the payload dynamics this yields the error system
    eta1' = -kv eta1 - x_e and eta2' = -k_omega eta2 - sin(theta_e)/k2
    (exactly, when the follower's transmitted y-force matches its estimate
    and the longitudinal follower force is zero).
    """
    f_x = params.m_p * (vdot_d + err.x_e + g.kv * err.eta1) - params.m_p * (
        params.L / 2.0
    ) * omega * omega
    f_y = (2.0 * params.I_zz / params.L) * (
        omegadot_d + g.k_omega * err.eta2 + math.sin(err.theta_e) / g.k2
    ) + F_hat_F_y
    return f_x, f_y


def saturate_forces(
    f_x: float, f_y: float, box: ForceBox
) -> tuple[float, float, bool, bool]:
    """Clip the leader command to the actuator box; flags report clipping."""
    cx = min(max(f_x, box.x_min), box.x_max)
    cy = min(max(f_y, box.y_min), box.y_max)
    return cx, cy, cx != f_x, cy != f_y


# ---------------------------------------------------------------------------
# follower side


def trigger_update(
    state: TriggerState, F_hat_F_x: float, p_F_x: float, g: FollowerGains
) -> TriggerState:
    """Two-threshold hysteresis between force following and position hold.

    Engages at |F| >= F_upper, releases at |F| <= F_lower; the release
    instant latches the hold position. The gap between thresholds rules out
    chattering by construction.
    """
    mag = abs(F_hat_F_x)
    if state.mode == TriggerMode.DIS:
        if mag >= g.F_upper:
            return TriggerState(TriggerMode.EN, state.p_d_x, state.events + 1)
        return state
    if mag <= g.F_lower:
        return TriggerState(TriggerMode.DIS, p_F_x, state.events)
    return state


def follower_longitudinal_control(
    state: TriggerState,
    v_hat_F_x: float,
    F_hat_F_x: float,
    p_F_x: float,
    g: FollowerGains,
) -> float:
    """Longitudinal force command: follow the estimated cable force while
    engaged, hold the latched position while disengaged."""
    if state.mode == TriggerMode.EN:
        return g.kF1 * v_hat_F_x + F_hat_F_x
    return g.kF2 * (state.p_d_x - p_F_x)


def estimate_transverse_offset(F_hat_F_body: np.ndarray, params: PayloadParams) -> float:
    """Transverse cable-swing offset from the force estimate.

    The cable force acts along the cable, so l2 sin(theta_y) is just l2
    times the transverse direction cosine of the estimate. Reading the
    tilt from the magnitude ratio cos(theta_y) = (m_p g / 2)/|F| instead
    is the same geometry but has unbounded slope at the upright cable, so
    estimate noise near hover comes out as offset jitter.
    """
    F = np.asarray(F_hat_F_body, dtype=float)
    norm = float(np.linalg.norm(F))
    if norm < 1e-9:
        return 0.0
    return params.l2 * float(F[1]) / norm


def follower_transverse_control(
    y: float,
    ydot: float,
    v_hat_F_x: float,
    rho: float,
    m_f: float,
    g: FollowerGains,
    params: PayloadParams,
) -> float:
    """Impedance law for the transverse cable swing.

    rho is the signed curvature radius of the payload's path (positive for
    left turns); straight running is rho = inf or any |rho| > 1e4 m. The
    closed loop over the follower's transverse dynamics renders
    Md e'' + bd e' + kd e = 0 about the curvature-matched lean offset.
    """
    if rho == 0.0:
        raise ValueError("curvature radius must be nonzero")
    if math.isfinite(rho) and abs(rho) <= 1e4:
        a_n = v_hat_F_x * v_hat_F_x / rho
    else:
        a_n = 0.0
    f_n = 0.5 * params.m_p * a_n
    theta_yd = math.atan2(a_n, G)
    y_d = params.l2 * math.sin(theta_yd)
    e = y - y_d
    return f_n - (m_f / g.Md) * (g.bd * ydot + g.kd * e)


def impedance_stiffness(params: PayloadParams, theta_yd: float = 0.0) -> float:
    """Stiffness selection rule: the virtual spring balances the lean force."""
    return params.m_p * G / (2.0 * params.l2 * math.cos(theta_yd))


# ---------------------------------------------------------------------------
# low-level geometric layer (rotor-fidelity mode)


def hat(v: np.ndarray) -> np.ndarray:
    return np.array(
        [[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]]
    )


def vee(M: np.ndarray) -> np.ndarray:
    return np.array([M[2, 1], M[0, 2], M[1, 0]])


def attitude_reference(
    F_cmd: np.ndarray, m: float, vdot_d: np.ndarray, yaw_d: float = 0.0
) -> np.ndarray:
    """Desired attitude whose body z carries the commanded force plus weight."""
    t_vec = np.asarray(F_cmd, dtype=float) + m * G * E3 + m * np.asarray(vdot_d, dtype=float)
    norm = float(np.linalg.norm(t_vec))
    if norm < 1e-9:
        return np.eye(3)
    b3 = t_vec / norm
    b1_ref = np.array([math.cos(yaw_d), math.sin(yaw_d), 0.0])
    b2 = np.cross(b3, b1_ref)
    n2 = float(np.linalg.norm(b2))
    if n2 < 1e-9:  # force along the yaw axis; pick any consistent frame
        b1_ref = np.array([0.0, 1.0, 0.0])
        b2 = np.cross(b3, b1_ref)
        n2 = float(np.linalg.norm(b2))
    b2 /= n2
    b1 = np.cross(b2, b3)
    return np.column_stack([b1, b2, b3])


def geometric_thrust_moment(
    state: UavState,
    F_cmd: np.ndarray,
    vdot_d: np.ndarray,
    R_d: np.ndarray,
    Omega_d: np.ndarray,
    Omegadot_d: np.ndarray,
    g: LowLevelGains,
    params: UavParams,
) -> ControlWrench:
    """SE(3) thrust/moment law tracking the commanded cable-side force.

    Thrust projects the required force (plus weight and reference
    acceleration) onto the current body z axis; the moment is the standard
    geometric attitude law with the rotation error
    e_R = 0.5 vee(R_d^T R - R^T R_d).
    """
    R, Omega, J = state.R, state.Omega, params.J
    t_vec = (
        np.asarray(F_cmd, dtype=float)
        + params.m * G * E3
        + params.m * np.asarray(vdot_d, dtype=float)
    )
    T = max(float(t_vec @ (R @ E3)), 0.0)
    e_R = 0.5 * vee(R_d.T @ R - R.T @ R_d)
    e_Om = Omega - R.T @ R_d @ Omega_d
    M = (
        -g.k_e * e_R
        - g.k_Omega * e_Om
        + np.cross(Omega, J @ Omega)
        - J @ (hat(Omega) @ R.T @ R_d @ Omega_d - R.T @ R_d @ Omegadot_d)
    )
    return ControlWrench(T=T, M=M)


def allocate_rotors(w: ControlWrench, params: UavParams) -> tuple[np.ndarray, bool]:
    """Per-rotor thrusts realizing the wrench; (thrusts, clamped flag).

    Exact solve for four rotors, minimum-norm for more; negative solutions
    are clamped to zero and reported.
    """
    target = np.concatenate([[w.T], np.asarray(w.M, dtype=float)])
    if params.n == 4:
        f = np.linalg.solve(params.Gamma, target)
    else:
        f, *_ = np.linalg.lstsq(params.Gamma, target, rcond=None)
    clamped = bool(np.any(f < -1e-9))
    return np.maximum(f, 0.0), clamped


def rotor_speeds(f: np.ndarray, params: UavParams) -> np.ndarray:
    """Rotor angular rates from thrusts via f = k w^2."""
    return np.sqrt(np.maximum(np.asarray(f, dtype=float), 0.0) / params.k_i)
