"""Physical types, frame conversions, and the payload's open-loop model.

The payload is a rigid bar carried horizontally by two cables. Its planar
pose is (p_p, theta) and, under the nonholonomic operating assumption, the
cable point c2 moves like a unicycle with longitudinal speed v and yaw rate
omega. Everything here is a pure function over value types.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

G = 9.81  # gravitational acceleration [m/s^2]

E3 = np.array([0.0, 0.0, 1.0])


def wrap_angle(a: float) -> float:
    """Normalize an angle to (-pi, pi]."""
    a = math.fmod(a, 2.0 * math.pi)
    if a <= -math.pi:
        a += 2.0 * math.pi
    elif a > math.pi:
        a -= 2.0 * math.pi
    return a


@dataclass(frozen=True)
class PayloadParams:
    """Bar mass properties and cable lengths."""

    m_p: float = 0.5  # bar mass [kg]
    I_zz: float = 0.083  # yaw inertia [kg m^2]
    L: float = 1.0  # bar length [m]
    l1: float = 0.18  # leader cable length [m]
    l2: float = 0.18  # follower cable length [m]

    def __post_init__(self) -> None:
        for name in ("m_p", "I_zz", "L", "l1", "l2"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"PayloadParams.{name} must be positive")

    @property
    def r_c1(self) -> np.ndarray:
        """Leader attachment point in the body frame (front end)."""
        return np.array([self.L / 2.0, 0.0, 0.0])

    @property
    def r_c2(self) -> np.ndarray:
        """Follower attachment point in the body frame (rear end)."""
        return np.array([-self.L / 2.0, 0.0, 0.0])


@dataclass
class PayloadState:
    """Planar pose of the bar plus the unicycle velocities of point c2."""

    p_p: np.ndarray  # CoG position, inertial [m]
    theta: float  # yaw [rad]
    v: float  # longitudinal speed of c2 in the body frame [m/s]
    omega: float  # yaw rate [rad/s]

    def copy(self) -> "PayloadState":
        return PayloadState(self.p_p.copy(), self.theta, self.v, self.omega)


def _default_inertia() -> np.ndarray:
    return np.diag([0.007, 0.007, 0.012])


def default_allocation(arm: float = 0.17, k_m: float = 0.016) -> np.ndarray:
    """Allocation matrix for a plus-configuration quad.

    Rotor order: front (+x), left (+y), back (-x), right (-y). Rows map
    per-rotor thrusts to (T, M_x, M_y, M_z); k_m is the yaw moment per
    newton of thrust.
    """
    return np.array(
        [
            [1.0, 1.0, 1.0, 1.0],
            [0.0, arm, 0.0, -arm],
            [-arm, 0.0, arm, 0.0],
            [-k_m, k_m, -k_m, k_m],
        ]
    )


@dataclass(frozen=True)
class UavParams:
    """Rigid-body and rotor parameters of one vehicle."""

    m: float = 0.72  # mass [kg]
    J: np.ndarray = field(default_factory=_default_inertia)  # inertia [kg m^2]
    n: int = 4  # rotor count
    k_i: np.ndarray = field(
        default_factory=lambda: np.full(4, 8.54858e-6)
    )  # thrust constants, f = k w^2 [N s^2]
    Gamma: np.ndarray = field(default_factory=default_allocation)  # 4 x n

    def __post_init__(self) -> None:
        if self.m <= 0.0:
            raise ValueError("UavParams.m must be positive")
        if np.any(np.asarray(self.k_i) <= 0.0):
            raise ValueError("UavParams.k_i must be positive")
        if self.Gamma.shape != (4, self.n):
            raise ValueError("UavParams.Gamma must be 4 x n")
        if np.linalg.matrix_rank(self.Gamma) < 4:
            raise ValueError("UavParams.Gamma must have full row rank")


@dataclass
class UavState:
    """Inertial pose and body rates of one vehicle."""

    p: np.ndarray  # position [m]
    v: np.ndarray  # velocity [m/s]
    R: np.ndarray  # body-to-inertial rotation
    Omega: np.ndarray  # body angular velocity [rad/s]

    def copy(self) -> "UavState":
        return UavState(self.p.copy(), self.v.copy(), self.R.copy(), self.Omega.copy())


@dataclass
class ReferenceSample:
    """One evaluation of the reference trajectory for point c2.

    theta_r is the path tangent wherever the planar speed is nonzero; at a
    standstill the previous heading is held by the sampler. vdot_r and
    omegadot_r are the analytic path derivatives consumed by the controller
    feedforward; rho is the signed-magnitude curvature radius (inf when
    straight).
    """

    p_r: np.ndarray
    pdot_r: np.ndarray
    pddot_r: np.ndarray
    theta_r: float
    omega_r: float
    v_r: float
    vdot_r: float = 0.0
    omegadot_r: float = 0.0
    rho: float = math.inf


@dataclass
class TrackingError:
    """Body-frame tracking errors and the backstepping interface signals."""

    x_e: float
    y_e: float
    theta_e: float
    eta1: float = 0.0  # v_d - v
    eta2: float = 0.0  # omega_d - omega


@dataclass
class BodyForces:
    """Cable forces on the payload, expressed in the payload body frame.

    The z components carry the static weight split m_p*g/2 each; planar
    dynamics only read the x and y components.
    """

    F_L_body: np.ndarray
    F_F_body: np.ndarray

    def copy(self) -> "BodyForces":
        return BodyForces(self.F_L_body.copy(), self.F_F_body.copy())


def rotation_from_yaw(theta: float) -> np.ndarray:
    """Yaw rotation (body to inertial)."""
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def payload_endpoints(
    state: PayloadState, params: PayloadParams
) -> tuple[np.ndarray, np.ndarray]:
    """Inertial positions of the cable points (p_c1, p_c2)."""
    R = rotation_from_yaw(state.theta)
    half = np.array([params.L / 2.0, 0.0, 0.0])
    return state.p_p + R @ half, state.p_p - R @ half


def tracking_error(ref: ReferenceSample, p_c2: np.ndarray, theta: float) -> TrackingError:
    """Reference error expressed in the payload body frame (eta fields zeroed)."""
    R = rotation_from_yaw(theta)
    p_e = R.T @ (ref.p_r - p_c2)
    return TrackingError(
        x_e=float(p_e[0]),
        y_e=float(p_e[1]),
        theta_e=wrap_angle(ref.theta_r - theta),
    )


def error_kinematics(
    err: TrackingError, v: float, omega: float, ref: ReferenceSample
) -> tuple[float, float, float]:
    """Open-loop derivatives of the body-frame errors.

    Valid under the nonholonomic assumption (c2 has no transverse body
    velocity).
    """
    xe_dot = omega * err.y_e + ref.v_r * math.cos(err.theta_e) - v
    ye_dot = -omega * err.x_e + ref.v_r * math.sin(err.theta_e)
    thetae_dot = ref.omega_r - omega
    return xe_dot, ye_dot, thetae_dot


def payload_accel(F: BodyForces, omega: float, params: PayloadParams) -> float:
    """Longitudinal acceleration of c2: vdot = (F_Lx + F_Fx)/m_p + (L/2) omega^2.

    The omega^2 term is the centripetal contribution of c2 sitting L/2
    behind the CoG.
    """
    fx = float(F.F_L_body[0]) + float(F.F_F_body[0])
    return fx / params.m_p + (params.L / 2.0) * omega * omega


def payload_angular_accel(F: BodyForces, params: PayloadParams) -> float:
    """Yaw acceleration from the transverse force couple."""
    return (params.L / (2.0 * params.I_zz)) * (
        float(F.F_L_body[1]) - float(F.F_F_body[1])
    )


def lyapunov_v2(err: TrackingError, k2: float) -> float:
    """Composite tracking Lyapunov function; zero only at zero error."""
    if k2 <= 0.0:
        raise ValueError("k2 must be positive")
    te = wrap_angle(err.theta_e)
    return (
        0.5 * err.x_e**2
        + 0.5 * err.y_e**2
        + (1.0 - math.cos(te)) / k2
        + 0.5 * err.eta1**2
        + 0.5 * err.eta2**2
    )
