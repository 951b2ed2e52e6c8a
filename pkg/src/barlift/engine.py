"""World stepping for the leader/follower payload transport simulation.

One control tick runs the fixed pipeline: sample the reference, update the
estimators, run the leader and follower control laws, realize the commands
as zero-order-hold force vectors, then integrate the plant at the physics
rate. Three plant levels exist:

* follower_mode="ideal": the reduced unicycle the tracking analysis is
  stated for. Body-frame forces act directly, the follower transmits
  nothing.
* follower_mode="active": planar rigid-bar payload plus a point-mass
  follower coupled through an inextensible tension-only cable (index-1
  DAE on the cable direction). The leader is placed kinematically along
  its own force axis.
* follower_mode="none": the bar alone under the leader force.

fidelity="rotor" replaces the force-level vehicles with rigid bodies under
geometric attitude control, rotor-lag thrust dynamics, and stiff unilateral
spring cables.

Everything is deterministic given the scenario seed; all randomness flows
through one generator with a fixed per-tick draw order, so runs with
different disturbance scales consume identical noise streams.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from barlift.control import (
    ControlWrench,
    TriggerState,
    allocate_rotors,
    attitude_reference,
    estimate_transverse_offset,
    follower_longitudinal_control,
    follower_transverse_control,
    geometric_thrust_moment,
    kinematic_control_rates,
    leader_force_control,
    saturate_forces,
    trigger_update,
)
from barlift.estimation import (
    GyroRateDeriver,
    PayloadBelief,
    VehicleBelief,
    VehicleMeasurement,
    default_payload_noise,
    default_vehicle_noise,
    estimate_c1,
    estimate_c2,
    estimate_longitudinal_velocity,
    follower_filter_step,
    leader_filter1_step,
    leader_filter2_step,
    make_payload_belief,
    make_vehicle_belief,
    quat_from_rotvec,
    quat_mul,
    quat_normalize,
    quat_to_rot,
    rot_to_quat,
)
from barlift.model import (
    E3,
    G,
    BodyForces,
    PayloadState,
    UavState,
    lyapunov_v2,
    payload_accel,
    payload_angular_accel,
    payload_endpoints,
    rotation_from_yaw,
    tracking_error,
    wrap_angle,
)
from barlift.planning import (
    BoundaryConditions,
    PlannerConfig,
    TrajectorySpec,
    Waypoint,
    evaluate_trajectory,
    generate_min_snap,
    load_grid,
    plan_waypoints,
    reference_sample,
)
from barlift.recording import LogBuffer, Metrics, compute_metrics
from barlift.scenario import ScenarioConfig

# rotor-fidelity constants
CABLE_STIFFNESS = 2.0e3  # [N/m]
CABLE_DAMPING = 40.0  # [N s/m]
ROTOR_TAU = 0.02  # thrust lag time constant [s]
POS_KP = 16.0  # vehicle position loop [1/s^2]
POS_KD = 8.0  # vehicle velocity loop [1/s]

# force-fidelity leader servo: the leader is a point mass steered onto its
# force-aligned cable station by a PD law. Snapping it there directly would
# feed position steps with no matching velocity into the force estimator.

# below this fraction of the static cable load the force direction is too
# poorly defined to reconstruct the attachment point; hold the last value
C1_FORCE_FLOOR_FRAC = 0.05

MAX_REFERENCE_JUMP = 0.1  # allowed reference discontinuity at a switch [m]


class SimulationFault(RuntimeError):
    """Raised when the integrated state stops being physically meaningful."""

    def __init__(self, message: str, t: float):
        super().__init__(f"{message} (t={t:.3f} s)")
        self.t = t


def _zcross(r: np.ndarray) -> np.ndarray:
    """z-hat cross r for planar vectors."""
    return np.array([-r[1], r[0], 0.0])


def _unit(v: np.ndarray) -> np.ndarray:
    n = float(np.linalg.norm(v))
    if n < 1e-12:
        raise ValueError("cannot normalize a near-zero vector")
    return v / n


# ---------------------------------------------------------------------------
# cable force resolution


def project_tension(force_vec: np.ndarray, axis: np.ndarray) -> tuple[float, bool]:
    """Tension transmitted when force_vec is demanded through a cable along
    axis (unit vector from the payload toward the vehicle). Cables cannot
    push: a nonpositive projection yields zero tension and a slack flag."""
    t = float(np.dot(np.asarray(force_vec, dtype=float), axis))
    if t <= 0.0:
        return 0.0, True
    return t, False


@dataclass
class CableResolution:
    tau_L: float
    slack_L: bool
    F_L: np.ndarray  # force actually applied to the payload at c1
    tau_F: float
    slack_F: bool
    F_F: np.ndarray  # force actually applied to the payload at c2


def resolve_cable_forces(
    F_L_des: np.ndarray,
    axis_L: np.ndarray,
    F_F_des: np.ndarray,
    axis_F: np.ndarray,
) -> CableResolution:
    """Project desired cable-end forces onto tension-only cable axes.

    A demand aligned with its axis passes through unchanged; any
    compressive component is dropped and flagged.
    """
    aL = _unit(np.asarray(axis_L, dtype=float))
    aF = _unit(np.asarray(axis_F, dtype=float))
    tau_L, slack_L = project_tension(F_L_des, aL)
    tau_F, slack_F = project_tension(F_F_des, aF)
    return CableResolution(tau_L, slack_L, tau_L * aL, tau_F, slack_F, tau_F * aF)


# ---------------------------------------------------------------------------
# noise


def inject_noise(signal, variance: float, rng: np.random.Generator):
    """Additive Gaussian corruption that consumes the same stream draws at
    every variance, so runs differing only in noise scale share their
    randomness (common random numbers). variance = 0 is exact identity."""
    if variance < 0.0:
        raise ValueError("variance must be nonnegative")
    sig = np.asarray(signal, dtype=float)
    draw = rng.standard_normal(sig.shape)
    out = sig + math.sqrt(variance) * draw
    if np.ndim(signal) == 0:
        return float(out)
    return out


# ---------------------------------------------------------------------------
# world state


@dataclass
class WorldState:
    t: float
    tick_index: int
    t_base: float
    payload: PayloadState
    v_p: np.ndarray  # bar CoG inertial velocity (z component stays 0)
    leader: UavState
    follower: UavState
    trigger: TriggerState
    active_spec: TrajectorySpec
    generation: int
    rng: np.random.Generator
    ref_theta: float  # reference heading held through standstills
    u: np.ndarray  # follower cable direction, c2 toward vehicle
    udot: np.ndarray
    F_L_body: np.ndarray  # leader command in the payload frame (ZOH)
    F_L_vec: np.ndarray  # leader force on the payload, inertial (ZOH)
    F_L_nom_vec: np.ndarray  # what the leader believes it transmits (no disturbance)
    T_L_vec: np.ndarray  # leader thrust over the elapsed tick, inertial
    T_F_vec: np.ndarray  # follower thrust vector, inertial (ZOH)
    tau_F: float
    slack_F: bool
    leader_flt: VehicleBelief | None = None
    payload_flt: PayloadBelief | None = None
    follower_flt: VehicleBelief | None = None
    deriver: GyroRateDeriver | None = None
    c1_hat: np.ndarray | None = None
    switch_spec: TrajectorySpec | None = None
    switch_at: float | None = None
    # rotor fidelity extras
    q_L: np.ndarray | None = None
    q_F: np.ndarray | None = None
    f_rot_L: np.ndarray | None = None
    f_rot_F: np.ndarray | None = None
    f_cmd_L: np.ndarray | None = None
    f_cmd_F: np.ndarray | None = None


def _build_spec(cfg: ScenarioConfig) -> TrajectorySpec:
    if cfg.waypoints is not None:
        wps = list(cfg.waypoints)
    else:
        grid = load_grid(cfg.grid_file)
        wps = plan_waypoints(
            grid,
            cfg.grid_start,
            cfg.grid_goal,
            PlannerConfig(rho_min=cfg.plan_rho_min, speed=cfg.plan_speed),
        )
    return generate_min_snap(wps, generation=0)


def _build_switch_spec(cfg: ScenarioConfig, spec: TrajectorySpec) -> tuple[TrajectorySpec, float]:
    """Candidate replacement trajectory, blended C3 off the active one."""
    t_sw = spec.t0 + cfg.switch_t
    t_eval = min(max(t_sw, spec.t0), spec.t1)
    p0 = evaluate_trajectory(spec, t_eval)
    bc = np.zeros((3, 2))
    for order in (1, 2, 3):
        bc[order - 1] = evaluate_trajectory(spec, t_eval, order)
    pts = [Waypoint(w.x, w.y, t_sw + w.t) for w in cfg.switch_points]
    if cfg.switch_points[0].t > 0.0:
        pts.insert(0, Waypoint(float(p0[0]), float(p0[1]), t_sw))
    boundary = BoundaryConditions(start=bc, end=np.zeros((3, 2)))
    return generate_min_snap(pts, boundary=boundary, generation=1), t_sw


def _initial_heading(spec: TrajectorySpec) -> float:
    t = spec.t0
    while t <= spec.t1 + 1e-12:
        r = reference_sample(spec, min(t, spec.t1), 0.0)
        if r.v_r > 1e-3:
            return r.theta_r
        t += 0.05
    return 0.0


def init_world(cfg: ScenarioConfig) -> WorldState:
    if cfg.fidelity == "rotor" and cfg.follower_mode != "active":
        raise ValueError("rotor fidelity requires follower_mode='active'")
    spec = _build_spec(cfg)
    switch_spec, switch_at = (None, None)
    if cfg.switch_t is not None:
        switch_spec, switch_at = _build_switch_spec(cfg, spec)

    pp = cfg.payload
    th0 = _initial_heading(spec)
    ref0 = reference_sample(spec, spec.t0, th0)
    Rth = rotation_from_yaw(th0)
    p_c2 = np.array([ref0.p_r[0], ref0.p_r[1], 0.0])
    p_p = p_c2 + Rth @ np.array([pp.L / 2.0, 0.0, 0.0])
    payload = PayloadState(p_p=p_p, theta=th0, v=ref0.v_r, omega=ref0.omega_r)
    heading = np.array([math.cos(th0), math.sin(th0), 0.0])
    v_c2 = ref0.v_r * heading
    v_p = v_c2 - payload.omega * _zcross(p_c2 - p_p)
    p_c1 = payload_endpoints(payload, pp)[0]
    v_c1 = v_p + payload.omega * _zcross(p_c1 - p_p)

    m_F = cfg.uav.m
    F_L_body = np.array([0.0, 0.0, pp.m_p * G / 2.0])
    F_L_vec = F_L_body.copy()
    T_L_vec = (m_F * G + pp.m_p * G / 2.0) * E3
    T_F_vec = (m_F * G + pp.m_p * G / 2.0) * E3

    leader = UavState(p=p_c1 + pp.l1 * E3, v=v_c1.copy(), R=np.eye(3), Omega=np.zeros(3))
    follower = UavState(p=p_c2 + pp.l2 * E3, v=v_c2.copy(), R=np.eye(3), Omega=np.zeros(3))
    trigger = TriggerState(p_d_x=float((Rth.T @ follower.p)[0]))

    state = WorldState(
        t=spec.t0,
        tick_index=0,
        t_base=spec.t0,
        payload=payload,
        v_p=v_p,
        leader=leader,
        follower=follower,
        trigger=trigger,
        active_spec=spec,
        generation=0,
        rng=np.random.default_rng(cfg.seed),
        ref_theta=th0,
        u=E3.copy(),
        udot=np.zeros(3),
        F_L_body=F_L_body,
        F_L_vec=F_L_vec,
        F_L_nom_vec=F_L_vec.copy(),
        T_L_vec=T_L_vec,
        T_F_vec=T_F_vec,
        tau_F=pp.m_p * G / 2.0,
        slack_F=False,
        switch_spec=switch_spec,
        switch_at=switch_at,
    )
    if cfg.feedback == "estimated":
        q0 = np.array([1.0, 0.0, 0.0, 0.0])
        static_F = np.array([0.0, 0.0, pp.m_p * G / 2.0])  # per-cable share at rest
        ft = cfg.filter
        Qv, Rv = default_vehicle_noise(
            ft.vehicle_pos_var, ft.vehicle_vel_var, ft.vehicle_att_var,
            ft.vehicle_gyro_var, ft.vehicle_accel_var, ft.vehicle_force_walk,
        )
        Qp, Rp = default_payload_noise(
            ft.payload_pos_var, ft.payload_accel_var, ft.payload_force_walk
        )
        spread = dict(alpha=ft.alpha, beta=ft.beta, kappa=ft.kappa)
        # the leader's force state is the residual on top of its own command,
        # so it starts at zero; the follower estimates the full cable force
        state.leader_flt = make_vehicle_belief(
            m_F, leader.p, leader.v, q0, Qv, Rv, **spread
        )
        state.follower_flt = make_vehicle_belief(
            m_F, follower.p, follower.v, q0, Qv, Rv, **spread
        )
        state.follower_flt.belief.mean[6:9] = static_F
        state.payload_flt = make_payload_belief(pp, p_c1, Qp, Rp, **spread)
        state.payload_flt.belief.mean[3:6] = v_c1
        state.payload_flt.belief.mean[6:9] = static_F
        state.deriver = GyroRateDeriver()
        state.c1_hat = p_c1.copy()
    if cfg.fidelity == "rotor":
        state.q_L = np.array([1.0, 0.0, 0.0, 0.0])
        state.q_F = np.array([1.0, 0.0, 0.0, 0.0])
        hover_L, _ = allocate_rotors(
            ControlWrench(T=m_F * G + pp.m_p * G / 2.0, M=np.zeros(3)), cfg.uav
        )
        hover_F, _ = allocate_rotors(
            ControlWrench(T=m_F * G + pp.m_p * G / 2.0, M=np.zeros(3)), cfg.uav
        )
        state.f_rot_L = hover_L
        state.f_rot_F = hover_F
        state.f_cmd_L = hover_L.copy()
        state.f_cmd_F = hover_F.copy()
    return state


# ---------------------------------------------------------------------------
# plant derivatives (force fidelity)


def _ideal_derivs(y: np.ndarray, F: BodyForces, pp) -> np.ndarray:
    """Reduced unicycle: y = [x_c2, y_c2, theta, v, omega]."""
    th, v, om = y[2], y[3], y[4]
    return np.array(
        [
            v * math.cos(th),
            v * math.sin(th),
            om,
            payload_accel(F, om, pp),
            payload_angular_accel(F, pp),
        ]
    )


def _bar_base_accels(
    y: np.ndarray, F_L_vec: np.ndarray, pp
) -> tuple[np.ndarray, float, np.ndarray, np.ndarray, np.ndarray]:
    """Planar bar accelerations under the leader force alone.

    y = [px, py, theta, vx, vy, omega, ...]; returns (a_p0, omdot0, r2,
    zxr2, a_c2_0) where r2 points from the CoG to the follower attachment.
    """
    th, om = y[2], y[5]
    c, s = math.cos(th), math.sin(th)
    half = pp.L / 2.0
    r2 = np.array([-half * c, -half * s, 0.0])
    r1 = -r2
    zxr2 = _zcross(r2)
    FL_xy = np.array([F_L_vec[0], F_L_vec[1], 0.0])
    a_p0 = FL_xy / pp.m_p
    omdot0 = (r1[0] * F_L_vec[1] - r1[1] * F_L_vec[0]) / pp.I_zz
    a_c2_0 = a_p0 + omdot0 * zxr2 - om * om * r2
    return a_p0, omdot0, r2, zxr2, a_c2_0


def _active_derivs(
    y: np.ndarray, F_L_vec: np.ndarray, T_F_vec: np.ndarray, pp, m_F: float
) -> tuple[np.ndarray, float, bool]:
    """Bar + follower + inextensible cable.

    y = [px, py, theta, vx, vy, omega, u (3), udot (3)]. The cable tension
    is the multiplier of the unit-length constraint on u; a negative
    multiplier means the cable wants to push, so it goes slack instead.
    """
    om = y[5]
    u = y[6:9]
    ud = y[9:12]
    a_p0, omdot0, r2, zxr2, a_c2_0 = _bar_base_accels(y, F_L_vec, pp)

    u_xy = np.array([u[0], u[1], 0.0])
    cross_r2_u = r2[0] * u[1] - r2[1] * u[0]
    c_vec = u_xy / pp.m_p + (cross_r2_u / pp.I_zz) * zxr2
    denom = 1.0 / m_F + float(u @ c_vec)
    free_rel = T_F_vec / m_F - G * E3 - a_c2_0
    tau = (pp.l2 * float(ud @ ud) + float(u @ free_rel)) / denom
    slack = tau <= 0.0
    tau = max(tau, 0.0)

    a_p = a_p0 + tau * u_xy / pp.m_p
    omdot = omdot0 + tau * cross_r2_u / pp.I_zz
    a_c2 = a_p + omdot * zxr2 - om * om * r2
    a_F = T_F_vec / m_F - G * E3 - (tau / m_F) * u
    uddot = (a_F - a_c2) / pp.l2

    dy = np.empty(12)
    dy[0] = y[3]
    dy[1] = y[4]
    dy[2] = om
    dy[3] = a_p[0]
    dy[4] = a_p[1]
    dy[5] = omdot
    dy[6:9] = ud
    dy[9:12] = uddot
    return dy, tau, slack


def _none_derivs(y: np.ndarray, F_L_vec: np.ndarray, pp) -> np.ndarray:
    """Bar alone: y = [px, py, theta, vx, vy, omega]."""
    a_p0, omdot0, _, _, _ = _bar_base_accels(y, F_L_vec, pp)
    return np.array([y[3], y[4], y[5], a_p0[0], a_p0[1], omdot0])


def _rk4(f, y: np.ndarray, h: float) -> np.ndarray:
    k1 = f(y)
    k2 = f(y + 0.5 * h * k1)
    k3 = f(y + 0.5 * h * k2)
    k4 = f(y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


# ---------------------------------------------------------------------------
# rotor-fidelity plant


def _spring_tension(
    p_vehicle: np.ndarray,
    v_vehicle: np.ndarray,
    p_attach: np.ndarray,
    v_attach: np.ndarray,
    length: float,
) -> tuple[float, np.ndarray]:
    """Unilateral spring-damper cable: (tension, unit direction attach->vehicle)."""
    d = p_vehicle - p_attach
    dist = float(np.linalg.norm(d))
    if dist < 1e-9:
        return 0.0, E3.copy()
    direction = d / dist
    stretch = dist - length
    if stretch <= 0.0:
        return 0.0, direction
    rate = float((v_vehicle - v_attach) @ direction)
    return max(CABLE_STIFFNESS * stretch + CABLE_DAMPING * rate, 0.0), direction


def _rotor_derivs(y: np.ndarray, state: WorldState, cfg: ScenarioConfig) -> np.ndarray:
    """Full-vehicle plant: y = [bar (6), leader p v q w (13), follower (13),
    rotor thrusts (2n)]."""
    pp = cfg.payload
    uav = cfg.uav
    n = uav.n
    bar = y[0:6]
    pL, vL, qL, wL = y[6:9], y[9:12], y[12:16], y[16:19]
    pF, vF, qF, wF = y[19:22], y[22:25], y[25:29], y[29:32]
    fL = y[32 : 32 + n]
    fF = y[32 + n : 32 + 2 * n]

    th, om = bar[2], bar[5]
    c, s = math.cos(th), math.sin(th)
    half = pp.L / 2.0
    r1 = np.array([half * c, half * s, 0.0])
    r2 = -r1
    p_p = np.array([bar[0], bar[1], 0.0])
    v_p = np.array([bar[3], bar[4], 0.0])
    p_c1, p_c2 = p_p + r1, p_p + r2
    v_c1 = v_p + om * _zcross(r1)
    v_c2 = v_p + om * _zcross(r2)

    tau1, dir1 = _spring_tension(pL, vL, p_c1, v_c1, pp.l1)
    tau2, dir2 = _spring_tension(pF, vF, p_c2, v_c2, pp.l2)
    F1 = tau1 * dir1  # on the payload at c1
    F2 = tau2 * dir2

    a_p = np.array([F1[0] + F2[0], F1[1] + F2[1], 0.0]) / pp.m_p
    torque = (r1[0] * F1[1] - r1[1] * F1[0]) + (r2[0] * F2[1] - r2[1] * F2[0])
    omdot = torque / pp.I_zz

    def vehicle(q, w, f, cable_force):
        wrench = uav.Gamma @ f
        T, M = wrench[0], wrench[1:4]
        R = quat_to_rot(quat_normalize(q))
        acc = (T * (R @ E3) - uav.m * G * E3 + cable_force) / uav.m
        qdot = 0.5 * quat_mul(q, np.concatenate([[0.0], w]))
        wdot = np.linalg.solve(uav.J, M - np.cross(w, uav.J @ w))
        return acc, qdot, wdot

    accL, qdotL, wdotL = vehicle(qL, wL, fL, -F1)
    accF, qdotF, wdotF = vehicle(qF, wF, fF, -F2)

    dy = np.empty_like(y)
    dy[0:6] = [bar[3], bar[4], om, a_p[0], a_p[1], omdot]
    dy[6:9] = vL
    dy[9:12] = accL
    dy[12:16] = qdotL
    dy[16:19] = wdotL
    dy[19:22] = vF
    dy[22:25] = accF
    dy[25:29] = qdotF
    dy[29:32] = wdotF
    dy[32 : 32 + n] = (state.f_cmd_L - fL) / ROTOR_TAU
    dy[32 + n : 32 + 2 * n] = (state.f_cmd_F - fF) / ROTOR_TAU
    return dy


# ---------------------------------------------------------------------------
# per-tick truth helpers


def _bar_kinematics(state: WorldState, pp):
    p_c1, p_c2 = payload_endpoints(state.payload, pp)
    om = state.payload.omega
    v_c1 = state.v_p + om * _zcross(p_c1 - state.payload.p_p)
    v_c2 = state.v_p + om * _zcross(p_c2 - state.payload.p_p)
    return p_c1, p_c2, v_c1, v_c2


def _pack_active(state: WorldState) -> np.ndarray:
    p = state.payload
    return np.concatenate(
        [[p.p_p[0], p.p_p[1], p.theta, state.v_p[0], state.v_p[1], p.omega], state.u, state.udot]
    )


def _unpack_planar(state: WorldState, y: np.ndarray, pp) -> None:
    p = state.payload
    p.p_p = np.array([y[0], y[1], 0.0])
    p.theta = y[2]
    state.v_p = np.array([y[3], y[4], 0.0])
    p.omega = y[5]
    _, p_c2, _, v_c2 = _bar_kinematics(state, pp)
    p.v = float((rotation_from_yaw(p.theta).T @ v_c2)[0])


def _truth_accels(state: WorldState, cfg: ScenarioConfig, F_L_vec, T_F_vec, F_L_body):
    """(vdot, omegadot, a_c1, tau_F, slack_F) for the current state under
    the given held commands."""
    pp = cfg.payload
    p = state.payload
    if cfg.follower_mode == "ideal":
        F = BodyForces(F_L_body, np.array([0.0, 0.0, pp.m_p * G / 2.0]))
        vdot = payload_accel(F, p.omega, pp)
        omdot = payload_angular_accel(F, pp)
        h = np.array([math.cos(p.theta), math.sin(p.theta), 0.0])
        a_c2 = vdot * h + p.v * p.omega * _zcross(h)
        a_c1 = a_c2 + omdot * _zcross(pp.L * h) - p.omega**2 * pp.L * h
        return vdot, omdot, a_c1, 0.0, False
    if cfg.follower_mode == "none":
        y = _pack_active(state)[:6]
        dy = _none_derivs(y, F_L_vec, pp)
        tau, slack = 0.0, False
        a_p = np.array([dy[3], dy[4], 0.0])
        omdot = dy[5]
    else:
        y = _pack_active(state)
        dy, tau, slack = _active_derivs(y, F_L_vec, T_F_vec, pp, cfg.uav.m)
        a_p = np.array([dy[3], dy[4], 0.0])
        omdot = dy[5]
    p_c1, p_c2, _, v_c2 = _bar_kinematics(state, pp)
    r1 = p_c1 - p.p_p
    r2 = p_c2 - p.p_p
    om = p.omega
    a_c1 = a_p + omdot * _zcross(r1) - om * om * r1
    a_c2 = a_p + omdot * _zcross(r2) - om * om * r2
    Rt = rotation_from_yaw(p.theta).T
    v_c2y = float((Rt @ v_c2)[1])
    vdot = float((Rt @ a_c2)[0]) + om * v_c2y
    return vdot, omdot, a_c1, tau, slack


def _measure_vehicle(
    state: WorldState, veh: UavState, noise, rng, a_imu: np.ndarray
) -> VehicleMeasurement:
    att = inject_noise(np.zeros(3), noise.uav_att_var, rng)
    q = quat_mul(rot_to_quat(veh.R), quat_from_rotvec(att))
    return VehicleMeasurement(
        p=inject_noise(veh.p, noise.uav_pos_var, rng),
        v=inject_noise(veh.v, noise.uav_vel_var, rng),
        q=q,
        omega=inject_noise(veh.Omega, noise.uav_gyro_var, rng),
        a=inject_noise(a_imu, noise.uav_accel_var, rng),
    )


# ---------------------------------------------------------------------------
# the tick


def step_world(state: WorldState, cfg: ScenarioConfig, buf: LogBuffer | None = None) -> WorldState:
    """Advance the world by one control tick (control + physics substeps)."""
    pp = cfg.payload
    m_F = cfg.uav.m
    tick = 1.0 / cfg.control_hz
    noise = cfg.noise
    rng = state.rng

    if state.switch_spec is not None and state.t >= state.switch_at - 0.5 * tick:
        switch_trajectory(state, state.switch_spec)
        state.switch_spec = None
        state.switch_at = None

    spec = state.active_spec
    t_ref = min(max(state.t, spec.t0), spec.t1)
    ref = reference_sample(spec, t_ref, state.ref_theta)
    state.ref_theta = ref.theta_r

    p = state.payload
    Rth = rotation_from_yaw(p.theta)
    p_c1, p_c2, v_c1, v_c2 = _bar_kinematics(state, pp)
    v_c2y = float((Rth.T @ v_c2)[1])
    F_F_applied = state.tau_F * state.u if cfg.follower_mode == "active" else np.zeros(3)
    F_F_body_true = Rth.T @ F_F_applied

    # acceleration at the sampling instant is produced by the forces still
    # held from the previous tick
    _, _, a_c1_true, tau_now, _ = _truth_accels(
        state, cfg, state.F_L_vec, state.T_F_vec, state.F_L_body
    )

    # --- estimates ---------------------------------------------------------
    if cfg.feedback == "estimated":
        # accelerometer truth is the proper acceleration (thrust - cable)/m
        if cfg.fidelity == "rotor":
            thrust_L = float((cfg.uav.Gamma @ state.f_rot_L)[0])
            tau1, dir1 = _spring_tension(
                state.leader.p, state.leader.v, p_c1, v_c1, pp.l1
            )
            a_imu_L = (thrust_L * (state.leader.R @ E3) - tau1 * dir1) / m_F
        else:
            # the leader knows the thrust vector it is holding
            thrust_L = state.T_L_vec
            a_imu_L = (state.T_L_vec - state.F_L_vec) / m_F
        meas_L = _measure_vehicle(state, state.leader, noise, rng, a_imu_L)
        leader_filter1_step(
            state.leader_flt, thrust_L, meas_L, tick, F_known=state.F_L_nom_vec
        )
        F_L_hat = state.F_L_nom_vec + state.leader_flt.F_hat
        if np.linalg.norm(F_L_hat) >= C1_FORCE_FLOOR_FRAC * pp.m_p * G:
            state.c1_hat = estimate_c1(state.leader_flt.p_hat, F_L_hat, pp.l1)

        a_c1_m = inject_noise(a_c1_true, noise.payload_accel_var, rng)
        theta_m = wrap_angle(inject_noise(p.theta, noise.payload_yaw_var, rng))
        omega_m = inject_noise(p.omega, noise.payload_gyro_var, rng)
        omegadot_m = state.deriver.step(omega_m, tick)
        leader_filter2_step(
            state.payload_flt, F_L_hat, a_c1_m, theta_m, omega_m, omegadot_m,
            state.c1_hat, tick,
        )
        v_hat = estimate_longitudinal_velocity(state.payload_flt.v_c1_hat, theta_m)
        p_c2_hat = estimate_c2(state.payload_flt.p_c1_hat, theta_m, pp)
        F_F_y_leader = float(
            (rotation_from_yaw(theta_m).T @ state.payload_flt.F_F_hat)[1]
        )
        F_F_hat_leader_body = rotation_from_yaw(theta_m).T @ state.payload_flt.F_F_hat

        if cfg.fidelity == "rotor":
            thrust_F = float((cfg.uav.Gamma @ state.f_rot_F)[0])
            tau2, dir2 = _spring_tension(
                state.follower.p, state.follower.v, p_c2, v_c2, pp.l2
            )
            a_imu_F = (thrust_F * (state.follower.R @ E3) - tau2 * dir2) / m_F
        else:
            thrust_F = state.T_F_vec
            F_cable = tau_now * state.u if cfg.follower_mode == "active" else (
                np.array([0.0, 0.0, pp.m_p * G / 2.0])
                if cfg.follower_mode == "ideal"
                else np.zeros(3)
            )
            a_imu_F = (state.T_F_vec - F_cable) / m_F
        meas_F = _measure_vehicle(state, state.follower, noise, rng, a_imu_F)
        follower_filter_step(state.follower_flt, thrust_F, meas_F, tick)
        th_m_F = wrap_angle(inject_noise(p.theta, noise.payload_yaw_var, rng))
        R_F = rotation_from_yaw(th_m_F)
        F_onp_body_F = R_F.T @ state.follower_flt.F_hat
        p_F_belief = state.follower_flt.p_hat.copy()
        v_F_belief = state.follower_flt.v_hat.copy()
        y_sw = estimate_transverse_offset(F_onp_body_F, pp)
        c1_hat_log = state.payload_flt.p_c1_hat
    else:
        theta_m = p.theta
        omega_m = p.omega
        v_hat = p.v
        p_c2_hat = p_c2.copy()
        F_F_y_leader = float(F_F_body_true[1])
        F_F_hat_leader_body = F_F_body_true.copy()
        th_m_F = p.theta
        R_F = Rth
        F_onp_body_F = F_F_body_true.copy()
        p_F_belief = state.follower.p.copy()
        v_F_belief = state.follower.v.copy()
        y_sw = (
            pp.l2 * float((Rth.T @ state.u)[1])
            if cfg.follower_mode == "active"
            else 0.0
        )
        c1_hat_log = p_c1

    # --- leader control ----------------------------------------------------
    err = tracking_error(ref, p_c2_hat, theta_m)
    v_d, omega_d, vdot_d, omegadot_d = kinematic_control_rates(
        err, ref, v_hat, omega_m, cfg.leader_gains
    )
    err.eta1 = v_d - v_hat
    err.eta2 = omega_d - omega_m
    f_x, f_y = leader_force_control(
        err, omega_m, vdot_d, omegadot_d, F_F_y_leader, pp, cfg.leader_gains
    )
    f_x_nom, f_y_nom = f_x, f_y  # what the leader believes it sends
    disturbed = inject_noise(np.array([f_x, f_y]), cfg.sigma_L, rng)
    f_x, f_y = float(disturbed[0]), float(disturbed[1])
    sat_x = sat_y = False
    if cfg.saturation is not None:
        f_x, f_y, sat_x, sat_y = saturate_forces(f_x, f_y, cfg.saturation)
        f_x_nom, f_y_nom, _, _ = saturate_forces(f_x_nom, f_y_nom, cfg.saturation)

    # --- follower control ---------------------------------------------------
    F_self_x = -float(F_onp_body_F[0])
    p_F_long = float((R_F.T @ p_F_belief)[0])
    v_F_long = float((R_F.T @ v_F_belief)[0])
    ydot = float((R_F.T @ v_F_belief)[1])
    state.trigger = trigger_update(state.trigger, F_self_x, p_F_long, cfg.follower_gains)
    ff_x = follower_longitudinal_control(
        state.trigger, v_F_long, F_self_x, p_F_long, cfg.follower_gains
    )
    ff_y = follower_transverse_control(
        y_sw, ydot, v_F_long, ref.rho, m_F, cfg.follower_gains, pp
    )
    disturbed_F = inject_noise(np.array([ff_x, ff_y]), cfg.sigma_F, rng)
    ff_x, ff_y = float(disturbed_F[0]), float(disturbed_F[1])

    # --- realize the commands (zero-order hold until the next tick) --------
    F_L_body = np.array([f_x, f_y, pp.m_p * G / 2.0])
    F_L_vec = rotation_from_yaw(theta_m) @ F_L_body
    T_F_vec = rotation_from_yaw(th_m_F) @ np.array([ff_x, ff_y, 0.0]) + (
        m_F * G + pp.m_p * G / 2.0
    ) * E3
    axis_L = _unit(F_L_vec)
    tau_L, slack_L = project_tension(F_L_vec, axis_L)

    vdot_true, omegadot_true, a_c1_new, tau_F_new, slack_F_new = _truth_accels(
        state, cfg, F_L_vec, T_F_vec, F_L_body
    )

    state.F_L_body = F_L_body
    state.F_L_vec = F_L_vec
    state.F_L_nom_vec = rotation_from_yaw(theta_m) @ np.array(
        [f_x_nom, f_y_nom, pp.m_p * G / 2.0]
    )
    state.T_F_vec = T_F_vec
    state.tau_F = tau_F_new
    state.slack_F = slack_F_new

    if buf is not None:
        F_L_body_true = Rth.T @ F_L_vec
        F_F_new = tau_F_new * state.u if cfg.follower_mode == "active" else np.zeros(3)
        F_F_body_new = Rth.T @ F_F_new
        buf.append(
            {
                "t": state.t,
                "x_r": ref.p_r[0], "y_r": ref.p_r[1], "theta_r": ref.theta_r,
                "v_r": ref.v_r, "omega_r": ref.omega_r,
                "rho_r": ref.rho if math.isfinite(ref.rho) else 0.0,
                "x_c2": p_c2[0], "y_c2": p_c2[1], "theta": p.theta,
                "v": p.v, "omega": p.omega, "v_c2y": v_c2y,
                "x_e": err.x_e, "y_e": err.y_e, "theta_e": err.theta_e,
                "eta1": err.eta1, "eta2": err.eta2,
                "V2": lyapunov_v2(err, cfg.leader_gains.k2),
                "v_d": v_d, "omega_d": omega_d,
                "vdot_d": vdot_d, "omegadot_d": omegadot_d,
                "vdot_true": vdot_true, "omegadot_true": omegadot_true,
                "F_Lx_cmd": f_x, "F_Ly_cmd": f_y,
                "F_Lx_true": F_L_body_true[0], "F_Ly_true": F_L_body_true[1],
                "F_Fx_cmd": ff_x, "F_Fy_cmd": ff_y,
                "F_Fx_true": F_F_body_new[0], "F_Fy_true": F_F_body_new[1],
                "F_Fx_hat": F_onp_body_F[0], "F_Fy_hat": F_onp_body_F[1],
                "F_Fx_hat_leader": F_F_hat_leader_body[0],
                "F_Fy_hat_leader": F_F_hat_leader_body[1],
                "v_hat": v_hat,
                "x_c1": p_c1[0], "y_c1": p_c1[1],
                "x_c1_hat": c1_hat_log[0], "y_c1_hat": c1_hat_log[1],
                "x_c2_hat": p_c2_hat[0], "y_c2_hat": p_c2_hat[1],
                "x_L": state.leader.p[0], "y_L": state.leader.p[1], "z_L": state.leader.p[2],
                "x_F": state.follower.p[0], "y_F": state.follower.p[1], "z_F": state.follower.p[2],
                "tau_L": tau_L, "tau_F": tau_F_new,
                "slack_L": float(slack_L), "slack_F": float(slack_F_new),
                "sat_x": float(sat_x), "sat_y": float(sat_y),
                "trigger_mode": float(int(state.trigger.mode)),
                "trigger_events": float(state.trigger.events),
                "generation": float(state.generation),
            }
        )

    # --- integrate the physics substeps ------------------------------------
    if cfg.fidelity == "rotor":
        _advance_rotor(state, cfg, F_L_vec, T_F_vec, theta_m, th_m_F, tick)
    else:
        _advance_force(state, cfg, F_L_vec, T_F_vec, F_L_body, tick)

    state.tick_index += 1
    state.t = state.t_base + state.tick_index * tick
    _check_health(state, cfg)
    return state


def _advance_force(state, cfg, F_L_vec, T_F_vec, F_L_body, tick):
    pp = cfg.payload
    n = cfg.steps_per_tick
    h = cfg.dt
    mode = cfg.follower_mode
    if mode == "ideal":
        F = BodyForces(F_L_body, np.array([0.0, 0.0, pp.m_p * G / 2.0]))
        p = state.payload
        _, p_c2, _, _ = _bar_kinematics(state, pp)
        y = np.array([p_c2[0], p_c2[1], p.theta, p.v, p.omega])
        for _ in range(n):
            y = _rk4(lambda z: _ideal_derivs(z, F, pp), y, h)
        th = y[2]
        Rn = rotation_from_yaw(th)
        p_c2n = np.array([y[0], y[1], 0.0])
        p.p_p = p_c2n + Rn @ np.array([pp.L / 2.0, 0.0, 0.0])
        p.theta = th
        p.v = y[3]
        p.omega = y[4]
        h_vec = np.array([math.cos(th), math.sin(th), 0.0])
        v_c2 = y[3] * h_vec
        state.v_p = v_c2 - p.omega * _zcross(p_c2n - p.p_p)
    elif mode == "none":
        y = _pack_active(state)[:6]
        for _ in range(n):
            y = _rk4(lambda z: _none_derivs(z, F_L_vec, pp), y, h)
        _unpack_planar(state, y, pp)
    else:
        y = _pack_active(state)
        for _ in range(n):
            y = _rk4(lambda z: _active_derivs(z, F_L_vec, T_F_vec, pp, cfg.uav.m)[0], y, h)
            # project back onto the constraint manifold every substep, so
            # integration error cannot compound across the tick; anything a
            # single RK4 substep cannot keep near the sphere is a genuine
            # blow-up, not accumulated drift
            drift = abs(float(np.linalg.norm(y[6:9])) - 1.0)
            if drift > 1e-3:
                raise SimulationFault(
                    "cable direction drifted off the unit sphere", state.t
                )
            y[6:9] /= np.linalg.norm(y[6:9])
            y[9:12] -= float(y[6:9] @ y[9:12]) * y[6:9]
        state.u = y[6:9].copy()
        state.udot = y[9:12].copy()
        _unpack_planar(state, y, pp)

    # leader: the autopilot keeps the vehicle on its cable, opposite the
    # force it transmits. Between stations the motion is the constant-
    # acceleration segment, which is exactly the model the onboard filter
    # assumes, so station keeping never bleeds into the force estimate and
    # the cable geometry seen by estimate_c1 is consistent with the force
    # direction, as it would be for a physical cable.
    m = cfg.uav.m
    p_c1n, p_c2, v_c1n, v_c2 = _bar_kinematics(state, pp)
    p_L_new = p_c1n + pp.l1 * _unit(F_L_vec)
    a_L = 2.0 * (p_L_new - state.leader.p - state.leader.v * tick) / tick**2
    state.leader.v = state.leader.v + a_L * tick
    state.leader.p = p_L_new
    state.T_L_vec = m * (a_L + G * E3) + F_L_vec
    state.leader.R = attitude_reference(state.T_L_vec - m * G * E3, m, np.zeros(3))
    if mode == "active":
        state.follower.p = p_c2 + pp.l2 * state.u
        state.follower.v = v_c2 + pp.l2 * state.udot
    else:
        state.follower.p = p_c2 + pp.l2 * E3
        state.follower.v = v_c2
    state.follower.R = attitude_reference(T_F_vec - cfg.uav.m * G * E3, cfg.uav.m, np.zeros(3))


def _advance_rotor(state, cfg, F_L_vec, T_F_vec, theta_m, th_m_F, tick):
    pp = cfg.payload
    uav = cfg.uav
    n_rot = uav.n

    # outer position loop for the leader, force servo for the follower
    p_c1, p_c2, v_c1, v_c2 = _bar_kinematics(state, pp)
    p_d = p_c1 + pp.l1 * _unit(F_L_vec)
    a_pd = POS_KP * (p_d - state.leader.p) + POS_KD * (v_c1 - state.leader.v)
    F_cmd_L = uav.m * a_pd + F_L_vec
    R_d_L = attitude_reference(F_cmd_L, uav.m, np.zeros(3), yaw_d=theta_m)
    state.leader.R = quat_to_rot(quat_normalize(state.q_L))
    wrench_L = geometric_thrust_moment(
        state.leader, F_cmd_L, np.zeros(3), R_d_L, np.zeros(3), np.zeros(3),
        cfg.low_level, uav,
    )
    state.f_cmd_L, _ = allocate_rotors(wrench_L, uav)

    F_cmd_F = T_F_vec - uav.m * G * E3
    R_d_F = attitude_reference(F_cmd_F, uav.m, np.zeros(3), yaw_d=th_m_F)
    state.follower.R = quat_to_rot(quat_normalize(state.q_F))
    wrench_F = geometric_thrust_moment(
        state.follower, F_cmd_F, np.zeros(3), R_d_F, np.zeros(3), np.zeros(3),
        cfg.low_level, uav,
    )
    state.f_cmd_F, _ = allocate_rotors(wrench_F, uav)

    p = state.payload
    y = np.concatenate(
        [
            [p.p_p[0], p.p_p[1], p.theta, state.v_p[0], state.v_p[1], p.omega],
            state.leader.p, state.leader.v, state.q_L, state.leader.Omega,
            state.follower.p, state.follower.v, state.q_F, state.follower.Omega,
            state.f_rot_L, state.f_rot_F,
        ]
    )
    for _ in range(cfg.steps_per_tick):
        y = _rk4(lambda z: _rotor_derivs(z, state, cfg), y, cfg.dt)
        y[12:16] = quat_normalize(y[12:16])
        y[25:29] = quat_normalize(y[25:29])

    _unpack_planar(state, y[:6], pp)
    state.leader.p = y[6:9].copy()
    state.leader.v = y[9:12].copy()
    state.q_L = y[12:16].copy()
    state.leader.R = quat_to_rot(state.q_L)
    state.leader.Omega = y[16:19].copy()
    state.follower.p = y[19:22].copy()
    state.follower.v = y[22:25].copy()
    state.q_F = y[25:29].copy()
    state.follower.R = quat_to_rot(state.q_F)
    state.follower.Omega = y[29:32].copy()
    state.f_rot_L = y[32 : 32 + n_rot].copy()
    state.f_rot_F = y[32 + n_rot : 32 + 2 * n_rot].copy()

    # keep the cable bookkeeping meaningful in rotor mode
    p_c1n, p_c2n, v_c1n, v_c2n = _bar_kinematics(state, pp)
    tau2, dir2 = _spring_tension(
        state.follower.p, state.follower.v, p_c2n, v_c2n, pp.l2
    )
    state.tau_F = tau2
    state.slack_F = tau2 <= 0.0
    state.u = dir2


def _check_health(state: WorldState, cfg: ScenarioConfig) -> None:
    values = np.concatenate(
        [
            state.payload.p_p, state.v_p,
            [state.payload.theta, state.payload.v, state.payload.omega],
            state.leader.p, state.follower.p, state.u, state.udot,
        ]
    )
    if not np.all(np.isfinite(values)):
        raise SimulationFault("non-finite state", state.t)
    if np.linalg.norm(state.v_p) > 1e3:
        raise SimulationFault("runaway translational speed", state.t)


# ---------------------------------------------------------------------------
# trajectory replacement


def _specs_equal(a: TrajectorySpec, b: TrajectorySpec) -> bool:
    if len(a.x_segments) != len(b.x_segments):
        return False
    for sa, sb in zip(a.x_segments + a.y_segments, b.x_segments + b.y_segments):
        if sa.t_start != sb.t_start or sa.t_end != sb.t_end:
            return False
        if not np.array_equal(sa.a, sb.a):
            return False
    return True


def switch_trajectory(
    state: WorldState, new_spec: TrajectorySpec, t_switch: float | None = None
) -> WorldState:
    """Atomically replace the active reference trajectory.

    The handoff is refused when the new reference starts more than
    MAX_REFERENCE_JUMP away from where the old one currently points. The
    follower is untouched: it learns about the change only through the
    forces it feels. Replacing a trajectory with an identical one is a
    no-op (no generation bump).
    """
    old = state.active_spec
    if _specs_equal(old, new_spec):
        return state
    t_sw = state.t if t_switch is None else t_switch
    t_old = min(max(t_sw, old.t0), old.t1)
    p_old = evaluate_trajectory(old, t_old)
    p_new = evaluate_trajectory(new_spec, new_spec.t0)
    jump = float(np.linalg.norm(p_new - p_old))
    if jump > MAX_REFERENCE_JUMP:
        raise ValueError(
            f"reference jump {jump:.3f} m exceeds {MAX_REFERENCE_JUMP} m at handoff"
        )
    state.generation += 1
    state.active_spec = dataclasses.replace(new_spec, generation=state.generation)
    return state


# ---------------------------------------------------------------------------
# scenario driver


def _config_echo(cfg: ScenarioConfig) -> dict:
    return {
        "name": cfg.name,
        "seed": cfg.seed,
        "dt": cfg.dt,
        "control_hz": cfg.control_hz,
        "fidelity": cfg.fidelity,
        "follower_mode": cfg.follower_mode,
        "feedback": cfg.feedback,
        "sigma_L": cfg.sigma_L,
        "sigma_F": cfg.sigma_F,
        "F_lower": cfg.follower_gains.F_lower,
        "F_upper": cfg.follower_gains.F_upper,
    }


def run_scenario(cfg: ScenarioConfig) -> tuple[Metrics, LogBuffer]:
    """Run one scenario start to finish.

    A simulation fault ends the run early; the metrics then carry the fault
    message alongside whatever ticks were recorded before it."""
    state = init_world(cfg)
    buf = LogBuffer(cfg.n_ticks)
    fault = None
    try:
        for _ in range(cfg.n_ticks):
            step_world(state, cfg, buf)
    except SimulationFault as exc:
        fault = str(exc)
    metrics = compute_metrics(buf, config_echo=_config_echo(cfg), fault=fault)
    return metrics, buf
