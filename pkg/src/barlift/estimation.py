"""Unscented Kalman filtering and cable-force estimation.

Three filter instances replace force sensors and inter-vehicle messages:
each UAV runs a 15-state filter over its own pose, velocity, attitude
deviation, body rates, and the cable force it transmits; the leader runs a
second 12-state filter over the payload point c1 whose force block is the
follower's cable force, reconstructed from rigid-body kinematics. Position
of c1 itself comes from the leader's estimated cable direction, so nothing
here requires communication.

Attitude lives in the filters as a modified-Rodrigues deviation from a
carried reference quaternion; the deviation is folded back into the
reference after every update, which keeps the covariance well-conditioned.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from barlift.model import G, E3, PayloadParams, rotation_from_yaw


class EstimationFault(RuntimeError):
    """Filter covariance lost positive definiteness beyond repair."""


class DirectionUndefined(ValueError):
    """Force too small to define a cable direction."""


# ---------------------------------------------------------------------------
# generic unscented transform


@dataclass(frozen=True)
class SigmaConfig:
    """Sigma-point spread parameters for an n-dimensional state."""

    n: int
    alpha: float = 0.1
    beta: float = 2.0
    kappa: float = 0.0

    def __post_init__(self) -> None:
        if not (0.0 < self.alpha <= 1.0):
            raise ValueError("alpha must be in (0, 1]")
        if self.n < 1:
            raise ValueError("state dimension must be >= 1")
        if self.lam <= -self.n:
            raise ValueError("lambda must exceed -n")

    @property
    def lam(self) -> float:
        return self.alpha**2 * (self.n + self.kappa) - self.n

    @property
    def gamma(self) -> float:
        return float(np.sqrt(self.n + self.lam))

    def weights(self) -> tuple[np.ndarray, np.ndarray]:
        """(mean weights, covariance weights), each length 2n+1."""
        n, lam = self.n, self.lam
        wm = np.full(2 * n + 1, 1.0 / (2.0 * (n + lam)))
        wc = wm.copy()
        wm[0] = lam / (n + lam)
        wc[0] = wm[0] + (1.0 - self.alpha**2 + self.beta)
        return wm, wc


@dataclass
class GaussianBelief:
    mean: np.ndarray
    cov: np.ndarray

    def copy(self) -> "GaussianBelief":
        return GaussianBelief(self.mean.copy(), self.cov.copy())


def safe_cholesky(P: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor with escalating diagonal jitter.

    Jitter starts at 1e-12 and grows tenfold up to 1e-6; beyond that the
    covariance is declared broken.
    """
    P = 0.5 * (P + P.T)
    try:
        return np.linalg.cholesky(P)
    except np.linalg.LinAlgError:
        pass
    jitter = 1e-12
    eye = np.eye(P.shape[0])
    while jitter <= 1e-6:
        try:
            return np.linalg.cholesky(P + jitter * eye)
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise EstimationFault("covariance not positive definite after jitter escalation")


def sigma_points(belief: GaussianBelief, cfg: SigmaConfig) -> np.ndarray:
    """2n+1 sigma points as rows."""
    S = safe_cholesky(belief.cov)
    spread = cfg.gamma * S.T  # rows are scaled factor columns
    return np.vstack([belief.mean, belief.mean + spread, belief.mean - spread])


def _moments(X: np.ndarray, wm: np.ndarray, wc: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = wm @ X
    dev = X - mean
    cov = (wc[:, None] * dev).T @ dev
    return mean, 0.5 * (cov + cov.T)


def ukf_predict(belief, process, Q: np.ndarray, cfg: SigmaConfig) -> GaussianBelief:
    """Unscented prediction. `process` maps a (2n+1, n) row-stack of states."""
    X = process(sigma_points(belief, cfg))
    wm, wc = cfg.weights()
    mean, cov = _moments(np.asarray(X, dtype=float), wm, wc)
    return GaussianBelief(mean, cov + Q)


def ukf_update(belief, measure, R: np.ndarray, y: np.ndarray, cfg: SigmaConfig) -> GaussianBelief:
    """Unscented measurement update. `measure` maps (2n+1, n) -> (2n+1, k)."""
    X = sigma_points(belief, cfg)
    Y = np.asarray(measure(X), dtype=float)
    wm, wc = cfg.weights()
    y_mean = wm @ Y
    dy = Y - y_mean
    dx = X - belief.mean
    Pyy = (wc[:, None] * dy).T @ dy + R
    Pxy = (wc[:, None] * dx).T @ dy
    try:
        K = np.linalg.solve(0.5 * (Pyy + Pyy.T), Pxy.T).T
    except np.linalg.LinAlgError as exc:
        raise EstimationFault("innovation covariance singular") from exc
    mean = belief.mean + K @ (np.asarray(y, dtype=float) - y_mean)
    cov = belief.cov - K @ Pyy @ K.T
    return GaussianBelief(mean, 0.5 * (cov + cov.T))


# ---------------------------------------------------------------------------
# quaternion utilities (scalar-first, vectorized over leading axes)


def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    aw, av = a[..., :1], a[..., 1:]
    bw, bv = b[..., :1], b[..., 1:]
    w = aw * bw - np.sum(av * bv, axis=-1, keepdims=True)
    v = aw * bv + bw * av + np.cross(av, bv)
    return np.concatenate([w, v], axis=-1)


def quat_conj(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return np.concatenate([q[..., :1], -q[..., 1:]], axis=-1)


def quat_normalize(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def quat_from_rotvec(r: np.ndarray) -> np.ndarray:
    """Exponential map; safe at zero rotation."""
    r = np.asarray(r, dtype=float)
    angle = np.linalg.norm(r, axis=-1, keepdims=True)
    half = 0.5 * angle
    # sin(half)/angle via sinc keeps the zero limit exact
    factor = 0.5 * np.sinc(half / np.pi)
    return np.concatenate([np.cos(half), factor * r], axis=-1)


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate vector(s) v by quaternion(s) q."""
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    qw, qv = q[..., :1], q[..., 1:]
    t = 2.0 * np.cross(qv, np.broadcast_to(v, qv.shape))
    return v + qw * t + np.cross(qv, t)


def quat_to_rot(q: np.ndarray) -> np.ndarray:
    w, x, y, z = quat_normalize(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def rot_to_quat(R: np.ndarray) -> np.ndarray:
    """Rotation matrix to quaternion, stable across all trace regimes."""
    R = np.asarray(R, dtype=float)
    t = np.trace(R)
    if t > 0.0:
        s = np.sqrt(t + 1.0) * 2.0
        q = np.array(
            [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
        )
    else:
        i = int(np.argmax(np.diag(R)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = np.sqrt(max(R[i, i] - R[j, j] - R[k, k] + 1.0, 0.0)) * 2.0
        q = np.empty(4)
        q[0] = (R[k, j] - R[j, k]) / s
        q[1 + i] = 0.25 * s
        q[1 + j] = (R[j, i] + R[i, j]) / s
        q[1 + k] = (R[k, i] + R[i, k]) / s
    return quat_normalize(q if q[0] >= 0.0 else -q)


def mrp_from_quat(q: np.ndarray) -> np.ndarray:
    """Modified Rodrigues parameters of the shorter rotation."""
    q = np.asarray(q, dtype=float)
    q = np.where(q[..., :1] < 0.0, -q, q)
    return q[..., 1:] / (1.0 + q[..., :1])


def quat_from_mrp(p: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    n2 = np.sum(p * p, axis=-1, keepdims=True)
    return np.concatenate([(1.0 - n2), 2.0 * p], axis=-1) / (1.0 + n2)


# ---------------------------------------------------------------------------
# per-vehicle force filter (15 states)

_VEHICLE_DIM = 15
_VEHICLE_MEAS_DIM = 12


@dataclass
class VehicleMeasurement:
    """One vehicle's sensor packet: position, velocity, attitude, body rates.

    `a` is the accelerometer channel: proper acceleration resolved in the
    inertial frame, i.e. true acceleration plus g e3. It observes the cable
    force through the thrust balance with no integration lag, which is what
    keeps the force feedback loops phase-stable; leave it None only for
    vehicles that genuinely lack an accelerometer.
    """

    p: np.ndarray
    v: np.ndarray
    q: np.ndarray  # attitude quaternion (scalar first)
    omega: np.ndarray
    a: np.ndarray | None = None


@dataclass
class VehicleBelief:
    """Filter instance estimating one vehicle's state and its cable force.

    State layout: [p (3), v (3), F (3), attitude deviation (3), omega (3)];
    q_ref carries the attitude the deviation is measured against.
    """

    mass: float
    belief: GaussianBelief
    q_ref: np.ndarray
    cfg: SigmaConfig
    Q: np.ndarray
    R: np.ndarray

    @property
    def p_hat(self) -> np.ndarray:
        return self.belief.mean[0:3]

    @property
    def v_hat(self) -> np.ndarray:
        return self.belief.mean[3:6]

    @property
    def F_hat(self) -> np.ndarray:
        return self.belief.mean[6:9]

    @property
    def omega_hat(self) -> np.ndarray:
        return self.belief.mean[12:15]


def default_vehicle_noise(
    pos_var: float = 1e-4,
    vel_var: float = 1e-4,
    att_var: float = 1e-6,
    gyro_var: float = 1e-4,
    accel_var: float = 1.0,
    force_walk: float = 1e-2,
) -> tuple[np.ndarray, np.ndarray]:
    """(Q, R) for a vehicle filter; variances are per filter step.

    R carries rows for every channel the filter can consume; steps with a
    measurement lacking the accelerometer use the leading block.
    """
    Q = np.diag(
        [1e-8] * 3 + [1e-6] * 3 + [force_walk] * 3 + [1e-8] * 3 + [1e-6] * 3
    )
    R = np.diag(
        [pos_var] * 3 + [vel_var] * 3 + [att_var] * 3 + [gyro_var] * 3 + [accel_var] * 3
    )
    return Q, R


def make_vehicle_belief(
    mass: float,
    p0: np.ndarray,
    v0: np.ndarray,
    q0: np.ndarray,
    Q: np.ndarray | None = None,
    R: np.ndarray | None = None,
    alpha: float = 0.1,
    beta: float = 2.0,
    kappa: float = 0.0,
) -> VehicleBelief:
    if Q is None or R is None:
        dq, dr = default_vehicle_noise()
        Q = dq if Q is None else Q
        R = dr if R is None else R
    mean = np.zeros(_VEHICLE_DIM)
    mean[0:3] = p0
    mean[3:6] = v0
    cov = np.diag([1e-2] * 3 + [1e-2] * 3 + [1.0] * 3 + [1e-2] * 3 + [1e-2] * 3)
    return VehicleBelief(
        mass=mass,
        belief=GaussianBelief(mean, cov),
        q_ref=quat_normalize(np.asarray(q0, dtype=float)),
        cfg=SigmaConfig(n=_VEHICLE_DIM, alpha=alpha, beta=beta, kappa=kappa),
        Q=Q,
        R=R,
    )


def follower_filter_step(
    flt: VehicleBelief,
    thrust: float | np.ndarray,
    measured: VehicleMeasurement,
    dt: float,
    F_known: np.ndarray | None = None,
) -> VehicleBelief:
    """One predict/update cycle of a vehicle force filter.

    Process model: double integrator driven by the collective thrust,
    gravity, and the cable force; the attitude deviation integrates the
    body rates and is re-expressed about the propagated reference
    quaternion, then folded back in after the update.

    thrust may be the scalar magnitude, in which case the direction comes
    from the estimated body z axis, or the full thrust vector when the
    vehicle knows what it is applying (its own command under zero-order
    hold). The attitude state is one update behind the hold, so the scalar
    form smears fast thrust-direction changes into the force state.

    F_known is the part of the cable force the vehicle already knows (its
    own commanded transmission). The random-walk force state then covers
    only the residual, so known command changes never appear as estimation
    lag. The total force is F_known + F_hat.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    mass = flt.mass
    F0 = np.zeros(3) if F_known is None else np.asarray(F_known, dtype=float)
    T_vec = None if np.isscalar(thrust) else np.asarray(thrust, dtype=float)
    q_ref = flt.q_ref
    omega_prior = flt.belief.mean[12:15]
    q_ref_next = quat_normalize(quat_mul(q_ref, quat_from_rotvec(omega_prior * dt)))

    def propulsion(X: np.ndarray, ref: np.ndarray) -> np.ndarray:
        if T_vec is not None:
            return np.broadcast_to(T_vec, (X.shape[0], 3))
        q = quat_mul(ref, quat_from_mrp(X[:, 9:12]))
        return thrust * quat_rotate(q, E3)

    def process(X: np.ndarray) -> np.ndarray:
        p, v, F = X[:, 0:3], X[:, 3:6], X[:, 6:9]
        s, w = X[:, 9:12], X[:, 12:15]
        acc = (propulsion(X, q_ref) - mass * G * E3 - F0 - F) / mass
        q = quat_mul(q_ref, quat_from_mrp(s))
        q_next = quat_mul(q, quat_from_rotvec(w * dt))
        s_next = mrp_from_quat(quat_mul(quat_conj(q_ref_next), q_next))
        # exact discretization for piecewise-constant acceleration; a plain
        # Euler position update leaks 0.5*a*dt^2 per step into the force
        # state, which must explain it at a gain of 2m/dt^2
        p_next = p + v * dt + 0.5 * acc * dt * dt
        return np.hstack([p_next, v + acc * dt, F, s_next, w])

    belief = ukf_predict(flt.belief, process, flt.Q, flt.cfg)
    flt.q_ref = q_ref_next

    with_accel = measured.a is not None

    def measure(X: np.ndarray) -> np.ndarray:
        base = np.hstack([X[:, 0:6], X[:, 9:15]])
        if not with_accel:
            return base
        a_imu = (propulsion(X, q_ref_next) - F0 - X[:, 6:9]) / mass
        return np.hstack([base, a_imu])

    rows = [
        measured.p,
        measured.v,
        mrp_from_quat(quat_mul(quat_conj(flt.q_ref), quat_normalize(measured.q))),
        measured.omega,
    ]
    if with_accel:
        rows.append(measured.a)
    y = np.concatenate(rows)
    belief = ukf_update(belief, measure, flt.R[: y.size, : y.size], y, flt.cfg)

    # fold the estimated deviation into the reference attitude
    flt.q_ref = quat_normalize(quat_mul(flt.q_ref, quat_from_mrp(belief.mean[9:12])))
    belief.mean[9:12] = 0.0
    flt.belief = belief
    return flt


def leader_filter1_step(
    flt: VehicleBelief,
    thrust: float,
    measured: VehicleMeasurement,
    dt: float,
    F_known: np.ndarray | None = None,
) -> VehicleBelief:
    """Leader twin of follower_filter_step; yields v_hat_L and F_hat_L."""
    return follower_filter_step(flt, thrust, measured, dt, F_known)


# ---------------------------------------------------------------------------
# leader-side payload filter (12 states)

_PAYLOAD_DIM = 9
_PAYLOAD_MEAS_DIM = 6


@dataclass
class PayloadBelief:
    """Leader's filter over the payload point c1 and the follower force.

    State layout: [p_c1 (3), v_c1 (3), F_F (3)]. The follower force is a
    slow random walk pinned by the accelerometer channel through the bar's
    Newton balance; acceleration itself is never a state, so force-estimate
    errors can only reach F_F through the Kalman gain, never algebraically.
    """

    params: PayloadParams
    belief: GaussianBelief
    cfg: SigmaConfig
    Q: np.ndarray
    R: np.ndarray

    @property
    def p_c1_hat(self) -> np.ndarray:
        return self.belief.mean[0:3]

    @property
    def v_c1_hat(self) -> np.ndarray:
        return self.belief.mean[3:6]

    @property
    def F_F_hat(self) -> np.ndarray:
        return self.belief.mean[6:9]


def default_payload_noise(
    pos_var: float = 1e-4, accel_var: float = 1.0, force_walk: float = 1e-3
) -> tuple[np.ndarray, np.ndarray]:
    # accel_var is sized for a consumer-grade accelerometer. Do not shrink it
    # just because a run is clean: the acceleration channel carries the
    # leader's own command transients into the follower-force block, and
    # trusting it tick-to-tick closes an unstable loop through the lateral
    # force command. force_walk trades F_F tracking lag against that gain.
    Q = np.diag([1e-8] * 3 + [1e-6] * 3 + [force_walk] * 3)
    R = np.diag([pos_var] * 3 + [accel_var] * 3)
    return Q, R


def make_payload_belief(
    params: PayloadParams,
    p0: np.ndarray,
    Q: np.ndarray | None = None,
    R: np.ndarray | None = None,
    alpha: float = 0.1,
    beta: float = 2.0,
    kappa: float = 0.0,
) -> PayloadBelief:
    if Q is None or R is None:
        dq, dr = default_payload_noise()
        Q = dq if Q is None else Q
        R = dr if R is None else R
    mean = np.zeros(_PAYLOAD_DIM)
    mean[0:3] = p0
    cov = np.diag([1e-2] * 3 + [1e-2] * 3 + [1.0] * 3)
    return PayloadBelief(
        params=params,
        belief=GaussianBelief(mean, cov),
        cfg=SigmaConfig(n=_PAYLOAD_DIM, alpha=alpha, beta=beta, kappa=kappa),
        Q=Q,
        R=R,
    )


def payload_cog_accel(
    a_c1: np.ndarray, theta: float, omega: float, omegadot: float, L: float
) -> np.ndarray:
    """CoG acceleration from the c1 acceleration by planar rigid-body transfer."""
    r = rotation_from_yaw(theta) @ np.array([-L / 2.0, 0.0, 0.0])  # c1 -> CoG
    alpha_term = omegadot * np.array([-r[1], r[0], 0.0])
    return np.asarray(a_c1, dtype=float) + alpha_term - omega * omega * r


@dataclass
class GyroRateDeriver:
    """Backward-difference yaw acceleration with a one-pole low pass.

    The smoothing time constant is tau_steps filter periods.
    """

    tau_steps: float = 5.0
    _prev: float | None = None
    _value: float = 0.0

    def step(self, omega: float, dt: float) -> float:
        if dt <= 0.0:
            raise ValueError("dt must be positive")
        raw = 0.0 if self._prev is None else (omega - self._prev) / dt
        self._prev = omega
        a = dt / (self.tau_steps * dt + dt)
        self._value += a * (raw - self._value)
        return self._value


def leader_filter2_step(
    flt: PayloadBelief,
    F_hat_L: np.ndarray,
    a_c1_m: np.ndarray,
    theta_m: float,
    omega_m: float,
    omegadot: float,
    p_c1_m: np.ndarray,
    dt: float,
) -> PayloadBelief:
    """One cycle of the payload filter.

    Both the process and the accelerometer channel predict the measured
    point's acceleration from the bar's Newton balance, a_c1 = (F_L + F_F)/m_p
    - g e3 + moment transfer, with the transfer evaluated from the gyro
    kinematics. F_L enters as a known input; F_F is the random-walk unknown.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    params = flt.params
    m_p = params.m_p
    F_L = np.asarray(F_hat_L, dtype=float)
    r = rotation_from_yaw(theta_m) @ np.array([params.L / 2.0, 0.0, 0.0])  # CoG -> c1
    kin = omegadot * np.array([-r[1], r[0], 0.0]) - omega_m * omega_m * r

    def accel(F: np.ndarray) -> np.ndarray:
        return (F_L + F) / m_p - G * E3 + kin

    def process(X: np.ndarray) -> np.ndarray:
        p, v, F = X[:, 0:3], X[:, 3:6], X[:, 6:9]
        a = accel(F)
        # second-order position update, same reasoning as the vehicle filter
        return np.hstack([p + v * dt + 0.5 * a * dt * dt, v + a * dt, F])

    belief = ukf_predict(flt.belief, process, flt.Q, flt.cfg)

    def measure(X: np.ndarray) -> np.ndarray:
        return np.hstack([X[:, 0:3], accel(X[:, 6:9])])

    y = np.concatenate([p_c1_m, a_c1_m])
    flt.belief = ukf_update(belief, measure, flt.R, y, flt.cfg)
    return flt


# ---------------------------------------------------------------------------
# geometric reconstruction (no communication needed)


def estimate_c1(
    p_L: np.ndarray, F_hat_L: np.ndarray, l1: float, min_force: float = 1e-3
) -> np.ndarray:
    """Payload point c1 from the leader position and its cable-force direction."""
    F = np.asarray(F_hat_L, dtype=float)
    norm = float(np.linalg.norm(F))
    if norm < min_force:
        raise DirectionUndefined(f"cable force {norm:.2e} N below {min_force:.2e} N")
    return np.asarray(p_L, dtype=float) - (F / norm) * l1


def estimate_c2(p_c1_hat: np.ndarray, theta: float, params: PayloadParams) -> np.ndarray:
    """Other bar end from c1 and the bar heading."""
    R = rotation_from_yaw(theta)
    return np.asarray(p_c1_hat, dtype=float) + 2.0 * (R @ np.array([-params.L / 2.0, 0.0, 0.0]))


def estimate_longitudinal_velocity(v_c1_hat: np.ndarray, theta: float) -> float:
    """Longitudinal speed shared by both bar ends (rigid-body equality)."""
    R = rotation_from_yaw(theta)
    return float((R.T @ np.asarray(v_c1_hat, dtype=float))[0])
