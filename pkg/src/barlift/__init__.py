"""Desk-scale simulator for communication-free two-UAV bar transport.

A leader UAV tracks a reference trajectory with a backstepping controller
while a follower UAV reacts purely to estimated cable forces, so the pair
carries a rigid bar without exchanging any messages. The package provides
the payload model, the unscented-filter force estimators, the controllers,
a hybrid A* + minimum-snap planner, and a deterministic fixed-step engine
with CSV/JSON logging.
"""

from barlift.model import (
    G,
    BodyForces,
    PayloadParams,
    PayloadState,
    ReferenceSample,
    TrackingError,
    UavParams,
    UavState,
    error_kinematics,
    lyapunov_v2,
    payload_accel,
    payload_angular_accel,
    payload_endpoints,
    rotation_from_yaw,
    tracking_error,
    wrap_angle,
)

__version__ = "0.1.0"

__all__ = [
    "G",
    "BodyForces",
    "PayloadParams",
    "PayloadState",
    "ReferenceSample",
    "TrackingError",
    "UavParams",
    "UavState",
    "error_kinematics",
    "lyapunov_v2",
    "payload_accel",
    "payload_angular_accel",
    "payload_endpoints",
    "rotation_from_yaw",
    "tracking_error",
    "wrap_angle",
    "__version__",
]
