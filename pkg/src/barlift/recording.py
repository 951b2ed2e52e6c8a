"""Run recording: the columnar log, its CSV serialization, and the metrics
summary. The CSV and JSON formats carry schema version strings so outside
consumers can refuse what they do not understand."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass

import numpy as np

LOG_SCHEMA = "barlift-log v1"
METRICS_SCHEMA = "barlift-metrics v1"

# One row per control tick. Commands are body-frame; _true forces are the
# body-frame forces actually transmitted to the payload that tick.
COLUMNS = (
    "t",
    "x_r", "y_r", "theta_r", "v_r", "omega_r", "rho_r",
    "x_c2", "y_c2", "theta", "v", "omega", "v_c2y",
    "x_e", "y_e", "theta_e", "eta1", "eta2", "V2",
    "v_d", "omega_d", "vdot_d", "omegadot_d", "vdot_true", "omegadot_true",
    "F_Lx_cmd", "F_Ly_cmd", "F_Lx_true", "F_Ly_true",
    "F_Fx_cmd", "F_Fy_cmd", "F_Fx_true", "F_Fy_true",
    "F_Fx_hat", "F_Fy_hat",
    "F_Fx_hat_leader", "F_Fy_hat_leader",
    "v_hat",
    "x_c1", "y_c1", "x_c1_hat", "y_c1_hat", "x_c2_hat", "y_c2_hat",
    "x_L", "y_L", "z_L", "x_F", "y_F", "z_F",
    "tau_L", "tau_F", "slack_L", "slack_F",
    "sat_x", "sat_y", "trigger_mode", "trigger_events", "generation",
)
_INDEX = {name: i for i, name in enumerate(COLUMNS)}


class LogBuffer:
    """Fixed-capacity columnar record store (one row per control tick)."""

    def __init__(self, capacity: int):
        self._data = np.zeros((max(capacity, 0), len(COLUMNS)))
        self._n = 0

    def append(self, values: dict[str, float]) -> None:
        if self._n >= self._data.shape[0]:
            grow = np.zeros((max(16, self._data.shape[0]), len(COLUMNS)))
            self._data = np.vstack([self._data, grow])
        row = self._data[self._n]
        for name, value in values.items():
            row[_INDEX[name]] = value
        self._n += 1

    def __len__(self) -> int:
        return self._n

    @property
    def rows(self) -> np.ndarray:
        return self._data[: self._n]

    def column(self, name: str) -> np.ndarray:
        return self._data[: self._n, _INDEX[name]]


def write_log_csv(buf: LogBuffer, path: str) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"# {LOG_SCHEMA}\n")
        fh.write(",".join(COLUMNS) + "\n")
        for row in buf.rows:
            fh.write(",".join(f"{v:.6g}" for v in row) + "\n")


def read_log_csv(path: str) -> dict[str, np.ndarray]:
    """Columns of a log written by write_log_csv; refuses other versions."""
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().strip()
        if header != f"# {LOG_SCHEMA}":
            raise ValueError(f"unsupported log schema: {header!r}")
        names = fh.readline().strip().split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if data.size == 0:
        data = data.reshape(0, len(names))
    return {name: data[:, i] for i, name in enumerate(names)}


@dataclass
class Metrics:
    samples: int = 0
    rmse_x_e: float = 0.0
    rmse_y_e: float = 0.0
    rmse_theta_e: float = 0.0
    rmse_eta1: float = 0.0
    rmse_eta2: float = 0.0
    std_x_e: float = 0.0
    std_y_e: float = 0.0
    std_eta1: float = 0.0
    std_eta2: float = 0.0
    rmse_F_Fx_hat: float = 0.0
    rmse_F_Fy_hat: float = 0.0
    trigger_events: int = 0
    assumption3_ratio: float = 0.0
    sat_x_steps: int = 0
    sat_y_steps: int = 0
    slack_steps: int = 0
    fault: str | None = None
    config: dict | None = None

    def __post_init__(self) -> None:
        for name in (
            "rmse_x_e", "rmse_y_e", "rmse_theta_e", "rmse_eta1", "rmse_eta2",
            "rmse_F_Fx_hat", "rmse_F_Fy_hat",
        ):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be nonnegative")


def _rms(x: np.ndarray) -> float:
    return float(np.sqrt(np.mean(np.square(x)))) if x.size else 0.0


def compute_metrics(buf: LogBuffer, config_echo: dict | None = None,
                    fault: str | None = None) -> Metrics:
    if len(buf) == 0:
        return Metrics(config=config_echo, fault=fault)
    v = buf.column("v")
    v_c2y = buf.column("v_c2y")
    # steady-state window for the nonholonomic check: second half of the run
    half = len(buf) // 2
    mean_speed = float(np.mean(np.abs(v[half:]))) if len(buf) - half > 0 else 0.0
    a3 = _rms(v_c2y[half:]) / mean_speed if mean_speed > 1e-6 else 0.0
    return Metrics(
        samples=len(buf),
        rmse_x_e=_rms(buf.column("x_e")),
        rmse_y_e=_rms(buf.column("y_e")),
        rmse_theta_e=_rms(buf.column("theta_e")),
        rmse_eta1=_rms(buf.column("eta1")),
        rmse_eta2=_rms(buf.column("eta2")),
        std_x_e=float(np.std(buf.column("x_e"))),
        std_y_e=float(np.std(buf.column("y_e"))),
        std_eta1=float(np.std(buf.column("eta1"))),
        std_eta2=float(np.std(buf.column("eta2"))),
        rmse_F_Fx_hat=_rms(buf.column("F_Fx_hat") - buf.column("F_Fx_true")),
        rmse_F_Fy_hat=_rms(buf.column("F_Fy_hat") - buf.column("F_Fy_true")),
        trigger_events=int(buf.column("trigger_events")[-1]),
        assumption3_ratio=a3,
        sat_x_steps=int(np.sum(buf.column("sat_x") > 0.5)),
        sat_y_steps=int(np.sum(buf.column("sat_y") > 0.5)),
        slack_steps=int(np.sum((buf.column("slack_L") > 0.5) | (buf.column("slack_F") > 0.5))),
        fault=fault,
        config=config_echo,
    )


def metrics_to_json(m: Metrics) -> str:
    payload = {"schema": METRICS_SCHEMA}
    payload.update(dataclasses.asdict(m))
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def read_metrics_json(path: str) -> dict:
    with open(path, "r", encoding="ascii") as fh:
        data = json.load(fh)
    if data.get("schema") != METRICS_SCHEMA:
        raise ValueError(f"unsupported metrics schema: {data.get('schema')!r}")
    return data
