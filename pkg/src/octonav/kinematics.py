"""Skid-steer kinematics: frame transforms, wheel/body velocity maps and exact arc integration."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateICR, InvalidGeometry, WheelSpeedExceeded

STRAIGHT_EPS = 1e-9


def wrap_angle(theta: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    return math.pi - (math.pi - theta) % (2.0 * math.pi)


def angle_diff(a: float, b: float) -> float:
    return wrap_angle(a - b)


@dataclass(frozen=True)
class KinematicParams:
    r: float = 0.165
    y_icr0: float = 0.35
    omega_wheel_max: float = 9.0

    def __post_init__(self):
        if not self.r > 0 or not self.y_icr0 > 0 or not self.omega_wheel_max > 0:
            raise InvalidGeometry("wheel radius, y_icr0 and omega_wheel_max must be positive")

    def max_yaw_rate(self, v_x: float) -> float:
        """Largest |omega_z| at forward speed v_x that keeps both wheels inside their bound."""
        wheel_v = self.omega_wheel_max * self.r
        if abs(v_x) > wheel_v:
            raise WheelSpeedExceeded(f"v_x={v_x} exceeds wheel-limited speed {wheel_v}")
        return (wheel_v - abs(v_x)) / self.y_icr0


@dataclass(frozen=True)
class EgoState:
    X: float = 0.0
    Y: float = 0.0
    theta: float = 0.0
    v_x: float = 0.0
    v_y: float = 0.0
    omega_z: float = 0.0

    @property
    def pose(self) -> tuple[float, float, float]:
        return (self.X, self.Y, self.theta)


@dataclass(frozen=True)
class ControlSignal:
    v_x: float
    omega_z: float


def body_to_world(theta, v_x, v_y, omega_z):
    c, s = math.cos(theta), math.sin(theta)
    return (c * v_x - s * v_y, s * v_x + c * v_y, omega_z)


def wheel_to_body(omega_l, omega_r, params: KinematicParams):
    vl = omega_l * params.r
    vr = omega_r * params.r
    return ((vl + vr) / 2.0, 0.0, (-vl + vr) / (2.0 * params.y_icr0))


def body_to_wheel(u: ControlSignal, params: KinematicParams):
    # right inverse of wheel_to_body
    vl = u.v_x - u.omega_z * params.y_icr0
    vr = u.v_x + u.omega_z * params.y_icr0
    omega_l = vl / params.r
    omega_r = vr / params.r
    limit = params.omega_wheel_max * (1.0 + 1e-12)
    if abs(omega_l) > limit or abs(omega_r) > limit:
        raise WheelSpeedExceeded(
            f"wheel speeds ({omega_l:.4g}, {omega_r:.4g}) exceed {params.omega_wheel_max}"
        )
    return omega_l, omega_r


def icr_jacobian(x_icr: float, y_icr_l: float, y_icr_r: float) -> np.ndarray:
    """Map (omega_l*r, omega_r*r) to (v_x, v_y, omega_z) given side ICR coordinates."""
    denom = y_icr_l - y_icr_r
    if denom == 0.0:
        raise DegenerateICR("left and right ICR coincide")
    return np.array(
        [[-y_icr_r, y_icr_l], [x_icr, -x_icr], [-1.0, 1.0]], dtype=float
    ) / denom


def symmetric_jacobian(y_icr0: float) -> np.ndarray:
    return np.array([[y_icr0, y_icr0], [0.0, 0.0], [-1.0, 1.0]]) / (2.0 * y_icr0)


def step_exact(state: EgoState, u: ControlSignal, dt: float) -> EgoState:
    """Integrate constant (v_x, omega_z) over dt in closed form."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    th = state.theta
    v, w = u.v_x, u.omega_z
    if abs(w) < STRAIGHT_EPS:
        x = state.X + v * dt * math.cos(th)
        y = state.Y + v * dt * math.sin(th)
    else:
        # chord form of R*(sin(th+w*dt) - sin(th)); stable as w -> 0
        half = 0.5 * w * dt
        chord = v * dt * math.sin(half) / half
        x = state.X + chord * math.cos(th + half)
        y = state.Y + chord * math.sin(th + half)
    return EgoState(x, y, wrap_angle(th + w * dt), v, 0.0, w)
