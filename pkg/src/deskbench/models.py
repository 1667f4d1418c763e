"""Vehicle dynamics and low-level control primitives.

Kinematic bicycle integrator, Intelligent Driver Model, velocity-scaled PID
steering and the saturating regression law for throttle/brake.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, NumericError
from .geometry import angle_diff, wrap_angle


class EgoState(NamedTuple):
    """Planar pose and speed ``[x, y, heading, v]``."""

    x: float
    y: float
    heading: float
    v: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.heading, self.v], dtype=float)


class ControlInput(NamedTuple):
    steer: float
    accel: float


@dataclass(frozen=True)
class BicycleParams:
    wheelbase: float = 2.5
    max_steer: float = 0.7
    accel_min: float = -6.0
    accel_max: float = 3.0
    max_speed: float = 25.0

    def __post_init__(self):
        if self.wheelbase <= 0:
            raise ConfigError("wheelbase must be positive")
        if not 0.0 < self.max_steer < math.pi / 2:
            raise ConfigError("max_steer must lie in (0, pi/2)")
        if not self.accel_min < 0.0 < self.accel_max:
            raise ConfigError("need accel_min < 0 < accel_max")
        if self.max_speed <= 0:
            raise ConfigError("max_speed must be positive")


@dataclass(frozen=True)
class IdmParams:
    desired_speed: float = 10.0
    time_headway: float = 1.5
    min_gap: float = 2.0
    max_accel: float = 2.0
    comfort_decel: float = 2.0
    exponent: float = 4.0

    def __post_init__(self):
        for name in ("desired_speed", "time_headway", "min_gap", "max_accel", "comfort_decel"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"IDM parameter {name} must be positive")
        if self.exponent < 1:
            raise ConfigError("IDM exponent must be >= 1")


@dataclass(frozen=True)
class PidGains:
    kp: float = 1.2
    ki: float = 0.05
    kd: float = 0.1
    speed_reference: float = 10.0
    integral_clamp: float = 1.0

    def __post_init__(self):
        if self.kp <= 0:
            raise ConfigError("kp must be positive")
        if self.integral_clamp <= 0:
            raise ConfigError("integral_clamp must be positive")


@dataclass
class PidState:
    """Integrator memory of one steering controller."""

    integral: float = 0.0
    prev_error: float = 0.0
    initialized: bool = False


@dataclass(frozen=True)
class LongitudinalParams:
    # throttle = w0 + w1*v + w2*v_target + w3*(v_target - v)
    weights: tuple = (0.3, 0.0, 0.0, 0.5)
    delta_v_sat: float = 0.53
    ratio_sat: float = 1.03
    # pedal -> acceleration mapping used by the rule planner
    throttle_gain: float = 4.0
    coast_throttle: float = 0.3
    brake_gain: float = 6.0

    def __post_init__(self):
        if len(self.weights) != 4:
            raise ConfigError("longitudinal weights need 4 entries")
        if self.delta_v_sat <= 0 or self.ratio_sat <= 1.0:
            raise ConfigError("need delta_v_sat > 0 and ratio_sat > 1")


class Pedals(NamedTuple):
    throttle: float
    brake: float


def _check_finite(*values):
    if not all(math.isfinite(float(v)) for v in values):
        raise NumericError(f"non-finite input: {values}")


def clamp_control(control: ControlInput, params: BicycleParams) -> tuple[ControlInput, bool]:
    steer = min(max(control.steer, -params.max_steer), params.max_steer)
    accel = min(max(control.accel, params.accel_min), params.accel_max)
    clamped = steer != control.steer or accel != control.accel
    return ControlInput(steer, accel), clamped


def euler_update(x, y, heading, v, steer, accel, dt, wheelbase):
    """Raw forward-Euler bicycle update without saturation or wrapping.

    Works elementwise on numpy arrays as well as on floats.
    """
    return (
        x + v * np.cos(heading) * dt,
        y + v * np.sin(heading) * dt,
        heading + v / wheelbase * np.tan(steer) * dt,
        v + accel * dt,
    )


def bicycle_step(state: EgoState, control: ControlInput, dt: float,
                 params: BicycleParams = BicycleParams(),
                 diagnostics: dict | None = None) -> EgoState:
    """Advance the kinematic bicycle one forward-Euler step.

    Controls outside the admissible box are clamped (``diagnostics['clamped']``
    records it). Speed is saturated to ``[0, max_speed]`` and heading wrapped.
    """
    _check_finite(*state, *control, dt)
    if not 0.0 < dt <= 0.5:
        raise NumericError(f"dt={dt} outside (0, 0.5]")
    control, clamped = clamp_control(control, params)
    if diagnostics is not None:
        diagnostics["clamped"] = clamped
    x, y, h, v = euler_update(state.x, state.y, state.heading, state.v,
                              control.steer, control.accel, dt, params.wheelbase)
    v = min(max(float(v), 0.0), params.max_speed)
    return EgoState(float(x), float(y), wrap_angle(h), v)


def bicycle_step_rk4(state: EgoState, control: ControlInput, dt: float,
                     params: BicycleParams = BicycleParams()) -> EgoState:
    """Classical RK4 step for reference solutions; no speed saturation."""
    control, _ = clamp_control(control, params)
    tan_d = math.tan(control.steer)

    def rhs(s):
        return np.array([s[3] * math.cos(s[2]), s[3] * math.sin(s[2]),
                         s[3] / params.wheelbase * tan_d, control.accel])

    s0 = state.as_array()
    k1 = rhs(s0)
    k2 = rhs(s0 + 0.5 * dt * k1)
    k3 = rhs(s0 + 0.5 * dt * k2)
    k4 = rhs(s0 + dt * k3)
    s1 = s0 + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return EgoState(s1[0], s1[1], wrap_angle(s1[2]), s1[3])


def idm_accel(v: float, gap: float, leader_speed: float, params: IdmParams,
              diagnostics: dict | None = None) -> float:
    """Intelligent Driver Model acceleration.

    Pass ``gap=math.inf`` for a free road. A non-positive gap returns the
    emergency value ``-2b`` and sets ``diagnostics['emergency']``.
    """
    b = params.comfort_decel
    if diagnostics is not None:
        diagnostics["emergency"] = False
    if gap <= 0.0:
        if diagnostics is not None:
            diagnostics["emergency"] = True
        return -2.0 * b
    free = 1.0 - (max(v, 0.0) / params.desired_speed) ** params.exponent
    if math.isinf(gap):
        interaction = 0.0
    else:
        dv = v - leader_speed
        s_star = params.min_gap + v * params.time_headway + v * dv / (
            2.0 * math.sqrt(params.max_accel * b))
        s_star = max(s_star, 0.0)
        interaction = (s_star / gap) ** 2
    a = params.max_accel * (free - interaction)
    return min(max(a, -2.0 * b), params.max_accel)


def idm_equilibrium_gap(v: float, params: IdmParams) -> float:
    """Gap at which a follower at ``v`` behind a leader at ``v`` has zero IDM acceleration."""
    if not 0.0 <= v < params.desired_speed:
        raise ValueError(f"equilibrium gap needs 0 <= v < v0, got v={v}")
    s_star = params.min_gap + v * params.time_headway
    return s_star / math.sqrt(1.0 - (v / params.desired_speed) ** params.exponent)


def speed_scale(v: float, reference: float) -> float:
    return reference / (reference + max(v, 0.0))


def pid_steer(state: EgoState, aim_point, gains: PidGains, dt: float,
              pid_state: PidState, max_steer: float = BicycleParams.max_steer,
              diagnostics: dict | None = None) -> float:
    """Steering angle toward ``aim_point`` from a velocity-scaled PID.

    ``pid_state`` is updated in place.
    """
    dx = aim_point[0] - state.x
    dy = aim_point[1] - state.y
    if diagnostics is not None:
        diagnostics["degenerate"] = False
    if math.hypot(dx, dy) < 0.1:
        if diagnostics is not None:
            diagnostics["degenerate"] = True
        return 0.0
    error = angle_diff(math.atan2(dy, dx), state.heading)
    integral = pid_state.integral + error * dt
    integral = min(max(integral, -gains.integral_clamp), gains.integral_clamp)
    derivative = (error - pid_state.prev_error) / dt if pid_state.initialized else 0.0
    pid_state.integral = integral
    pid_state.prev_error = error
    pid_state.initialized = True
    raw = gains.kp * error + gains.ki * integral + gains.kd * derivative
    out = raw * speed_scale(state.v, gains.speed_reference)
    return min(max(out, -max_steer), max_steer)


def longitudinal_control(v: float, v_target: float, params: LongitudinalParams = LongitudinalParams()) -> Pedals:
    """Throttle/brake from the saturating linear-regression law."""
    if v_target <= 0.0:
        return Pedals(0.0, 1.0)
    if v_target - v > params.delta_v_sat:
        return Pedals(1.0, 0.0)
    if v / v_target > params.ratio_sat:
        return Pedals(0.0, 1.0)
    w0, w1, w2, w3 = params.weights
    throttle = w0 + w1 * v + w2 * v_target + w3 * (v_target - v)
    return Pedals(min(max(throttle, 0.0), 1.0), 0.0)


def pedals_to_accel(pedals: Pedals, params: LongitudinalParams = LongitudinalParams()) -> float:
    """Map pedal commands to a longitudinal acceleration (m/s^2).

    The regression intercept plays the role of the throttle needed to hold
    speed, so only throttle above ``coast_throttle`` accelerates.
    """
    if pedals.brake > 0.0:
        return -params.brake_gain * pedals.brake
    return params.throttle_gain * (pedals.throttle - params.coast_throttle)
