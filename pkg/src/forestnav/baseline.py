"""Classical cascade controller used as a deterministic reference executor.

Position error -> velocity command -> acceleration command -> desired thrust
direction and collective; attitude error -> body torques; exact allocation of
collective and torques to the four rotors. The result is returned through the
same normalized action interface as the learned policy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import quaternion as quat
from .dynamics import PhysicalParams, QuadrotorState, allocation_matrix, hover_rpm
from .env import ViewPoseRef


@dataclass(frozen=True)
class BaselineGains:
    position: float = 1.6
    velocity: float = 4.5
    max_speed_xy: float = 2.0
    max_speed_z: float = 1.0
    max_accel_xy: float = 5.0
    max_accel_z: float = 4.0
    attitude: tuple[float, float, float] = (400.0, 400.0, 36.0)
    rate: tuple[float, float, float] = (32.0, 32.0, 10.0)
    # fraction of the hover thrust per rotor that the yaw moment may use
    yaw_authority: float = 0.3


def _clip_norm(v, limit):
    n = float(np.linalg.norm(v))
    return v if n <= limit else v * (limit / n)


def baseline_control(state: QuadrotorState, reference: ViewPoseRef,
                     params: PhysicalParams | None = None, gains: BaselineGains | None = None,
                     ref_velocity=None):
    """Normalized 4-vector action tracking ``reference``; saturates instead of failing."""
    params = params or PhysicalParams()
    gains = gains or BaselineGains()
    m, g = params.mass, params.gravity
    ff = np.zeros(3) if ref_velocity is None else np.asarray(ref_velocity, dtype=float)

    err = reference.as_array() - state.position
    v_cmd = gains.position * err
    v_cmd[:2] = _clip_norm(v_cmd[:2], gains.max_speed_xy)
    v_cmd[2] = np.clip(v_cmd[2], -gains.max_speed_z, gains.max_speed_z)
    v_cmd += ff
    a_cmd = gains.velocity * (v_cmd - state.linear_velocity)
    a_cmd[:2] = _clip_norm(a_cmd[:2], gains.max_accel_xy)
    a_cmd[2] = np.clip(a_cmd[2], -gains.max_accel_z, gains.max_accel_z)
    force = m * (a_cmd + np.array([0.0, 0.0, g]))

    z_d = force / np.linalg.norm(force)
    psi = reference.yaw_rad
    x_c = np.array([math.cos(psi), math.sin(psi), 0.0])
    y_d = np.cross(z_d, x_c)
    y_d /= np.linalg.norm(y_d)
    x_d = np.cross(y_d, z_d)
    q_d = quat.from_matrix(np.column_stack([x_d, y_d, z_d]))

    att_err = quat.rotation_vector(quat.multiply(quat.conjugate(q_d), state.attitude))
    inertia = np.array(params.inertia)
    omega = state.angular_velocity
    torque = inertia * (-np.array(gains.attitude) * att_err - np.array(gains.rate) * omega)
    torque += np.cross(omega, inertia * omega)
    collective = float(force @ quat.to_matrix(state.attitude)[:, 2])

    hover_force = m * g / 4.0
    ratio = params.moment_coeff / params.thrust_coeff
    yaw_limit = 4.0 * ratio * gains.yaw_authority * hover_force
    torque[2] = np.clip(torque[2], -yaw_limit, yaw_limit)
    forces = np.linalg.solve(allocation_matrix(params), np.concatenate([[collective], torque]))
    # a in [-1, 1] spans rpm in [0.5, 1.5] x hover, i.e. thrust in [0.25, 2.25] x hover
    forces = np.clip(forces, 0.25 * hover_force, 2.25 * hover_force)
    rpm = np.sqrt(forces / params.thrust_coeff)
    return np.clip(2.0 * (rpm / hover_rpm(params) - 1.0), -1.0, 1.0)
