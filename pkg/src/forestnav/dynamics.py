"""Six-DOF rigid-body quadrotor in x configuration driven by motor RPMs.

Rotors are numbered counter-clockwise starting at front-right. Rotors 1 and 3
spin counter-clockwise, rotors 2 and 4 clockwise (seen from above), so the
reaction torque of rotors 1 and 3 points along body -z.

The integrator is a fixed-step RK4 with a 1 ms physics substep. The motor
speeds are held constant over one call to :func:`step_dynamics`.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
from numba import njit

RPM_MAX = 65535.0
PHYSICS_DT = 1e-3
CONTROL_DT = 1e-2

# Body-frame rotor positions (unit arm) and spin signs, rotor order 1..4.
_ROTOR_X = np.array([1.0, 1.0, -1.0, -1.0]) / math.sqrt(2.0)
_ROTOR_Y = np.array([-1.0, 1.0, 1.0, -1.0]) / math.sqrt(2.0)
_YAW_SIGN = np.array([-1.0, 1.0, -1.0, 1.0])


class IntegrationError(FloatingPointError):
    """Raised when the integrated state stops being finite."""


@dataclass(frozen=True)
class PhysicalParams:
    """Crazyflie 2.1 defaults. ``thrust_coeff`` is ``k_f`` in N/RPM^2."""

    mass: float = 0.033
    arm_length: float = 39.73e-3
    thrust_coeff: float = 3.16e-10
    moment_coeff: float = 7.49e-12
    propeller_radius: float = 23.1348e-3
    gravity: float = 9.81
    inertia: tuple[float, float, float] = (1.4e-5, 1.4e-5, 2.17e-5)

    def __post_init__(self):
        scalars = [self.mass, self.arm_length, self.thrust_coeff, self.moment_coeff,
                   self.propeller_radius, self.gravity]
        if not all(math.isfinite(v) and v > 0 for v in scalars):
            raise ValueError(f"physical parameters must be positive: {self}")
        if len(self.inertia) != 3 or not all(math.isfinite(v) and v > 0 for v in self.inertia):
            raise ValueError(f"inertia diagonal must be three positive values: {self.inertia}")
        object.__setattr__(self, "inertia", tuple(float(v) for v in self.inertia))

    def as_array(self):
        arr = self.__dict__.get("_array")
        if arr is None:
            arr = np.array([self.mass, self.arm_length, self.thrust_coeff, self.moment_coeff,
                            self.gravity, *self.inertia])
            object.__setattr__(self, "_array", arr)
        return arr

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known - {"inertia_xx", "inertia_yy", "inertia_zz"}
        if unknown:
            raise ValueError(f"unknown physical parameter keys: {sorted(unknown)}")
        kwargs = {k: v for k, v in data.items() if k in known}
        flat = [data.get(k) for k in ("inertia_xx", "inertia_yy", "inertia_zz")]
        if any(v is not None for v in flat):
            base = list(kwargs.get("inertia", cls.inertia))
            kwargs["inertia"] = tuple(v if v is not None else b for v, b in zip(flat, base))
        return cls(**kwargs)

    @classmethod
    def load(cls, path):
        """Read a flat JSON key/value file in SI units."""
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self):
        d = asdict(self)
        ixx, iyy, izz = d.pop("inertia")
        d.update(inertia_xx=ixx, inertia_yy=iyy, inertia_zz=izz)
        return d


@dataclass
class QuadrotorState:
    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    attitude: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    linear_velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    angular_velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    time: float = 0.0

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float).reshape(3)
        self.attitude = np.asarray(self.attitude, dtype=float).reshape(4)
        self.linear_velocity = np.asarray(self.linear_velocity, dtype=float).reshape(3)
        self.angular_velocity = np.asarray(self.angular_velocity, dtype=float).reshape(3)

    def to_vector(self):
        return np.concatenate([self.position, self.attitude, self.linear_velocity,
                               self.angular_velocity])

    @classmethod
    def from_vector(cls, x, time=0.0):
        x = np.asarray(x, dtype=float)
        return cls(x[0:3].copy(), x[3:7].copy(), x[7:10].copy(), x[10:13].copy(), float(time))

    def copy(self):
        return QuadrotorState.from_vector(self.to_vector(), self.time)


@dataclass(frozen=True)
class MotorCommand:
    normalized_action: np.ndarray
    rpm: np.ndarray

    @classmethod
    def from_action(cls, action, params):
        a = validate_action(action)
        return cls(a, action_to_rpm(a, params))


def hover_rpm(params: PhysicalParams) -> float:
    return math.sqrt(params.gravity * params.mass / (4.0 * params.thrust_coeff))


def validate_action(action):
    a = np.asarray(action, dtype=float)
    if a.shape != (4,):
        raise ValueError(f"action must have shape (4,), got {a.shape}")
    if not np.all(np.isfinite(a)) or np.any(np.abs(a) > 1.0):
        raise ValueError(f"action components must lie in [-1, 1], got {a}")
    return a


def action_to_rpm(action, params: PhysicalParams):
    """Linear map around hover: ``rpm_i = hover * (1 + a_i / 2)``."""
    a = validate_action(action)
    rpm = hover_rpm(params) * (1.0 + 0.5 * a)
    return np.clip(rpm, np.nextafter(0.0, 1.0), np.nextafter(RPM_MAX, 0.0))


def rpm_to_action(rpm, params: PhysicalParams):
    """Inverse of :func:`action_to_rpm`, clipped to the admissible range."""
    a = 2.0 * (np.asarray(rpm, dtype=float) / hover_rpm(params) - 1.0)
    return np.clip(a, -1.0, 1.0)


def rpm_to_wrench(rpm, params: PhysicalParams):
    """Body-frame thrust and torque produced by four rotor speeds.

    Returns
    -------
    thrust : ndarray, shape (3,)
        Collective force, always along body +z.
    torque : ndarray, shape (3,)
        Roll, pitch and yaw moments in N*m.
    """
    rpm = np.asarray(rpm, dtype=float)
    w2 = rpm * rpm
    forces = params.thrust_coeff * w2
    arm = params.arm_length
    torque = np.array([
        arm * np.dot(_ROTOR_Y, forces),
        -arm * np.dot(_ROTOR_X, forces),
        params.moment_coeff * np.dot(_YAW_SIGN, w2),
    ])
    return np.array([0.0, 0.0, forces.sum()]), torque


def allocation_matrix(params: PhysicalParams):
    """Map per-rotor thrusts to ``(collective, tau_x, tau_y, tau_z)``."""
    arm = params.arm_length
    ratio = params.moment_coeff / params.thrust_coeff
    return np.vstack([np.ones(4), arm * _ROTOR_Y, -arm * _ROTOR_X, ratio * _YAW_SIGN])


@njit(cache=True)
def _derivative(x, thrust, tx, ty, tz, mass, g, ixx, iyy, izz, out):
    qw, qx, qy, qz = x[3], x[4], x[5], x[6]
    wx, wy, wz = x[10], x[11], x[12]
    out[0] = x[7]
    out[1] = x[8]
    out[2] = x[9]
    out[3] = 0.5 * (-qx * wx - qy * wy - qz * wz)
    out[4] = 0.5 * (qw * wx + qy * wz - qz * wy)
    out[5] = 0.5 * (qw * wy - qx * wz + qz * wx)
    out[6] = 0.5 * (qw * wz + qx * wy - qy * wx)
    # third column of the rotation matrix scales the collective thrust
    a = thrust / mass
    out[7] = a * 2.0 * (qx * qz + qw * qy)
    out[8] = a * 2.0 * (qy * qz - qw * qx)
    out[9] = a * (1.0 - 2.0 * (qx * qx + qy * qy)) - g
    out[10] = (tx - (izz - iyy) * wy * wz) / ixx
    out[11] = (ty - (ixx - izz) * wz * wx) / iyy
    out[12] = (tz - (iyy - ixx) * wx * wy) / izz


@njit(cache=True)
def _integrate(x0, rpm, p, h, n):
    mass, arm, kf, km, g = p[0], p[1], p[2], p[3], p[4]
    ixx, iyy, izz = p[5], p[6], p[7]
    w1, w2, w3, w4 = rpm[0] * rpm[0], rpm[1] * rpm[1], rpm[2] * rpm[2], rpm[3] * rpm[3]
    c = arm * kf / math.sqrt(2.0)
    thrust = kf * (w1 + w2 + w3 + w4)
    tx = c * (-w1 + w2 + w3 - w4)
    ty = c * (-w1 - w2 + w3 + w4)
    tz = km * (-w1 + w2 - w3 + w4)
    x = x0.copy()
    k1 = np.empty(13)
    k2 = np.empty(13)
    k3 = np.empty(13)
    k4 = np.empty(13)
    tmp = np.empty(13)
    for _ in range(n):
        _derivative(x, thrust, tx, ty, tz, mass, g, ixx, iyy, izz, k1)
        for i in range(13):
            tmp[i] = x[i] + 0.5 * h * k1[i]
        _derivative(tmp, thrust, tx, ty, tz, mass, g, ixx, iyy, izz, k2)
        for i in range(13):
            tmp[i] = x[i] + 0.5 * h * k2[i]
        _derivative(tmp, thrust, tx, ty, tz, mass, g, ixx, iyy, izz, k3)
        for i in range(13):
            tmp[i] = x[i] + h * k3[i]
        _derivative(tmp, thrust, tx, ty, tz, mass, g, ixx, iyy, izz, k4)
        for i in range(13):
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
        norm = math.sqrt(x[3] * x[3] + x[4] * x[4] + x[5] * x[5] + x[6] * x[6])
        for i in range(3, 7):
            x[i] /= norm
    return x


def integrate_vector(x, rpm, dt, params: PhysicalParams, substep=PHYSICS_DT):
    """Advance a flat 13-element state vector; the fast path used by the env."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    n = max(1, int(round(dt / substep)))
    out = _integrate(np.asarray(x, dtype=float), np.asarray(rpm, dtype=float),
                     params.as_array(), dt / n, n)
    if not np.all(np.isfinite(out)):
        raise IntegrationError(f"non-finite state after integration: {out}")
    return out


def step_dynamics(state: QuadrotorState, rpm, dt, params: PhysicalParams,
                  substep=PHYSICS_DT) -> QuadrotorState:
    """Advance ``state`` by ``dt`` seconds with the rotor speeds held constant."""
    x = integrate_vector(state.to_vector(), rpm, dt, params, substep)
    return QuadrotorState.from_vector(x, state.time + dt)
