"""View-pose tracking environment around the rigid-body simulator.

The policy sees a noisy 17-vector expressed in the body frame::

    [position error (3) | error quaternion (4) | linear velocity (3) |
     angular velocity (3) | previous action (4)]

while the reward is evaluated on the noiseless inertial state.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import quaternion as quat
from .dynamics import (
    CONTROL_DT,
    IntegrationError,
    PhysicalParams,
    QuadrotorState,
    action_to_rpm,
    integrate_vector,
    validate_action,
)

OBS_DIM = 17
ACT_DIM = 4
POSITION_ERROR = slice(0, 3)
ERROR_QUATERNION = slice(3, 7)
LINEAR_VELOCITY = slice(7, 10)
ANGULAR_VELOCITY = slice(10, 13)
LAST_ACTION = slice(13, 17)

SURVIVAL_REWARD = 0.01
REWARD_WEIGHTS = {"horizontal": 0.25, "vertical": 0.25, "velocity": 0.15, "geodesic": 0.2}
SMOOTHNESS_WEIGHT = 0.02
MAX_REWARD = SURVIVAL_REWARD + sum(REWARD_WEIGHTS.values())
MIN_REWARD = SURVIVAL_REWARD - SMOOTHNESS_WEIGHT * 16.0


def wrap_deg(angle):
    """Wrap degrees into ``[-180, 180)``."""
    wrapped = (np.asarray(angle, dtype=float) + 180.0) % 360.0 - 180.0
    # float modulo can land exactly on +180 for inputs just below -180
    wrapped = np.where(wrapped >= 180.0, wrapped - 360.0, wrapped)
    return float(wrapped) if np.ndim(wrapped) == 0 else wrapped


@dataclass(frozen=True)
class ViewPoseRef:
    position: tuple[float, float, float]
    yaw_deg: float = 0.0

    def __post_init__(self):
        pos = tuple(float(v) for v in np.asarray(self.position, dtype=float).reshape(3))
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "yaw_deg", wrap_deg(self.yaw_deg))

    @property
    def yaw_rad(self):
        return math.radians(self.yaw_deg)

    def attitude(self):
        """Yaw-only reference attitude quaternion."""
        return quat.from_yaw(self.yaw_rad)

    def as_array(self):
        return np.array(self.position)


@dataclass(frozen=True)
class NoiseConfig:
    position: float = 1e-3
    quaternion: float = 2e-3
    velocity: float = 1e-3
    angular_velocity: float = 2e-3

    def __post_init__(self):
        for name in ("position", "quaternion", "velocity", "angular_velocity"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"noise std {name} must be >= 0")

    @classmethod
    def off(cls):
        return cls(0.0, 0.0, 0.0, 0.0)

    def std_vector(self):
        return np.repeat([self.position, self.quaternion, self.velocity, self.angular_velocity],
                         [3, 4, 3, 3])


@dataclass(frozen=True)
class RewardBreakdown:
    survival: float
    horizontal: float
    vertical: float
    velocity: float
    geodesic: float
    smoothness: float
    total: float

    def as_dict(self):
        return {"survival": self.survival, "horizontal": self.horizontal,
                "vertical": self.vertical, "velocity": self.velocity,
                "geodesic": self.geodesic, "smoothness": self.smoothness, "total": self.total}


class TerminationStatus(enum.Enum):
    RUNNING = "running"
    FAILURE_POSITION_BOUND = "failure_position_bound"
    FAILURE_ATTITUDE = "failure_attitude"
    FAILURE_NON_FINITE = "failure_non_finite"
    TIME_LIMIT = "time_limit"

    @property
    def done(self):
        return self is not TerminationStatus.RUNNING

    @property
    def failed(self):
        return self.value.startswith("failure")


@dataclass(frozen=True)
class EpisodeLimits:
    position_bound: float = 3.0
    max_tilt_deg: float = 90.0
    horizon: int = 1500


def error_quaternion(state: QuadrotorState, reference: ViewPoseRef):
    """``conj(q_ref) * q`` on the hemisphere with non-negative scalar part."""
    return quat.canonical(quat.multiply(quat.conjugate(reference.attitude()), state.attitude))


def geodesic_angle(q_err) -> float:
    """Rotation angle of an error quaternion, in ``[0, pi]``."""
    w, x, y, z = quat.canonical(q_err)
    return 2.0 * math.atan2(math.sqrt(x * x + y * y + z * z), w)


def _dual_bandwidth(sq):
    return 0.6 * math.exp(-4.0 * sq) + 0.4 * math.exp(-150.0 * sq)


def compute_reward(state: QuadrotorState, reference: ViewPoseRef, action,
                   last_action) -> RewardBreakdown:
    err = state.position - reference.as_array()
    horizontal = _dual_bandwidth(err[0] ** 2 + err[1] ** 2)
    vertical = _dual_bandwidth(err[2] ** 2)
    velocity = math.exp(-1.5 * float(state.linear_velocity @ state.linear_velocity))
    theta = geodesic_angle(error_quaternion(state, reference))
    geodesic = 0.6 * math.exp(-0.5 * theta ** 2) + 0.4 * math.exp(-150.0 * theta ** 2)
    delta = np.asarray(action, dtype=float) - np.asarray(last_action, dtype=float)
    smoothness = float(delta @ delta)
    total = (SURVIVAL_REWARD
             + REWARD_WEIGHTS["horizontal"] * horizontal
             + REWARD_WEIGHTS["vertical"] * vertical
             + REWARD_WEIGHTS["velocity"] * velocity
             + REWARD_WEIGHTS["geodesic"] * geodesic
             - SMOOTHNESS_WEIGHT * smoothness)
    return RewardBreakdown(SURVIVAL_REWARD, horizontal, vertical, velocity, geodesic,
                           smoothness, total)


def observe(state: QuadrotorState, reference: ViewPoseRef, last_action, rng=None,
            noise: NoiseConfig | None = None):
    """Build the 17-component observation; ``rng=None`` or ``noise=None`` disables noise."""
    rot = quat.to_matrix(state.attitude)
    obs = np.empty(OBS_DIM)
    obs[POSITION_ERROR] = rot.T @ (state.position - reference.as_array())
    obs[ERROR_QUATERNION] = error_quaternion(state, reference)
    obs[LINEAR_VELOCITY] = rot.T @ state.linear_velocity
    obs[ANGULAR_VELOCITY] = state.angular_velocity
    if noise is not None and rng is not None:
        obs[:13] += rng.normal(0.0, 1.0, 13) * noise.std_vector()
    obs[LAST_ACTION] = last_action
    return obs


def sample_initial_state(rng, reference: ViewPoseRef, radius=2.0, height=2.0):
    """Rest state uniform in a vertical cylinder around the reference, level, random yaw."""
    r = radius * math.sqrt(rng.random())
    phi = rng.uniform(-math.pi, math.pi)
    dz = rng.uniform(-0.5 * height, 0.5 * height)
    yaw = rng.uniform(-math.pi, math.pi)
    p = reference.as_array() + np.array([r * math.cos(phi), r * math.sin(phi), dz])
    return QuadrotorState(position=p, attitude=quat.from_yaw(yaw))


def reset(rng, reference: ViewPoseRef, noise: NoiseConfig | None = None, radius=2.0,
          height=2.0):
    state = sample_initial_state(rng, reference, radius, height)
    return state, observe(state, reference, np.zeros(ACT_DIM), rng, noise)


def check_termination(state: QuadrotorState, reference: ViewPoseRef, step_count,
                      limits: EpisodeLimits = EpisodeLimits()) -> TerminationStatus:
    vec = state.to_vector()
    if not np.all(np.isfinite(vec)):
        return TerminationStatus.FAILURE_NON_FINITE
    if np.linalg.norm(state.position - reference.as_array()) > limits.position_bound:
        return TerminationStatus.FAILURE_POSITION_BOUND
    if math.degrees(quat.tilt_of(state.attitude)) > limits.max_tilt_deg:
        return TerminationStatus.FAILURE_ATTITUDE
    if step_count >= limits.horizon:
        return TerminationStatus.TIME_LIMIT
    return TerminationStatus.RUNNING


@dataclass
class StepResult:
    observation: np.ndarray
    reward: RewardBreakdown
    status: TerminationStatus
    rpm: np.ndarray = field(default_factory=lambda: np.zeros(4))


class InspectionEnv:
    """Single quadrotor tracking a (possibly moving) view-pose reference at 100 Hz.

    ``reference`` can be reassigned between steps for trajectory tracking.
    With ``evaluation=True`` no observation noise is injected.
    """

    def __init__(self, reference: ViewPoseRef | None = None, params: PhysicalParams | None = None,
                 noise: NoiseConfig | None = None, limits: EpisodeLimits | None = None,
                 seed=None, evaluation=False, reset_radius=2.0, reset_height=2.0):
        self.reference = reference or ViewPoseRef((0.0, 0.0, 1.0), 0.0)
        self.params = params or PhysicalParams()
        self.noise = NoiseConfig() if noise is None else noise
        self.limits = limits or EpisodeLimits()
        self.evaluation = evaluation
        self.reset_radius = reset_radius
        self.reset_height = reset_height
        self.rng = np.random.default_rng(seed)
        self.state = QuadrotorState(position=self.reference.as_array())
        self.last_action = np.zeros(ACT_DIM)
        self.step_count = 0

    @property
    def _active_noise(self):
        return None if self.evaluation else self.noise

    def reset(self, state: QuadrotorState | None = None):
        """Sample an initial state from the reset cylinder unless ``state`` is given."""
        if state is None:
            self.state, _ = reset(self.rng, self.reference, None, self.reset_radius,
                                  self.reset_height)
        else:
            self.state = state.copy()
        self.last_action = np.zeros(ACT_DIM)
        self.step_count = 0
        return self.observe()

    def observe(self):
        return observe(self.state, self.reference, self.last_action, self.rng, self._active_noise)

    def step(self, action) -> StepResult:
        a = validate_action(action)
        rpm = action_to_rpm(a, self.params)
        try:
            x = integrate_vector(self.state.to_vector(), rpm, CONTROL_DT, self.params)
        except IntegrationError:
            self.step_count += 1
            zero = RewardBreakdown(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
            obs = np.zeros(OBS_DIM)
            obs[LAST_ACTION] = a
            self.last_action = a
            return StepResult(obs, zero, TerminationStatus.FAILURE_NON_FINITE, rpm)
        self.state = QuadrotorState.from_vector(x, self.state.time + CONTROL_DT)
        self.step_count += 1
        reward = compute_reward(self.state, self.reference, a, self.last_action)
        status = check_termination(self.state, self.reference, self.step_count, self.limits)
        self.last_action = a
        return StepResult(self.observe(), reward, status, rpm)
