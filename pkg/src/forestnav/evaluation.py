"""Episode-level evaluation of a policy or of the baseline controller."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import quaternion as quat
from .baseline import baseline_control
from .dynamics import QuadrotorState
from .env import EpisodeLimits, InspectionEnv, TerminationStatus, ViewPoseRef, wrap_deg
from .policy import PolicyWeights, actor_forward

SUCCESS_RADIUS = 0.25


@dataclass(frozen=True)
class EvalScenario:
    """Hover task used for evaluation.

    ``offset`` replaces the random cylinder reset with a fixed start that
    far from the reference (hover-at-offset).
    """

    name: str = "hover"
    reference: ViewPoseRef = ViewPoseRef((0.0, 0.0, 1.0), 0.0)
    horizon: int = 1500
    evaluation: bool = True
    offset: tuple | None = None
    success_radius: float = SUCCESS_RADIUS


SCENARIOS = {
    "hover": EvalScenario(),
    "hover_noisy": EvalScenario(name="hover_noisy", evaluation=False),
    "hover_offset": EvalScenario(name="hover_offset", offset=(1.0, 0.0, 0.0)),
}


@dataclass
class EpisodeResult:
    status: TerminationStatus
    steps: int
    position_error: float
    yaw_error_deg: float
    total_reward: float
    success: bool


@dataclass
class EvalMetrics:
    success_rate: float
    mean_position_error: float
    mean_yaw_error_deg: float
    episodes: list[EpisodeResult] = field(default_factory=list)

    def to_dict(self):
        return {"success_rate": self.success_rate,
                "mean_position_error": self.mean_position_error,
                "mean_yaw_error_deg": self.mean_yaw_error_deg,
                "episodes": [{"status": e.status.value, "steps": e.steps,
                              "position_error": e.position_error,
                              "yaw_error_deg": e.yaw_error_deg,
                              "total_reward": e.total_reward, "success": e.success}
                             for e in self.episodes]}


def _controller(weights):
    if weights is None or weights == "baseline":
        return lambda env: baseline_control(env.state, env.reference, env.params)
    if isinstance(weights, PolicyWeights):
        return lambda env: actor_forward(env.observe(), weights)
    raise TypeError("expected PolicyWeights or 'baseline'")


def run_episode(controller, env: InspectionEnv, scenario: EvalScenario) -> EpisodeResult:
    if scenario.offset is None:
        env.reset()
    else:
        ref = scenario.reference
        env.reset(QuadrotorState(position=ref.as_array() + np.asarray(scenario.offset),
                                 attitude=quat.from_yaw(ref.yaw_rad)))
    total = 0.0
    while True:
        res = env.step(np.clip(controller(env), -1.0, 1.0))
        total += res.reward.total
        if res.status.done:
            break
    err = float(np.linalg.norm(env.state.position - env.reference.as_array()))
    if not math.isfinite(err):
        err = math.inf
    yaw_err = abs(float(wrap_deg(math.degrees(quat.yaw_of(env.state.attitude))
                                 - env.reference.yaw_deg)))
    ok = res.status is TerminationStatus.TIME_LIMIT and err < scenario.success_radius
    return EpisodeResult(res.status, env.step_count, err, yaw_err, total, bool(ok))


def evaluate(weights, scenario="hover", n_episodes=50, seed=0) -> EvalMetrics:
    """Run ``n_episodes`` seeded episodes; ``weights`` may be ``"baseline"``.

    Success means the episode reached the time limit without a failure
    termination and ended within ``success_radius`` of the reference. Mean
    errors are over the final states of all episodes.
    """
    if isinstance(scenario, str):
        scenario = SCENARIOS[scenario]
    controller = _controller(weights)
    episodes = []
    for k in range(n_episodes):
        env = InspectionEnv(reference=scenario.reference, seed=seed + k,
                            evaluation=scenario.evaluation,
                            limits=EpisodeLimits(horizon=scenario.horizon))
        episodes.append(run_episode(controller, env, scenario))
    if not episodes:
        return EvalMetrics(0.0, math.nan, math.nan, [])
    return EvalMetrics(
        success_rate=sum(e.success for e in episodes) / len(episodes),
        mean_position_error=float(np.mean([e.position_error for e in episodes])),
        mean_yaw_error_deg=float(np.mean([e.yaw_error_deg for e in episodes])),
        episodes=episodes,
    )
