"""End-to-end orchestration: tour -> RRT* -> reference stream -> 100 Hz control.

Every control step appends one row to a :class:`MissionLog`. Column order is
fixed by :data:`LOG_COLUMNS` and is what :func:`export_log` writes.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import quaternion as quat
from .baseline import baseline_control
from .dynamics import CONTROL_DT, PhysicalParams, QuadrotorState
from .env import EpisodeLimits, InspectionEnv, ViewPoseRef, wrap_deg
from .forest import inside_trunk
from .planning import ForestMap, PlanningError, RRTConfig, plan_smooth_path
from .policy import PolicyWeights, actor_forward
from .references import ReferenceStream, gen_circle, gen_helix, gen_scan, hold, path_to_stream
from .references import TrunkSpec
from .tour import ARRIVAL_RADIUS, next_target, plan_tour

log = logging.getLogger(__name__)

LOG_COLUMNS = (
    "t", "x", "y", "z", "qw", "qx", "qy", "qz", "vx", "vy", "vz", "wx", "wy", "wz",
    "ref_x", "ref_y", "ref_z", "ref_yaw_deg",
    "a1", "a2", "a3", "a4", "rpm1", "rpm2", "rpm3", "rpm4",
    "r_survival", "r_horizontal", "r_vertical", "r_velocity", "r_geodesic", "r_smoothness",
    "r_total", "target_index", "phase",
)
_COL = {name: i for i, name in enumerate(LOG_COLUMNS)}


class MissionError(RuntimeError):
    pass


class BaselineExecutor:
    name = "baseline"

    def __init__(self, params: PhysicalParams | None = None):
        self.params = params or PhysicalParams()

    def __call__(self, env: InspectionEnv, ref_velocity):
        return baseline_control(env.state, env.reference, self.params,
                                ref_velocity=ref_velocity)


class PolicyExecutor:
    name = "policy"

    def __init__(self, weights: PolicyWeights):
        self.weights = weights

    def __call__(self, env: InspectionEnv, ref_velocity):
        return actor_forward(env.observe(), self.weights)


@dataclass(frozen=True)
class InspectionTask:
    """A tour target plus the behavior flown once it is reached.

    ``behavior`` is one of ``None``, ``"hold"``, ``"scan"``, ``"circle"`` or
    ``"helix"``; ``params`` carries the generator arguments.
    """

    target: ViewPoseRef
    behavior: str | None = None
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class MissionConfig:
    rrt: RRTConfig = RRTConfig()
    cruise_speed: float = 1.0
    switch_radius: float = ARRIVAL_RADIUS
    settle_tolerance: float = 0.05
    settle_timeout: float = 5.0
    leg_timeout: float = 30.0
    evaluation: bool = True
    position_bound: float = 3.0


@dataclass
class MissionLog:
    rows: list[list] = field(default_factory=list)
    events: list[dict] = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    @property
    def columns(self):
        return LOG_COLUMNS

    def __len__(self):
        return len(self.rows)

    def column(self, name):
        i = _COL[name]
        return np.array([row[i] for row in self.rows])

    def positions(self):
        return np.array([row[1:4] for row in self.rows]).reshape(-1, 3)

    def references(self):
        return np.array([row[14:17] for row in self.rows]).reshape(-1, 3)

    def phase_mask(self, phase):
        return np.array([row[-1] == phase for row in self.rows], dtype=bool)

    def to_dict(self):
        return {"columns": list(LOG_COLUMNS), "rows": self.rows, "events": self.events,
                "summary": self.summary}

    @classmethod
    def from_dict(cls, data):
        if list(data["columns"]) != list(LOG_COLUMNS):
            raise ValueError("log columns do not match this version")
        return cls([list(r) for r in data["rows"]], list(data["events"]), dict(data["summary"]))


def _row(t, state, ref, action, rpm, reward, target_index, phase):
    return [t, *state.position.tolist(), *state.attitude.tolist(),
            *state.linear_velocity.tolist(), *state.angular_velocity.tolist(),
            *ref.position, ref.yaw_deg, *np.asarray(action, dtype=float).tolist(),
            *np.asarray(rpm, dtype=float).tolist(), reward.survival, reward.horizontal,
            reward.vertical, reward.velocity, reward.geodesic, reward.smoothness, reward.total,
            int(target_index), phase]


class _Flight:
    """Shared closed-loop machinery for missions and direct stream tracking."""

    def __init__(self, fmap, executor, config: MissionConfig, start_state, params=None):
        self.fmap = fmap
        self.executor = executor
        self.config = config
        horizon = 10 ** 9
        self.env = InspectionEnv(
            reference=ViewPoseRef(start_state.position, math.degrees(quat.yaw_of(
                start_state.attitude))),
            params=params, evaluation=config.evaluation,
            limits=EpisodeLimits(position_bound=config.position_bound, horizon=horizon))
        self.env.reset(start_state)
        self.log = MissionLog()
        self.collisions = 0
        self.failed = None

    @property
    def state(self):
        return self.env.state

    def step(self, ref: ViewPoseRef, ref_velocity, target_index, phase):
        self.env.reference = ref
        action = np.clip(self.executor(self.env, ref_velocity), -1.0, 1.0)
        res = self.env.step(action)
        st = self.env.state
        self.log.rows.append(_row(round(self.env.step_count * CONTROL_DT, 10), st, ref, action,
                                  res.rpm, res.reward, target_index, phase))
        if self.fmap is not None and inside_trunk(st.position, self.fmap):
            self.collisions += 1
            self.fail("collision", f"inside a trunk at {st.position.round(3).tolist()}")
        elif res.status.failed:
            self.fail(res.status.value, f"termination {res.status.value}")
        return res

    def fail(self, kind, message):
        self.failed = kind
        self.log.events.append({"t": self.env.step_count * CONTROL_DT, "event": "failure",
                                "kind": kind, "message": message})

    def track(self, stream: ReferenceStream, target_index, phase, stop=None):
        """Fly a whole stream; ``stop(k)`` may end it early. Returns steps flown."""
        for k in range(len(stream)):
            vel = stream.velocity(k) if len(stream) > 1 else np.zeros(3)
            self.step(stream.pose(k), vel, target_index, phase)
            if self.failed or (stop is not None and stop(k)):
                return k + 1
        return len(stream)

    def settle(self, pose: ViewPoseRef, target_index, phase="settle"):
        limit = int(round(self.config.settle_timeout / CONTROL_DT))
        for _ in range(limit):
            self.step(pose, np.zeros(3), target_index, phase)
            if self.failed:
                return
            if np.linalg.norm(self.state.position - pose.as_array()) < \
                    self.config.settle_tolerance:
                return


def behavior_stream(task: InspectionTask) -> ReferenceStream | None:
    p = dict(task.params)
    t = task.target
    if task.behavior is None:
        return None
    if task.behavior == "hold":
        return hold(t, p.get("duration", 2.0))
    if task.behavior == "scan":
        return gen_scan(t, p.get("angular_rate", 36.0))
    trunk = TrunkSpec(tuple(p["trunk_center"]), p["trunk_radius"], p.get("standoff", 0.5))
    bearing = p.get("start_bearing_deg", 0.0)
    if task.behavior == "circle":
        return gen_circle(trunk, p.get("altitude", t.position[2]), p.get("angular_rate", 20.0),
                          p.get("revolutions", 1.0), bearing)
    if task.behavior == "helix":
        return gen_helix(trunk, p.get("z_start", t.position[2]), p["z_end"],
                         p.get("angular_rate", 20.0), p.get("climb_rate", 0.2), bearing)
    raise ValueError(f"unknown behavior {task.behavior!r}")


def _summarize(flight: _Flight, extra):
    logd = flight.log
    summary = {
        "steps": len(logd),
        "duration": len(logd) * CONTROL_DT,
        "collisions": flight.collisions,
        "failure": flight.failed,
        "success": flight.failed is None,
    }
    if len(logd):
        err = logd.positions() - logd.references()
        summary["tracking_rms"] = float(np.sqrt(np.mean(np.sum(err ** 2, axis=1))))
    summary.update(extra)
    return summary


def run_mission(fmap: ForestMap, tasks, executor, config: MissionConfig = MissionConfig(),
                start_state: QuadrotorState | None = None, params=None) -> MissionLog:
    """Visit ``tasks`` (ViewPoseRefs or InspectionTasks) in TSP order.

    For each leg: plan from the current odometry, fly the smoothed path at
    cruise speed, switch target at the first step strictly inside the arrival
    radius, then run the target's behavior. Planner failures, termination
    failures and trunk collisions abort the mission with a partial log.
    """
    tasks = [t if isinstance(t, InspectionTask) else InspectionTask(t) for t in tasks]
    if start_state is None:
        raise ValueError("run_mission needs a start state")
    flight = _Flight(fmap, executor, config, start_state, params)
    plan = plan_tour(flight.state.position, [t.target for t in tasks])
    progress = 0
    visited, path_lengths, switch_errors = [], [], []
    for leg in range(len(plan.order)):
        idx = plan.order[leg]
        task = tasks[idx]
        start = flight.state.position.copy()
        rrt = replace(config.rrt, seed=config.rrt.seed + leg)
        try:
            path = plan_smooth_path(start, task.target.as_array(), fmap, rrt,
                                    goal_yaw_deg=task.target.yaw_deg)
        except PlanningError as exc:
            flight.fail("planner", f"leg {leg} to target {idx}: {exc}")
            break
        path_lengths.append(path.length)
        stream = path_to_stream(path, config.cruise_speed)
        flight.log.events.append({"t": flight.env.step_count * CONTROL_DT, "event": "leg_start",
                                  "leg": leg, "target": idx, "path_length": path.length,
                                  "waypoints": path.positions.tolist()})
        reached = {}

        def arrived(k, idx=idx, leg=leg):
            _, new_progress = next_target(flight.state.position, plan, leg,
                                          config.switch_radius)
            if new_progress > leg:
                reached["k"] = k
                return True
            return False

        flight.track(stream, idx, f"leg{leg}", stop=arrived)
        hold_steps = int(round(config.leg_timeout / CONTROL_DT))
        final = stream.pose(len(stream) - 1)
        while not flight.failed and "k" not in reached and hold_steps > 0:
            flight.step(final, np.zeros(3), idx, f"leg{leg}")
            arrived(len(stream))
            hold_steps -= 1
        if flight.failed:
            break
        if "k" not in reached:
            flight.fail("leg_timeout", f"target {idx} not reached")
            break
        progress = leg + 1
        visited.append(idx)
        switch_errors.append(float(np.linalg.norm(flight.state.position
                                                  - task.target.as_array())))
        flight.log.events.append({"t": flight.env.step_count * CONTROL_DT, "event": "target",
                                  "target": idx, "distance": switch_errors[-1]})
        behavior = behavior_stream(task)
        if behavior is not None:
            flight.settle(behavior.pose(0), idx)
            if not flight.failed:
                flight.track(behavior, idx, f"{task.behavior}{leg}")
            if flight.failed:
                break
            end = behavior.pose(len(behavior) - 1)
            yaw = math.degrees(quat.yaw_of(flight.state.attitude))
            flight.log.events.append({
                "t": flight.env.step_count * CONTROL_DT, "event": "behavior_end", "target": idx,
                "behavior": task.behavior,
                "position_error": float(np.linalg.norm(flight.state.position - end.as_array())),
                "yaw_error_deg": float(abs(wrap_deg(yaw - end.yaw_deg)))})

    extra = {"targets_total": len(tasks), "targets_visited": len(visited),
             "visit_order": visited, "tour_order": list(plan.order),
             "tour_cost": plan.total_cost, "path_lengths": path_lengths,
             "switch_distances": switch_errors, "progress": progress}
    flight.log.summary = _summarize(flight, extra)
    return flight.log


def track_stream(stream: ReferenceStream, executor, config: MissionConfig = MissionConfig(),
                 fmap: ForestMap | None = None, start_state=None, phase="track",
                 params=None) -> MissionLog:
    """Fly a reference stream directly from rest at its first pose."""
    first = stream.pose(0)
    if start_state is None:
        start_state = QuadrotorState(position=first.as_array(),
                                     attitude=quat.from_yaw(first.yaw_rad))
    flight = _Flight(fmap, executor, config, start_state, params)
    flight.track(stream, 0, phase)
    flight.log.summary = _summarize(flight, {})
    return flight.log


def export_log(log: MissionLog, path, fmt=None):
    """Write ``log`` as CSV (one row per control step) or JSON (full round-trip)."""
    path = Path(path)
    fmt = fmt or path.suffix.lstrip(".").lower()
    if fmt == "csv":
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(LOG_COLUMNS)
            for row in log.rows:
                writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    elif fmt == "json":
        path.write_text(json.dumps(log.to_dict()))
    else:
        raise ValueError(f"unsupported log format {fmt!r}")
    return path


def load_log(path) -> MissionLog:
    return MissionLog.from_dict(json.loads(Path(path).read_text()))


def yaw_error_deg(log: MissionLog):
    yaw = np.array([math.degrees(quat.yaw_of(row[4:8])) for row in log.rows])
    return np.abs(wrap_deg(yaw - log.column("ref_yaw_deg")))
