"""The five validation scenarios, built on procedurally generated forests.

Each scenario is described by a JSON-compatible dict; missing keys fall back
to :data:`DEFAULTS`. :func:`run_scenario` returns a :class:`MissionLog` whose
``summary`` carries the scenario metrics.
"""

from __future__ import annotations

import copy
import math
from dataclasses import replace

import numpy as np

from . import quaternion as quat
from .dynamics import QuadrotorState
from .env import ViewPoseRef, wrap_deg
from .forest import ForestConfig, InfeasibleForestError, generate_forest, reachable_grid
from .forest import sample_free_points
from .mission import (BaselineExecutor, InspectionTask, MissionConfig, MissionLog,
                      behavior_stream, run_mission, track_stream, yaw_error_deg)
from .planning import ForestMap, RRTConfig, collision_segment
from .references import TrunkSpec, gen_view_poses

SCENARIO_NAMES = ("forest_nav", "view_poses", "scan", "circle", "helix")

DEFAULTS = {
    "seed": 0,
    "forest": {},
    "rrt": {},
    "cruise_speed": 1.0,
    "forest_nav": {"n_targets": 8, "z_range": [0.6, 1.5], "min_separation": 3.0,
                   "min_clearance": 0.2, "behavior": None},
    "view_poses": {"n_trees": 5, "altitudes": [0.6, 0.9, 1.2, 1.5, 1.0], "standoff": 1.0,
                   "hold_duration": 3.0},
    "scan": {"altitude": 1.0, "angular_rate": 36.0},
    "circle": {"altitude": 1.0, "standoff": 0.5, "angular_rate": 20.0, "revolutions": 1.0},
    "helix": {"z_start": 0.5, "z_end": 1.5, "standoff": 0.5, "angular_rate": 20.0,
              "climb_rate": 0.05},
}


def scenario_config(name, overrides=None):
    if name not in SCENARIO_NAMES:
        raise ValueError(f"unknown scenario {name!r}; expected one of {SCENARIO_NAMES}")
    cfg = copy.deepcopy(DEFAULTS)
    for key, value in (overrides or {}).items():
        if key not in cfg:
            raise ValueError(f"unknown scenario config key {key!r}")
        if isinstance(cfg[key], dict) and isinstance(value, dict):
            cfg[key].update(value)
        else:
            cfg[key] = value
    return cfg


def _forest(cfg) -> ForestMap:
    fc = ForestConfig.from_dict({"seed": cfg["seed"], **cfg["forest"]})
    return generate_forest(fc)


def _center_start(fmap, rng, z):
    """A free, well-connected start near the middle of the map."""
    mid = 0.5 * (fmap.lower + fmap.upper)
    best = None
    for p in sample_free_points(fmap, rng, 40, (z, z), min_clearance=0.3):
        d = np.linalg.norm(p[:2] - mid[:2])
        if best is None or d < best[0]:
            best = (d, p)
    return best[1]


def _hover_state(position, yaw_deg=0.0):
    return QuadrotorState(position=np.asarray(position, dtype=float),
                          attitude=quat.from_yaw(math.radians(yaw_deg)))


def _mission_config(cfg):
    rrt = RRTConfig(**{"seed": cfg["seed"], **cfg["rrt"]})
    return MissionConfig(rrt=rrt, cruise_speed=cfg["cruise_speed"])


def _orbit_clear(fmap: ForestMap, trunk_index, stream):
    """Orbit stays outside every other inflated trunk and inside the workspace."""
    others = ForestMap([o for i, o in enumerate(fmap.obstacles) if i != trunk_index],
                       fmap.bounds, fmap.inflation_radius)
    pts = stream.positions[:: max(1, len(stream) // 400)]
    pts = np.vstack([pts, stream.positions[-1]])
    return all(not collision_segment(a, b, others) for a, b in zip(pts[:-1], pts[1:]))


def _pick_trunk(fmap, make_stream, rng):
    mid = 0.5 * (fmap.lower[:2] + fmap.upper[:2])
    order = np.argsort(np.linalg.norm(fmap.centers - mid, axis=1) + 1e-6 * rng.random(
        len(fmap.centers)))
    for i in order:
        o = fmap.obstacles[i]
        stream = make_stream(TrunkSpec((o.x, o.y), o.radius))
        if _orbit_clear(fmap, i, stream):
            return i, stream
    raise InfeasibleForestError("no trunk has a clear orbit")


def _stream_metrics(log: MissionLog):
    err = log.positions() - log.references()
    return {"position_rms": float(np.sqrt(np.mean(np.sum(err ** 2, axis=1)))),
            "max_position_error": float(np.max(np.linalg.norm(err, axis=1))),
            "yaw_rms_deg": float(np.sqrt(np.mean(yaw_error_deg(log) ** 2)))}


def _orbit_metrics(log: MissionLog, trunk: TrunkSpec):
    p = log.positions()
    c = np.asarray(trunk.center)
    standoff_err = np.abs(np.linalg.norm(p[:, :2] - c, axis=1) - trunk.orbit_radius)
    yaw = np.array([math.degrees(quat.yaw_of(row[4:8])) for row in log.rows])
    bearing = np.degrees(np.arctan2(c[1] - p[:, 1], c[0] - p[:, 0]))
    return {"mean_standoff_error": float(standoff_err.mean()),
            "max_standoff_error": float(standoff_err.max()),
            "max_bearing_error_deg": float(np.abs(wrap_deg(yaw - bearing)).max()),
            "trunk_center": c.tolist(), "trunk_radius": trunk.radius}


def build_forest_nav(cfg, fmap, rng):
    sc = cfg["forest_nav"]
    start = _center_start(fmap, rng, 1.0)
    pts = sample_free_points(fmap, rng, sc["n_targets"], tuple(sc["z_range"]),
                             min_clearance=sc["min_clearance"], reachable_from=start,
                             min_separation=sc["min_separation"])
    yaws = rng.uniform(-180.0, 180.0, len(pts))
    tasks = [InspectionTask(ViewPoseRef(p, y), sc["behavior"]) for p, y in zip(pts, yaws)]
    return start, tasks


def build_view_poses(cfg, fmap, rng):
    sc = cfg["view_poses"]
    start = _center_start(fmap, rng, 1.0)
    mask, origin, res = reachable_grid(fmap, start)
    mid = start[:2]
    order = np.argsort(np.linalg.norm(fmap.centers - mid, axis=1))
    tasks, used = [], []
    bearings = np.arange(0.0, 360.0, 45.0)
    for i in order:
        if len(tasks) == sc["n_trees"]:
            break
        o = fmap.obstacles[i]
        if any(np.linalg.norm(fmap.centers[i] - fmap.centers[j]) < 2.5 for j in used):
            continue
        z = sc["altitudes"][len(tasks) % len(sc["altitudes"])]
        tree = TrunkSpec((o.x, o.y), o.radius)
        for b in rng.permutation(bearings):
            try:
                (pose,) = gen_view_poses([tree], [z], [b], fmap, sc["standoff"])
            except ValueError:
                continue
            gi = int(round((pose.position[0] - origin[0]) / res))
            gj = int(round((pose.position[1] - origin[1]) / res))
            if 0 <= gi < mask.shape[0] and 0 <= gj < mask.shape[1] and mask[gi, gj]:
                tasks.append(InspectionTask(pose, "hold", {"duration": sc["hold_duration"]}))
                used.append(i)
                break
    if len(tasks) < sc["n_trees"]:
        raise InfeasibleForestError("not enough trees with a reachable view pose")
    return start, tasks


def _run_direct(stream, fmap, executor, mission_cfg, phase):
    first = stream.pose(0)
    start = _hover_state(first.position, first.yaw_deg)
    return track_stream(stream, executor, mission_cfg, fmap, start, phase)


def run_scenario(name, config=None, executor=None) -> MissionLog:
    """Build and fly one scenario. ``config`` holds overrides of :data:`DEFAULTS`."""
    cfg = scenario_config(name, config)
    executor = executor or BaselineExecutor()
    fmap = _forest(cfg)
    rng = np.random.default_rng(cfg["seed"])
    mission_cfg = _mission_config(cfg)
    info = {"scenario": name, "seed": cfg["seed"]}

    if name in ("forest_nav", "view_poses"):
        build = build_forest_nav if name == "forest_nav" else build_view_poses
        start, tasks = build(cfg, fmap, rng)
        log = run_mission(fmap, tasks, executor, mission_cfg, _hover_state(start))
        dist = log.summary["switch_distances"]
        info["targets"] = [{"position": t.target.position, "yaw_deg": t.target.yaw_deg}
                           for t in tasks]
        info["all_within_switch_radius"] = all(d < mission_cfg.switch_radius for d in dist)
        if name == "view_poses":
            finals = [e for e in log.events if e["event"] == "behavior_end"]
            info["view_pose_errors"] = [e["position_error"] for e in finals]
            info["view_yaw_errors_deg"] = [e["yaw_error_deg"] for e in finals]
        log.summary.update(info)
        return log

    if name == "scan":
        sc = cfg["scan"]
        (p,) = sample_free_points(fmap, rng, 1, (sc["altitude"], sc["altitude"]),
                                  min_clearance=0.3)
        task = InspectionTask(ViewPoseRef(p, 0.0), "scan", {"angular_rate": sc["angular_rate"]})
        stream = behavior_stream(task)
        log = _run_direct(stream, fmap, executor, mission_cfg, "scan")
        info["scan_center"] = p.tolist()
        info.update(_stream_metrics(log))
        yaw_ref = stream.yaw_deg
        info["yaw_sweep_deg"] = float(np.sum(np.abs(wrap_deg(np.diff(yaw_ref)))))
        log.summary.update(info)
        return log

    sc = cfg[name]
    if name == "circle":
        def make(trunk):
            trunk = replace(trunk, standoff=sc["standoff"])
            return behavior_stream(InspectionTask(
                ViewPoseRef((0, 0, sc["altitude"]), 0.0), "circle",
                {"trunk_center": trunk.center, "trunk_radius": trunk.radius,
                 "standoff": trunk.standoff, "altitude": sc["altitude"],
                 "angular_rate": sc["angular_rate"], "revolutions": sc["revolutions"]}))
    else:
        def make(trunk):
            trunk = replace(trunk, standoff=sc["standoff"])
            return behavior_stream(InspectionTask(
                ViewPoseRef((0, 0, sc["z_start"]), 0.0), "helix",
                {"trunk_center": trunk.center, "trunk_radius": trunk.radius,
                 "standoff": trunk.standoff, "z_start": sc["z_start"], "z_end": sc["z_end"],
                 "angular_rate": sc["angular_rate"], "climb_rate": sc["climb_rate"]}))
    idx, stream = _pick_trunk(fmap, make, rng)
    o = fmap.obstacles[idx]
    trunk = TrunkSpec((o.x, o.y), o.radius, sc["standoff"])
    log = _run_direct(stream, fmap, executor, mission_cfg, name)
    info["trunk_index"] = int(idx)
    info.update(_stream_metrics(log))
    info.update(_orbit_metrics(log, trunk))
    if name == "helix":
        z = log.positions()[:, 2]
        step = np.sign(sc["z_end"] - sc["z_start"]) * np.diff(z)
        info["altitude_monotone"] = bool(np.all(step > -1e-3))
        info["min_altitude_step"] = float(step.min()) if len(step) else 0.0
    log.summary.update(info)
    return log
