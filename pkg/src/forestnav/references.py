"""Time-indexed view-pose streams for the inspection behaviors (100 Hz)."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .dynamics import CONTROL_DT
from .env import ViewPoseRef, wrap_deg
from .planning import ForestMap, WaypointPath

VIEW_POSE_STANDOFF = 1.0
TRUNK_STANDOFF = 0.5
DEFAULT_CRUISE_SPEED = 1.0
DEFAULT_SCAN_RATE = 36.0
DEFAULT_CLIMB_RATE = 0.2
DEFAULT_ORBIT_RATE = 20.0


@dataclass(frozen=True)
class TrunkSpec:
    center: tuple[float, float]
    radius: float
    standoff: float = TRUNK_STANDOFF

    def __post_init__(self):
        if not self.radius > 0 or not self.standoff > 0:
            raise ValueError("trunk radius and standoff must be positive")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    @property
    def orbit_radius(self):
        return self.radius + self.standoff


@dataclass
class ReferenceStream:
    """Samples ``k = 0..N-1`` at ``t_k = t0 + k * dt``; yaw in degrees."""

    positions: np.ndarray
    yaw_deg: np.ndarray
    dt: float = CONTROL_DT
    t0: float = 0.0

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 3)
        self.yaw_deg = wrap_deg(np.asarray(self.yaw_deg, dtype=float).reshape(-1))
        if len(self.positions) != len(self.yaw_deg):
            raise ValueError("positions and yaw must have equal length")

    def __len__(self):
        return len(self.positions)

    @property
    def times(self):
        return self.t0 + self.dt * np.arange(len(self))

    @property
    def duration(self):
        """Time between the first and the last sample."""
        return self.dt * (len(self) - 1)

    def pose(self, k) -> ViewPoseRef:
        k = min(max(int(k), 0), len(self) - 1)
        return ViewPoseRef(self.positions[k], self.yaw_deg[k])

    def velocity(self, k):
        """Finite-difference reference velocity (used as controller feedforward)."""
        n = len(self)
        if n < 2:
            return np.zeros(3)
        k = min(max(int(k), 0), n - 1)
        lo, hi = max(k - 1, 0), min(k + 1, n - 1)
        return (self.positions[hi] - self.positions[lo]) / (self.dt * (hi - lo))

    def poses(self):
        return [self.pose(k) for k in range(len(self))]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "x", "y", "z", "yaw_deg"])
            for t, p, y in zip(self.times.tolist(), self.positions.tolist(),
                               self.yaw_deg.tolist()):
                writer.writerow([repr(t), repr(p[0]), repr(p[1]), repr(p[2]), repr(y)])

    @classmethod
    def concatenate(cls, streams):
        streams = [s for s in streams if len(s)]
        return cls(np.vstack([s.positions for s in streams]),
                   np.concatenate([s.yaw_deg for s in streams]), streams[0].dt, streams[0].t0)


def _sample_count(duration, dt):
    # both endpoints included, so a duration T gives T/dt intervals
    return max(int(round(duration / dt)), 1) + 1


def gen_scan(center_pose: ViewPoseRef, angular_rate=DEFAULT_SCAN_RATE, dt=CONTROL_DT):
    """Hold position while the yaw sweeps a full counter-clockwise turn."""
    if not angular_rate > 0:
        raise ValueError("angular rate must be positive")
    n = _sample_count(360.0 / angular_rate, dt)
    yaw = center_pose.yaw_deg + np.linspace(0.0, 360.0, n)
    positions = np.tile(center_pose.as_array(), (n, 1))
    return ReferenceStream(positions, yaw, dt)


def _orbit(trunk: TrunkSpec, angles_rad, z):
    cx, cy = trunk.center
    r = trunk.orbit_radius
    x = cx + r * np.cos(angles_rad)
    y = cy + r * np.sin(angles_rad)
    yaw = np.degrees(np.arctan2(cy - y, cx - x))
    return np.column_stack([x, y, z]), yaw


def gen_circle(trunk: TrunkSpec, altitude, angular_rate=DEFAULT_ORBIT_RATE, revolutions=1.0,
               start_bearing_deg=0.0, dt=CONTROL_DT):
    """Constant-altitude orbit at ``radius + standoff`` facing the trunk center."""
    if not angular_rate > 0 or not revolutions > 0:
        raise ValueError("angular rate and revolutions must be positive")
    n = _sample_count(360.0 * revolutions / angular_rate, dt)
    angles = np.radians(start_bearing_deg + np.linspace(0.0, 360.0 * revolutions, n))
    positions, yaw = _orbit(trunk, angles, np.full(n, float(altitude)))
    return ReferenceStream(positions, yaw, dt)


def gen_helix(trunk: TrunkSpec, z_start, z_end, angular_rate=DEFAULT_ORBIT_RATE,
              climb_rate=DEFAULT_CLIMB_RATE, start_bearing_deg=0.0, dt=CONTROL_DT):
    """Orbit as :func:`gen_circle` while the altitude changes linearly in time."""
    if z_end == z_start:
        raise ValueError("helix needs z_end != z_start")
    if not angular_rate > 0 or not climb_rate > 0:
        raise ValueError("rates must be positive")
    duration = abs(z_end - z_start) / climb_rate
    n = _sample_count(duration, dt)
    t = dt * np.arange(n)
    z = z_start + math.copysign(climb_rate, z_end - z_start) * t
    z[-1] = z_end
    angles = np.radians(start_bearing_deg + angular_rate * t)
    positions, yaw = _orbit(trunk, angles, z)
    return ReferenceStream(positions, yaw, dt)


def gen_view_poses(trees, altitudes, approach_bearing_deg, fmap: ForestMap | None = None,
                   standoff=VIEW_POSE_STANDOFF):
    """One pose per tree, ``standoff`` from the trunk surface along the bearing,
    facing the trunk center. Raises if a pose falls inside another inflated trunk."""
    if not len(trees) == len(altitudes) == len(approach_bearing_deg):
        raise ValueError("trees, altitudes and bearings must have the same length")
    poses = []
    for tree, z, bearing in zip(trees, altitudes, approach_bearing_deg):
        b = math.radians(bearing)
        dist = tree.radius + standoff
        x = tree.center[0] + dist * math.cos(b)
        y = tree.center[1] + dist * math.sin(b)
        yaw = math.degrees(math.atan2(tree.center[1] - y, tree.center[0] - x))
        pose = ViewPoseRef((x, y, z), yaw)
        if fmap is not None and _pose_blocked(pose, fmap):
            raise ValueError(f"view pose {pose} for tree at {tree.center} collides with an "
                             f"inflated trunk; choose another bearing")
        poses.append(pose)
    return poses


def _pose_blocked(pose, fmap):
    from .planning import collision_point
    return collision_point(pose.as_array(), fmap)


def _shortest_delta(a, b):
    return (b - a + 180.0) % 360.0 - 180.0


def path_to_stream(path: WaypointPath, cruise_speed=DEFAULT_CRUISE_SPEED, dt=CONTROL_DT):
    """Constant-speed resampling of a waypoint path.

    Yaw is interpolated along each segment from its start heading to its end
    heading by the shorter way around.
    """
    if not cruise_speed > 0:
        raise ValueError("cruise speed must be positive")
    pts = path.positions
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    ds = cruise_speed * dt
    n = int(math.ceil(total / ds - 1e-9)) + 1 if total > 0 else 1
    s = np.minimum(ds * np.arange(n), total)
    idx = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(pts) - 2)
    seg_len = np.where(seg[idx] > 0, seg[idx], 1.0)
    frac = np.clip((s - cum[idx]) / seg_len, 0.0, 1.0)
    positions = pts[idx] + frac[:, None] * (pts[idx + 1] - pts[idx])
    yaw0 = path.yaw_deg[idx]
    yaw = yaw0 + frac * _shortest_delta(yaw0, path.yaw_deg[idx + 1])
    positions[-1] = pts[-1]
    yaw[-1] = path.yaw_deg[-1]
    return ReferenceStream(positions, yaw, dt)


def hold(pose: ViewPoseRef, duration, dt=CONTROL_DT):
    n = _sample_count(duration, dt)
    return ReferenceStream(np.tile(pose.as_array(), (n, 1)), np.full(n, pose.yaw_deg), dt)
