"""Informed RRT* over vertical-cylinder forest maps.

Obstacles are closed vertical cylinders whose radius is grown by the map's
inflation radius; their vertical extent is left unchanged. Anything outside
the axis-aligned workspace box counts as a collision.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from .env import wrap_deg

MAX_WAYPOINT_SPACING = 3.0


class PlanningError(RuntimeError):
    pass


class NoPathFound(PlanningError):
    pass


class InvalidQuery(PlanningError, ValueError):
    pass


@dataclass(frozen=True)
class CylinderObstacle:
    x: float
    y: float
    radius: float
    z_min: float
    z_max: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"cylinder radius must be positive, got {self.radius}")
        if not self.z_min < self.z_max:
            raise ValueError(f"cylinder needs z_min < z_max, got {self.z_min}, {self.z_max}")


@dataclass
class ForestMap:
    obstacles: list[CylinderObstacle]
    bounds: tuple[tuple[float, float, float], tuple[float, float, float]]
    inflation_radius: float = 0.3

    def __post_init__(self):
        lo, hi = (tuple(float(v) for v in b) for b in self.bounds)
        if not all(a < b for a, b in zip(lo, hi)):
            raise ValueError(f"invalid workspace bounds {self.bounds}")
        if self.inflation_radius < 0:
            raise ValueError("inflation radius must be >= 0")
        self.bounds = (lo, hi)
        self.obstacles = list(self.obstacles)
        for ob in self.obstacles:
            if (ob.x + ob.radius < lo[0] or ob.x - ob.radius > hi[0] or ob.y + ob.radius < lo[1]
                    or ob.y - ob.radius > hi[1] or ob.z_max < lo[2] or ob.z_min > hi[2]):
                raise ValueError(f"obstacle {ob} does not intersect the workspace")
        self._refresh()

    def _refresh(self):
        obs = self.obstacles
        self.centers = np.array([[o.x, o.y] for o in obs]).reshape(-1, 2)
        self.radii = np.array([o.radius for o in obs])
        self.z_min = np.array([o.z_min for o in obs])
        self.z_max = np.array([o.z_max for o in obs])
        self.lower = np.array(self.bounds[0])
        self.upper = np.array(self.bounds[1])
        self.inflated_radii = self.radii + self.inflation_radius
        self._kernel = _kernel_args(self)

    def with_inflation(self, inflation_radius):
        return ForestMap(self.obstacles, self.bounds, inflation_radius)

    def to_dict(self):
        return {
            "bounds": [list(self.bounds[0]), list(self.bounds[1])],
            "inflation_radius": self.inflation_radius,
            "obstacles": [{"x": o.x, "y": o.y, "radius": o.radius, "z_min": o.z_min,
                           "z_max": o.z_max} for o in self.obstacles],
        }

    @classmethod
    def from_dict(cls, data):
        obstacles = [CylinderObstacle(o["x"], o["y"], o["radius"], o["z_min"], o["z_max"])
                     for o in data["obstacles"]]
        return cls(obstacles, tuple(tuple(b) for b in data["bounds"]),
                   data.get("inflation_radius", 0.3))

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class WaypointPath:
    positions: np.ndarray
    yaw_deg: np.ndarray

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 3)
        self.yaw_deg = wrap_deg(np.asarray(self.yaw_deg, dtype=float).reshape(-1))
        if len(self.positions) != len(self.yaw_deg):
            raise ValueError("positions and yaw must have the same length")

    def __len__(self):
        return len(self.positions)

    @property
    def segment_lengths(self):
        return np.linalg.norm(np.diff(self.positions, axis=0), axis=1)

    @property
    def length(self):
        return float(self.segment_lengths.sum())

    def to_dict(self):
        return {"waypoints": [{"x": p[0], "y": p[1], "z": p[2], "yaw_deg": y}
                              for p, y in zip(self.positions.tolist(), self.yaw_deg.tolist())],
                "length": self.length}

    def save_json(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    def save_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["x", "y", "z", "yaw_deg"])
            for p, y in zip(self.positions.tolist(), self.yaw_deg.tolist()):
                writer.writerow([repr(p[0]), repr(p[1]), repr(p[2]), repr(y)])


@dataclass(frozen=True)
class RRTConfig:
    step_size: float = 0.5
    neighbor_radius: float = 1.5
    max_iterations: int = 5000
    goal_bias: float = 0.05
    goal_tolerance: float = 0.3
    seed: int = 0
    max_spacing: float = MAX_WAYPOINT_SPACING

    def __post_init__(self):
        if not self.step_size > 0:
            raise ValueError("step size must be positive")
        if self.max_iterations <= 0:
            raise ValueError("max iterations must be positive")
        if not 0.0 <= self.goal_bias <= 1.0:
            raise ValueError("goal bias must lie in [0, 1]")
        if not self.max_spacing > 0:
            raise ValueError("max spacing must be positive")


@njit(cache=True)
def _point_hits(px, py, pz, cx, cy, r, zmin, zmax, lower, upper):
    if (px < lower[0] or py < lower[1] or pz < lower[2] or px > upper[0] or py > upper[1]
            or pz > upper[2]):
        return True
    for k in range(cx.shape[0]):
        if zmin[k] <= pz <= zmax[k]:
            dx = px - cx[k]
            dy = py - cy[k]
            if dx * dx + dy * dy <= r[k] * r[k]:
                return True
    return False


@njit(cache=True)
def _segment_hits(a, b, cx, cy, r, zmin, zmax, lower, upper):
    for i in range(3):
        if (a[i] < lower[i] or a[i] > upper[i] or b[i] < lower[i] or b[i] > upper[i]):
            return True
    dx, dy, dz = b[0] - a[0], b[1] - a[1], b[2] - a[2]
    dd = dx * dx + dy * dy
    for k in range(cx.shape[0]):
        if dz != 0.0:
            t0 = (zmin[k] - a[2]) / dz
            t1 = (zmax[k] - a[2]) / dz
            lo = max(min(t0, t1), 0.0)
            hi = min(max(t0, t1), 1.0)
            if lo > hi:
                continue
        else:
            if a[2] < zmin[k] or a[2] > zmax[k]:
                continue
            lo, hi = 0.0, 1.0
        wx = a[0] - cx[k]
        wy = a[1] - cy[k]
        t = lo
        if dd > 0.0:
            t = min(max(-(wx * dx + wy * dy) / dd, lo), hi)
        px = wx + t * dx
        py = wy + t * dy
        if px * px + py * py <= r[k] * r[k]:
            return True
    return False


@njit(cache=True)
def _segments_hit_from(a, pts, cx, cy, r, zmin, zmax, lower, upper):
    out = np.empty(pts.shape[0], dtype=np.bool_)
    for i in range(pts.shape[0]):
        out[i] = _segment_hits(a, pts[i], cx, cy, r, zmin, zmax, lower, upper)
    return out


def _kernel_args(fmap):
    return (fmap.centers[:, 0].copy(), fmap.centers[:, 1].copy(), fmap.inflated_radii,
            fmap.z_min, fmap.z_max, fmap.lower, fmap.upper)


def _local_kernel(fmap, center, reach):
    """Kernel arguments restricted to obstacles that a segment staying within
    ``reach`` (horizontally) of ``center`` could touch."""
    cx, cy, r, zmin, zmax, lower, upper = fmap._kernel
    d2 = (cx - center[0]) ** 2 + (cy - center[1]) ** 2
    near = np.flatnonzero(d2 <= (reach + r) ** 2)
    return cx[near], cy[near], r[near], zmin[near], zmax[near], lower, upper


def collision_point(p, fmap: ForestMap) -> bool:
    """True if ``p`` is outside the workspace or inside an inflated obstacle."""
    p = np.asarray(p, dtype=float)
    cx, cy, r, zmin, zmax, lower, upper = fmap._kernel
    return bool(_point_hits(p[0], p[1], p[2], cx, cy, r, zmin, zmax, lower, upper))


def segment_clearance_sq(a, b, fmap: ForestMap):
    """Per-obstacle minimum squared horizontal distance over the part of ``ab``
    inside each obstacle's z band (``inf`` where the segment misses the band)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    d = b - a
    if abs(d[2]) > 0.0:
        t0 = (fmap.z_min - a[2]) / d[2]
        t1 = (fmap.z_max - a[2]) / d[2]
        lo = np.maximum(np.minimum(t0, t1), 0.0)
        hi = np.minimum(np.maximum(t0, t1), 1.0)
    else:
        inside = (a[2] >= fmap.z_min) & (a[2] <= fmap.z_max)
        lo = np.where(inside, 0.0, 1.0)
        hi = np.where(inside, 1.0, 0.0)
    w = a[:2] - fmap.centers
    dd = d[0] * d[0] + d[1] * d[1]
    if dd > 0.0:
        t = np.clip(-(w @ d[:2]) / dd, lo, hi)
    else:
        t = lo
    px = w[:, 0] + t * d[0]
    py = w[:, 1] + t * d[1]
    dist2 = px * px + py * py
    return np.where(lo <= hi, dist2, np.inf)


def collision_segment(a, b, fmap: ForestMap) -> bool:
    """Exact closed test of segment ``ab`` against the inflated cylinders."""
    return bool(_segment_hits(np.asarray(a, dtype=float), np.asarray(b, dtype=float),
                              *fmap._kernel))


def heading_profile(positions, goal_yaw_deg=None):
    """Yaw of the segment leaving each waypoint, in degrees.

    Zero-length segments reuse the previous heading; the last waypoint takes
    ``goal_yaw_deg`` if given, otherwise the heading of the final segment.
    """
    positions = np.asarray(positions, dtype=float).reshape(-1, 3)
    if len(positions) < 2:
        raise ValueError("heading profile needs at least two waypoints")
    delta = np.diff(positions, axis=0)
    planar = np.hypot(delta[:, 0], delta[:, 1])
    raw = np.degrees(np.arctan2(delta[:, 1], delta[:, 0]))
    nonzero = np.flatnonzero(planar > 1e-12)
    previous = float(raw[nonzero[0]]) if nonzero.size else (
        0.0 if goal_yaw_deg is None else float(goal_yaw_deg))
    yaw = np.empty(len(positions))
    for i in range(len(delta)):
        if planar[i] > 1e-12:
            previous = float(raw[i])
        yaw[i] = previous
    yaw[-1] = previous if goal_yaw_deg is None else goal_yaw_deg
    return wrap_deg(yaw)


@dataclass
class PlannerTrace:
    """Optional diagnostics filled in by :func:`plan_path`."""

    best_cost: list[float] = field(default_factory=list)
    informed_samples: list[tuple[np.ndarray, float]] = field(default_factory=list)
    nodes: np.ndarray | None = None
    parents: np.ndarray | None = None
    costs: np.ndarray | None = None
    first_solution_iteration: int | None = None

    def audit_tree(self, tol=1e-9):
        """Check single parents, acyclicity and additive costs; returns a list of problems."""
        problems = []
        n = len(self.nodes)
        for i in range(1, n):
            p = self.parents[i]
            if not 0 <= p < n or p == i:
                problems.append(f"node {i} has invalid parent {p}")
                continue
            expect = self.costs[p] + np.linalg.norm(self.nodes[i] - self.nodes[p])
            if abs(expect - self.costs[i]) > tol * max(1.0, expect):
                problems.append(f"node {i} cost {self.costs[i]} != {expect}")
            seen, j = 0, i
            while j != 0 and seen <= n:
                j = self.parents[j]
                seen += 1
            if seen > n:
                problems.append(f"cycle through node {i}")
        return problems


def _rotation_to_world(start, goal):
    """Orthonormal frame whose first column points from start to goal."""
    a1 = (goal - start) / np.linalg.norm(goal - start)
    u, _, vt = np.linalg.svd(np.outer(a1, [1.0, 0.0, 0.0]))
    return u @ np.diag([1.0, 1.0, np.linalg.det(u) * np.linalg.det(vt)]) @ vt


def sample_informed(rng, start, goal, c_best, rotation=None, size=None):
    """Uniform samples from the prolate spheroid with foci ``start``/``goal`` and
    major-axis length ``c_best``."""
    c_min = float(np.linalg.norm(goal - start))
    if rotation is None:
        rotation = _rotation_to_world(start, goal)
    minor = math.sqrt(max(c_best * c_best - c_min * c_min, 0.0)) / 2.0
    radii = np.array([c_best / 2.0, minor, minor])
    n = 1 if size is None else size
    x = rng.standard_normal((n, 3))
    x *= (rng.random(n) ** (1.0 / 3.0) / np.sqrt((x * x).sum(axis=1)))[:, None]
    out = (radii * x) @ rotation.T + (start + goal) / 2.0
    return out[0] if size is None else out


def in_spheroid(p, start, goal, c_best, tol=1e-9):
    return (np.linalg.norm(p - start) + np.linalg.norm(p - goal)) <= c_best * (1 + tol) + tol


def plan_path(start, goal, fmap: ForestMap, config: RRTConfig = RRTConfig(), goal_yaw_deg=None,
              trace: PlannerTrace | None = None) -> WaypointPath:
    """Run informed RRT* from ``start`` to ``goal`` and return the best path found.

    Raises :class:`InvalidQuery` for colliding endpoints and
    :class:`NoPathFound` if no node reached the goal tolerance.
    """
    start = np.asarray(start, dtype=float)
    goal = np.asarray(goal, dtype=float)
    if collision_point(start, fmap):
        raise InvalidQuery(f"start {start} is in collision or outside the workspace")
    if collision_point(goal, fmap):
        raise InvalidQuery(f"goal {goal} is in collision or outside the workspace")

    rng = np.random.default_rng(config.seed)
    cap = config.max_iterations + 1
    nodes = np.empty((cap, 3))
    parents = np.full(cap, -1, dtype=np.intp)
    costs = np.empty(cap)
    children: list[list[int]] = [[] for _ in range(cap)]
    nodes[0], costs[0], n = start, 0.0, 1
    goal_nodes: list[int] = []
    best_cost, best_node = math.inf, -1
    c_min = float(np.linalg.norm(goal - start))
    rotation = _rotation_to_world(start, goal) if c_min > 0 else np.eye(3)
    r2 = config.neighbor_radius ** 2
    reach = max(config.neighbor_radius, config.step_size)
    span = fmap.upper - fmap.lower

    def propagate(root, delta):
        stack = list(children[root])
        while stack:
            k = stack.pop()
            costs[k] += delta
            stack.extend(children[k])

    for it in range(config.max_iterations):
        informed = best_node >= 0 and c_min > 0
        if rng.random() < config.goal_bias:
            sample = goal.copy()
        else:
            sample = None
            for _ in range(4):
                if informed:
                    batch = sample_informed(rng, start, goal, best_cost, rotation, size=32)
                else:
                    batch = fmap.lower + rng.random((32, 3)) * span
                for cand in batch:
                    if not collision_point(cand, fmap):
                        sample = cand
                        break
                if sample is not None:
                    break
            if sample is not None and informed and trace is not None:
                trace.informed_samples.append((sample.copy(), best_cost))

        if sample is not None:
            d2 = ((nodes[:n] - sample) ** 2).sum(axis=1)
            near_idx = int(np.argmin(d2))
            dist = math.sqrt(d2[near_idx])
            if dist > config.step_size:
                new = nodes[near_idx] + (sample - nodes[near_idx]) * (config.step_size / dist)
            else:
                new = sample
            local = _local_kernel(fmap, new, reach)
            if dist > 0 and not _segment_hits(nodes[near_idx], new, *local):
                d2 = ((nodes[:n] - new) ** 2).sum(axis=1)
                neighbors = np.flatnonzero(d2 <= r2)
                nd = np.sqrt(d2[neighbors])
                via = costs[neighbors] + nd
                parent, parent_cost = near_idx, costs[near_idx] + math.sqrt(d2[near_idx])
                cand = np.flatnonzero(via < parent_cost)
                if cand.size:
                    free = ~_segments_hit_from(new, nodes[neighbors[cand]], *local)
                    if free.any():
                        k = cand[free][np.argmin(via[cand[free]])]
                        parent, parent_cost = neighbors[k], via[k]
                idx = n
                nodes[idx], costs[idx], parents[idx] = new, parent_cost, parent
                children[parent].append(idx)
                n += 1
                # costs only decrease while rewiring, so pre-filtering is safe
                better = np.flatnonzero((parent_cost + nd < costs[neighbors] - 1e-12)
                                        & (neighbors != parent))
                if better.size:
                    better = better[~_segments_hit_from(new, nodes[neighbors[better]], *local)]
                for k in better:
                    j = neighbors[k]
                    c = parent_cost + nd[k]
                    if c < costs[j] - 1e-12:
                        old = parents[j]
                        children[old].remove(j)
                        parents[j] = idx
                        children[idx].append(j)
                        delta = c - costs[j]
                        costs[j] = c
                        propagate(j, delta)
                # a node reaches the goal inside the tolerance or through a free
                # direct segment within the neighbour radius
                gap = math.sqrt(float((new - goal) @ (new - goal)))
                if gap <= config.goal_tolerance or (
                        gap <= config.neighbor_radius and not _segment_hits(new, goal, *local)):
                    goal_nodes.append(idx)
                    if trace is not None and trace.first_solution_iteration is None:
                        trace.first_solution_iteration = it

        if goal_nodes:
            gn = np.array(goal_nodes)
            total = costs[gn] + np.linalg.norm(nodes[gn] - goal, axis=1)
            k = int(np.argmin(total))
            if total[k] <= best_cost:
                best_cost, best_node = float(total[k]), int(gn[k])
        if trace is not None:
            trace.best_cost.append(best_cost)

    if trace is not None:
        trace.nodes, trace.parents, trace.costs = nodes[:n].copy(), parents[:n].copy(), \
            costs[:n].copy()
    if best_node < 0:
        raise NoPathFound(f"no path from {start} to {goal} after {config.max_iterations} "
                          f"iterations ({n} nodes)")
    chain = [best_node]
    while chain[-1] != 0:
        chain.append(int(parents[chain[-1]]))
    points = nodes[chain[::-1]]
    if np.linalg.norm(points[-1] - goal) > 0 and not collision_segment(points[-1], goal, fmap):
        points = np.vstack([points, goal])
    if len(points) == 1:
        points = np.vstack([points, points])
    return WaypointPath(points, heading_profile(points, goal_yaw_deg))


def subdivide(positions, max_spacing=MAX_WAYPOINT_SPACING):
    """Split every segment so that consecutive waypoints are strictly closer than
    ``max_spacing``."""
    positions = np.asarray(positions, dtype=float)
    out = [positions[0]]
    for a, b in zip(positions[:-1], positions[1:]):
        length = float(np.linalg.norm(b - a))
        pieces = int(math.floor(length / max_spacing)) + 1
        for k in range(1, pieces + 1):
            out.append(a + (b - a) * (k / pieces))
    return np.array(out)


def smooth_path(path: WaypointPath, fmap: ForestMap, max_spacing=MAX_WAYPOINT_SPACING,
                goal_yaw_deg=None) -> WaypointPath:
    """Greedy shortcutting to the farthest visible waypoint, repeated until no
    waypoint can be dropped, followed by re-subdivision to ``max_spacing``."""
    pts = np.asarray(path.positions, dtype=float)
    if goal_yaw_deg is None and len(path.yaw_deg):
        goal_yaw_deg = float(path.yaw_deg[-1])
    while True:
        keep = [0]
        i = 0
        while i < len(pts) - 1:
            j = len(pts) - 1
            while j > i + 1 and collision_segment(pts[i], pts[j], fmap):
                j -= 1
            keep.append(j)
            i = j
        if len(keep) == len(pts):
            break
        pts = pts[keep]
    pts = subdivide(pts, max_spacing)
    if len(pts) < 2:
        pts = np.vstack([pts, pts])
    return WaypointPath(pts, heading_profile(pts, goal_yaw_deg))


def plan_smooth_path(start, goal, fmap, config: RRTConfig = RRTConfig(), goal_yaw_deg=None,
                     trace=None) -> WaypointPath:
    raw = plan_path(start, goal, fmap, config, goal_yaw_deg, trace)
    return smooth_path(raw, fmap, config.max_spacing, goal_yaw_deg)


def path_is_safe(path: WaypointPath, fmap: ForestMap, max_spacing=MAX_WAYPOINT_SPACING):
    """Audit: every segment collision-free and every spacing below ``max_spacing``."""
    pts = path.positions
    if np.any(path.segment_lengths >= max_spacing):
        return False
    return not any(collision_segment(a, b, fmap) for a, b in zip(pts[:-1], pts[1:]))
