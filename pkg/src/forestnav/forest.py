"""Procedural under-canopy forests and helpers to pick poses inside them."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .planning import CylinderObstacle, ForestMap, collision_point


class InfeasibleForestError(RuntimeError):
    pass


@dataclass(frozen=True)
class ForestConfig:
    """Defaults: 200 trunks on a 20 m x 20 m square, 1-2 m nearest-neighbour spacing."""

    width: float = 20.0
    depth: float = 20.0
    n_trunks: int = 200
    radius_min: float = 0.15
    radius_max: float = 0.25
    trunk_height: float = 2.0
    min_spacing: float = 1.0
    max_spacing: float = 2.0
    flight_floor: float = 0.3
    flight_ceiling: float = 1.8
    inflation_radius: float = 0.3
    seed: int = 0
    max_attempts: int = 500_000

    def __post_init__(self):
        if self.n_trunks < 0 or not (0 < self.radius_min <= self.radius_max):
            raise ValueError("invalid trunk count or radius range")
        if not 0 < self.min_spacing <= self.max_spacing:
            raise ValueError("need 0 < min_spacing <= max_spacing")
        packing = self.n_trunks * math.pi * (self.min_spacing / 2) ** 2
        # random sequential adsorption jams at ~55% coverage
        if packing > 0.547 * (self.width + self.min_spacing) * (self.depth + self.min_spacing):
            raise InfeasibleForestError(
                f"{self.n_trunks} trunks at {self.min_spacing} m spacing cannot fit in "
                f"{self.width} x {self.depth} m")
        if not 0 <= self.flight_floor < self.flight_ceiling:
            raise ValueError("invalid flight band")

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown forest config keys: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self):
        return asdict(self)


def generate_forest(config: ForestConfig = ForestConfig(), rng=None) -> ForestMap:
    """Rejection-sample trunk centers.

    A candidate is accepted when it keeps at least ``min_spacing`` to every
    existing trunk and has its nearest neighbour within ``max_spacing``.
    """
    rng = np.random.default_rng(config.seed) if rng is None else rng
    centers = np.empty((config.n_trunks, 2))
    n = 0
    attempts = 0
    while n < config.n_trunks:
        attempts += 1
        if attempts > config.max_attempts:
            raise InfeasibleForestError(
                f"placed {n}/{config.n_trunks} trunks after {config.max_attempts} attempts")
        c = rng.random(2) * (config.width, config.depth)
        if n:
            d = np.sqrt(((centers[:n] - c) ** 2).sum(axis=1)).min()
            if d < config.min_spacing or d > config.max_spacing:
                continue
        centers[n] = c
        n += 1
    radii = rng.uniform(config.radius_min, config.radius_max, config.n_trunks)
    obstacles = [CylinderObstacle(float(x), float(y), float(r), 0.0, config.trunk_height)
                 for (x, y), r in zip(centers, radii)]
    bounds = ((0.0, 0.0, config.flight_floor), (config.width, config.depth,
                                                 config.flight_ceiling))
    return ForestMap(obstacles, bounds, config.inflation_radius)


def inside_trunk(p, fmap: ForestMap) -> bool:
    """Point inside an un-inflated obstacle (workspace bounds ignored)."""
    if not fmap.obstacles:
        return False
    d2 = ((fmap.centers - np.asarray(p[:2], dtype=float)) ** 2).sum(axis=1)
    return bool(np.any((d2 <= fmap.radii ** 2) & (p[2] >= fmap.z_min) & (p[2] <= fmap.z_max)))


def clearance_2d(p, fmap: ForestMap):
    """Horizontal distance from ``p`` to the nearest inflated trunk surface."""
    if not fmap.obstacles:
        return math.inf
    d = np.sqrt(((fmap.centers - np.asarray(p[:2], dtype=float)) ** 2).sum(axis=1))
    return float((d - fmap.radii - fmap.inflation_radius).min())


def reachable_grid(fmap: ForestMap, start, resolution=0.05, margin=0.05):
    """Planar flood fill over cells at least ``margin`` clear of inflated trunks.

    Returns ``(mask, origin, resolution)`` with ``mask[i, j]`` covering
    ``origin + (i, j) * resolution``.
    """
    lo, hi = fmap.lower[:2], fmap.upper[:2]
    nx = int(math.floor((hi[0] - lo[0]) / resolution)) + 1
    ny = int(math.floor((hi[1] - lo[1]) / resolution)) + 1
    xs = lo[0] + resolution * np.arange(nx)
    ys = lo[1] + resolution * np.arange(ny)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    free = np.ones((nx, ny), dtype=bool)
    for (cx, cy), r in zip(fmap.centers, fmap.radii):
        rr = r + fmap.inflation_radius + margin
        free &= (gx - cx) ** 2 + (gy - cy) ** 2 > rr * rr
    i0 = int(round((start[0] - lo[0]) / resolution))
    j0 = int(round((start[1] - lo[1]) / resolution))
    reach = np.zeros_like(free)
    if not (0 <= i0 < nx and 0 <= j0 < ny and free[i0, j0]):
        return reach, lo, resolution
    stack = [(i0, j0)]
    reach[i0, j0] = True
    while stack:
        i, j = stack.pop()
        for a, b in ((i + 1, j), (i - 1, j), (i, j + 1), (i, j - 1)):
            if 0 <= a < nx and 0 <= b < ny and free[a, b] and not reach[a, b]:
                reach[a, b] = True
                stack.append((a, b))
    return reach, lo, resolution


def sample_free_points(fmap: ForestMap, rng, count, z_range, min_clearance=0.2,
                       reachable_from=None, min_separation=0.0, max_tries=100_000):
    """Random positions with planar clearance, optionally restricted to the
    component reachable from ``reachable_from``."""
    if reachable_from is not None:
        mask, origin, res = reachable_grid(fmap, reachable_from)
    points: list[np.ndarray] = []
    lo, hi = fmap.lower, fmap.upper
    for _ in range(max_tries):
        if len(points) == count:
            break
        p = np.array([rng.uniform(lo[0] + 0.5, hi[0] - 0.5), rng.uniform(lo[1] + 0.5, hi[1] - 0.5),
                      rng.uniform(*z_range)])
        if collision_point(p, fmap) or clearance_2d(p, fmap) < min_clearance:
            continue
        if reachable_from is not None:
            i = int(round((p[0] - origin[0]) / res))
            j = int(round((p[1] - origin[1]) / res))
            if not mask[i, j]:
                continue
        if any(np.linalg.norm(p[:2] - q[:2]) < min_separation for q in points):
            continue
        points.append(p)
    if len(points) < count:
        raise InfeasibleForestError(f"found only {len(points)}/{count} free points")
    return points


def save_forest(fmap: ForestMap, path, config: ForestConfig | None = None):
    data = fmap.to_dict()
    if config is not None:
        data["config"] = config.to_dict()
    Path(path).write_text(json.dumps(data, indent=1))
