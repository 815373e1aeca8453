"""Exhaustive closed-tour target sequencing with a planar distance metric."""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .env import ViewPoseRef

MAX_TARGETS = 10
ARRIVAL_RADIUS = 1.0
# costs closer than this are treated as ties and resolved by index order
TIE_TOLERANCE = 1e-9
_CHUNK = 50_000


class TourCapacityError(ValueError):
    pass


@dataclass(frozen=True)
class TourPlan:
    start: tuple[float, float, float]
    targets: tuple[ViewPoseRef, ...]
    order: tuple[int, ...]
    leg_costs: tuple[float, ...]
    total_cost: float

    def __len__(self):
        return len(self.targets)

    def to_dict(self):
        return {"order": list(self.order), "total_cost": self.total_cost,
                "leg_costs": list(self.leg_costs)}


def _xy(p):
    if isinstance(p, ViewPoseRef):
        p = p.position
    return float(p[0]), float(p[1])


def tour_cost(start, ordered_targets) -> float:
    """Length of start -> targets -> start, measured in the xy-plane only."""
    if len(ordered_targets) < 1:
        raise ValueError("a tour needs at least one target")
    points = [_xy(start)] + [_xy(t) for t in ordered_targets] + [_xy(start)]
    return sum(math.dist(a, b) for a, b in zip(points, points[1:]))


def _leg_costs(start, ordered_targets):
    points = [_xy(start)] + [_xy(t) for t in ordered_targets] + [_xy(start)]
    return tuple(math.dist(a, b) for a, b in zip(points, points[1:]))


def plan_tour(start, targets) -> TourPlan:
    """Minimum-cost visiting order over all ``n!`` permutations.

    Ties (within ``TIE_TOLERANCE``) go to the lexicographically smallest index
    sequence, which is the first one met since permutations are generated in
    lexicographic order.
    """
    targets = tuple(targets)
    n = len(targets)
    if n < 1:
        raise ValueError("plan_tour needs at least one target")
    if n > MAX_TARGETS:
        raise TourCapacityError(f"{n} targets exceed the exhaustive limit of {MAX_TARGETS}")

    pts = np.array([_xy(start)] + [_xy(t) for t in targets])
    dist = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=-1))
    best_cost, best_order = math.inf, None
    perms = itertools.permutations(range(1, n + 1))
    while True:
        block = np.array(list(itertools.islice(perms, _CHUNK)), dtype=np.intp)
        if block.size == 0:
            break
        costs = dist[0, block[:, 0]] + dist[block[:, -1], 0]
        for k in range(n - 1):
            costs = costs + dist[block[:, k], block[:, k + 1]]
        low = costs.min()
        if low < best_cost - TIE_TOLERANCE:
            first = int(np.argmax(costs <= low + TIE_TOLERANCE))
            best_cost, best_order = float(costs[first]), tuple(int(i) - 1 for i in block[first])

    ordered = [targets[i] for i in best_order]
    legs = _leg_costs(start, ordered)
    return TourPlan(tuple(float(v) for v in np.asarray(start, dtype=float).reshape(-1)[:3]),
                    targets, best_order, legs, sum(legs))


def next_target(position, plan: TourPlan, progress_index, radius=ARRIVAL_RADIUS):
    """Target to publish given odometry; ``None`` once the tour is complete.

    Returns ``(target, progress_index)``; the index advances as soon as the
    vehicle is strictly within ``radius`` (3D) of the active target.
    """
    if progress_index > len(plan.order):
        raise ValueError("progress index past the end of the tour")
    if progress_index == len(plan.order):
        return None, progress_index
    current = plan.targets[plan.order[progress_index]]
    if np.linalg.norm(np.asarray(position, dtype=float) - current.as_array()) < radius:
        progress_index += 1
        if progress_index == len(plan.order):
            return None, progress_index
        return plan.targets[plan.order[progress_index]], progress_index
    return current, progress_index


def load_targets(path):
    """Read ``[{"x", "y", "z", "yaw_deg"}, ...]`` (optionally under a "targets" key)."""
    data = json.loads(Path(path).read_text())
    return targets_from_json(data)


def targets_from_json(data):
    if isinstance(data, dict):
        data = data["targets"]
    return [ViewPoseRef((t["x"], t["y"], t["z"]), t.get("yaw_deg", 0.0)) for t in data]
