"""Dense-sampling collision oracle with signed clearances.

Clearance is positive in free space and negative inside an inflated obstacle
or outside the workspace box. Points are taken at most ``resolution`` apart.
"""

import math

import numpy as np


def point_clearance(points, fmap):
    pts = np.atleast_2d(points)
    lo, hi = np.asarray(fmap.bounds[0]), np.asarray(fmap.bounds[1])
    inside_box = np.all((pts >= lo) & (pts <= hi), axis=1)
    face = np.minimum(pts - lo, hi - pts).min(axis=1)
    outside = np.sqrt((np.maximum(lo - pts, 0) ** 2 + np.maximum(pts - hi, 0) ** 2).sum(axis=1))
    clear = np.where(inside_box, face, -outside)
    for o in fmap.obstacles:
        R = o.radius + fmap.inflation_radius
        radial = np.hypot(pts[:, 0] - o.x, pts[:, 1] - o.y) - R
        below, above = o.z_min - pts[:, 2], pts[:, 2] - o.z_max
        vertical = np.maximum(below, above)
        inside = (radial <= 0) & (vertical <= 0)
        depth = np.maximum(radial, vertical)  # <= 0 inside
        gap = np.hypot(np.maximum(radial, 0), np.maximum(vertical, 0))
        clear = np.minimum(clear, np.where(inside, depth, gap))
    return clear


def segment_min_clearance(a, b, fmap, resolution=1e-3):
    length = float(np.linalg.norm(np.asarray(b) - np.asarray(a)))
    n = max(2, int(math.ceil(length / resolution)) + 1)
    t = np.linspace(0.0, 1.0, n)[:, None]
    return float(point_clearance(a + t * (np.asarray(b) - a), fmap).min())


def random_segments(rng, fmap, count, max_length=3.0, margin=0.3):
    lo, hi = np.asarray(fmap.bounds[0]), np.asarray(fmap.bounds[1])
    a = rng.uniform(lo - margin, hi + margin, (count, 3))
    d = rng.normal(size=(count, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    # a fraction of exactly horizontal segments exercises the dz == 0 branch
    flat = rng.random(count) < 0.2
    d[flat, 2] = 0.0
    d[flat] /= np.linalg.norm(d[flat], axis=1, keepdims=True)
    return a, a + d * rng.uniform(0.0, max_length, (count, 1))


def small_map():
    from forestnav.planning import CylinderObstacle, ForestMap
    obstacles = [CylinderObstacle(1.0, 1.0, 0.2, 0.0, 2.0), CylinderObstacle(2.5, 1.5, 0.25, 0.5, 1.2),
                 CylinderObstacle(1.5, 3.0, 0.15, 0.0, 2.0), CylinderObstacle(3.2, 3.1, 0.3, 0.9, 2.0),
                 CylinderObstacle(0.5, 2.2, 0.2, 0.0, 0.8)]
    return ForestMap(obstacles, ((0.0, 0.0, 0.3), (4.0, 4.0, 1.8)), 0.3)


def disagreements(fmap, a, b, band=1e-3):
    from forestnav.planning import collision_segment
    bad = []
    checked = 0
    for p, q in zip(a, b):
        c = segment_min_clearance(p, q, fmap)
        if abs(c) <= band:
            continue
        checked += 1
        if collision_segment(p, q, fmap) != (c < 0):
            bad.append((p, q, c))
    return bad, checked
