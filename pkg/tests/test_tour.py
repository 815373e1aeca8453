import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from forestnav.env import ViewPoseRef
from forestnav.tour import (TourCapacityError, load_targets, next_target, plan_tour, tour_cost)
from tsp_oracle import brute_force_tour


def pose(x, y, z=1.0, yaw=0.0):
    return ViewPoseRef((x, y, z), yaw)


def test_cost_examples():
    assert tour_cost((0, 0), [pose(3, 4, 7.0, 45.0)]) == 10.0
    assert tour_cost((0, 0), [pose(1, 1, 0.5), pose(1, 1, 2.0)]) == pytest.approx(2 * math.sqrt(2))
    square = [pose(1, 0), pose(1, 1), pose(0, 1)]
    assert tour_cost((0, 0), square) == pytest.approx(4.0)
    with pytest.raises(ValueError):
        tour_cost((0, 0), [])


def test_collinear_sweep():
    plan = plan_tour((0, 0, 1), [pose(1, 0), pose(2, 0), pose(3, 0)])
    assert plan.order == (0, 1, 2)
    # the reversed sweep ties, and loses on index order
    shuffled = plan_tour((0, 0, 1), [pose(3, 0), pose(1, 0), pose(2, 0)])
    assert shuffled.order == (0, 2, 1)
    assert plan.total_cost == pytest.approx(6.0)
    assert sum(plan.leg_costs) == pytest.approx(plan.total_cost)


def test_capacity_guard():
    with pytest.raises(TourCapacityError):
        plan_tour((0, 0, 0), [pose(i, 0) for i in range(11)])
    with pytest.raises(ValueError):
        plan_tour((0, 0, 0), [])


def test_matches_oracle_including_ties():
    rng = np.random.default_rng(2024)
    for trial in range(60):
        n = int(rng.integers(3, 8))
        if trial % 2:
            pts = rng.integers(0, 3, size=(n, 2)).astype(float)  # many exact ties
        else:
            pts = rng.uniform(-10, 10, size=(n, 2))
        start = rng.uniform(-1, 1, 2)
        plan = plan_tour((*start, 1.0), [pose(*p) for p in pts])
        cost, order = brute_force_tour(start, pts)
        assert plan.order == order
        assert plan.total_cost == pytest.approx(cost, abs=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.floats(-20, 20), st.floats(-20, 20)), min_size=2, max_size=6),
       st.floats(-math.pi, math.pi), st.tuples(st.floats(-5, 5), st.floats(-5, 5)))
def test_cost_invariances(pts, angle, shift):
    targets = [pose(*p) for p in pts]
    plan = plan_tour((0, 0, 0), targets)
    # reversal has equal cost
    rev = [targets[i] for i in reversed(plan.order)]
    assert tour_cost((0, 0), rev) == pytest.approx(plan.total_cost, abs=1e-9)
    # input order does not change the optimum
    perm = np.random.default_rng(len(pts)).permutation(len(pts))
    assert plan_tour((0, 0, 0), [targets[i] for i in perm]).total_cost == pytest.approx(
        plan.total_cost, abs=1e-9)
    c, s = math.cos(angle), math.sin(angle)
    moved = [pose(c * x - s * y + shift[0], s * x + c * y + shift[1]) for x, y in pts]
    assert plan_tour((*shift, 0), moved).total_cost == pytest.approx(plan.total_cost, abs=1e-6)


def test_beats_random_permutations():
    rng = np.random.default_rng(1)
    targets = [pose(*p) for p in rng.uniform(0, 20, (8, 2))]
    plan = plan_tour((0, 0, 0), targets)
    for _ in range(1000):
        perm = rng.permutation(8)
        assert plan.total_cost <= tour_cost((0, 0), [targets[i] for i in perm]) + 1e-12


def test_next_target_switching():
    plan = plan_tour((0, 0, 1), [pose(5, 0), pose(10, 0)])
    t, k = next_target((4.5, 0, 1), plan, 0)
    assert k == 1 and t.position == (10.0, 0.0, 1.0)
    t, k = next_target((0, 0, 1), plan, 0)
    assert k == 0 and t.position == (5.0, 0.0, 1.0)
    # exactly 1 m is not "within" the radius
    assert next_target((4.0, 0, 1), plan, 0)[1] == 0
    # 3D distance: right above the target but 1.5 m higher does not count
    assert next_target((5.0, 0, 2.5), plan, 0)[1] == 0
    t, k = next_target((10, 0.2, 1), plan, 1)
    assert t is None and k == 2
    assert next_target((0, 0, 0), plan, 2) == (None, 2)


def test_load_targets(tmp_path):
    data = [{"x": 1, "y": 2, "z": 1.5, "yaw_deg": 270}, {"x": -1, "y": 0, "z": 1}]
    path = tmp_path / "t.json"
    path.write_text(json.dumps({"targets": data}))
    targets = load_targets(path)
    assert targets[0].position == (1.0, 2.0, 1.5) and targets[0].yaw_deg == -90.0
    assert targets[1].yaw_deg == 0.0
    plan = plan_tour((0, 0, 1), targets)
    assert json.loads(json.dumps(plan.to_dict()))["order"] == list(plan.order)
