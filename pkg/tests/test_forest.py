import numpy as np
import pytest
from scipy.spatial.distance import pdist, squareform

from forestnav.forest import (ForestConfig, InfeasibleForestError, clearance_2d, generate_forest,
                              inside_trunk, reachable_grid, sample_free_points, save_forest)
from forestnav.planning import ForestMap, collision_point


def test_default_forest(default_forest):
    m = default_forest
    assert len(m.obstacles) == 200
    radii = np.array([o.radius for o in m.obstacles])
    assert np.all((radii > 0.15) & (radii < 0.25))
    assert all(o.z_min == 0.0 and o.z_max == 2.0 for o in m.obstacles)
    d = squareform(pdist(m.centers))
    np.fill_diagonal(d, np.inf)
    assert d.min() >= 1.0
    assert d.min(axis=1).max() <= 2.0
    assert np.all((m.centers >= 0) & (m.centers <= 20))


def test_same_seed_same_map():
    a = generate_forest(ForestConfig(seed=4, n_trunks=50))
    b = generate_forest(ForestConfig(seed=4, n_trunks=50))
    c = generate_forest(ForestConfig(seed=5, n_trunks=50))
    assert a.to_dict() == b.to_dict()
    assert a.to_dict() != c.to_dict()


def test_infeasible_configs():
    with pytest.raises(InfeasibleForestError):
        ForestConfig(width=5, depth=5, n_trunks=200)
    with pytest.raises(InfeasibleForestError):
        generate_forest(ForestConfig(width=8, depth=8, n_trunks=40, max_attempts=45))
    with pytest.raises(ValueError):
        ForestConfig(min_spacing=2.0, max_spacing=1.0)
    with pytest.raises(ValueError):
        ForestConfig.from_dict({"trunks": 3})


def test_config_roundtrip(tmp_path):
    cfg = ForestConfig(seed=3, n_trunks=20)
    assert ForestConfig.from_dict(cfg.to_dict()) == cfg
    m = generate_forest(cfg)
    save_forest(m, tmp_path / "f.json", cfg)
    assert ForestMap.load(tmp_path / "f.json").to_dict() == m.to_dict()


def test_inside_trunk_ignores_inflation(default_forest):
    o = default_forest.obstacles[0]
    assert inside_trunk((o.x, o.y, 1.0), default_forest)
    assert not inside_trunk((o.x + o.radius + 0.1, o.y, 1.0), default_forest)
    assert not inside_trunk((o.x, o.y, 2.1), default_forest)
    assert collision_point((o.x + o.radius + 0.1, o.y, 1.0), default_forest)


def test_free_points_respect_constraints(default_forest):
    rng = np.random.default_rng(0)
    start = sample_free_points(default_forest, rng, 1, (1.0, 1.0), min_clearance=0.3)[0]
    pts = sample_free_points(default_forest, rng, 8, (0.6, 1.5), min_clearance=0.2,
                             reachable_from=start, min_separation=3.0)
    for p in pts:
        assert not collision_point(p, default_forest)
        assert clearance_2d(p, default_forest) >= 0.2
        assert 0.6 <= p[2] <= 1.5
    assert pdist(np.array(pts)[:, :2]).min() >= 3.0
    mask, origin, res = reachable_grid(default_forest, start)
    assert mask.sum() > 0.5 * mask.size
