import csv
import json

import pytest

from forestnav.cli import main
from forestnav.mission import LOG_COLUMNS
from forestnav.planning import CylinderObstacle, ForestMap
from forestnav.policy import PolicyWeights

SMALL = {"width": 8.0, "depth": 8.0, "n_trunks": 25}


def write(path, data):
    path.write_text(json.dumps(data))
    return str(path)


def test_gen_forest(tmp_path):
    assert main(["gen-forest", "--seed", "3", "--config", write(tmp_path / "c.json", SMALL),
                 "--output-dir", str(tmp_path)]) == 0
    data = json.loads((tmp_path / "forest.json").read_text())
    assert len(data["obstacles"]) == 25 and data["config"]["seed"] == 3


def test_gen_forest_infeasible_exit_code(tmp_path):
    cfg = {"width": 2.0, "depth": 2.0, "n_trunks": 200, "max_attempts": 10}
    assert main(["gen-forest", "--config", write(tmp_path / "c.json", cfg),
                 "--output-dir", str(tmp_path)]) == 1


def test_plan(tmp_path):
    fmap = ForestMap([CylinderObstacle(4.0, 4.0, 0.3, 0.0, 2.5)],
                     ((0.0, 0.0, 0.3), (8.0, 8.0, 2.0)), 0.3)
    fmap.save(tmp_path / "map.json")
    cfg = {"map_file": str(tmp_path / "map.json"), "start": [1.0, 1.0, 1.0],
           "rrt": {"max_iterations": 800},
           "targets": [{"x": 6.5, "y": 6.5, "z": 1.2, "yaw_deg": 45.0},
                       {"x": 1.5, "y": 6.5, "z": 0.8}]}
    assert main(["plan", "--config", write(tmp_path / "p.json", cfg),
                 "--output-dir", str(tmp_path)]) == 0
    plan = json.loads((tmp_path / "plan.json").read_text())
    assert sorted(plan["tour"]["order"]) == [0, 1]
    assert len(plan["legs"]) == 2
    assert (tmp_path / "path_leg0.csv").exists()
    cfg["targets"].append({"x": 4.0, "y": 4.0, "z": 1.0})
    assert main(["plan", "--config", write(tmp_path / "p.json", cfg),
                 "--output-dir", str(tmp_path)]) == 1


def test_plan_needs_targets(tmp_path):
    with pytest.raises(SystemExit):
        main(["plan", "--config", write(tmp_path / "p.json", {}), "--output-dir", str(tmp_path)])


def test_run_scenario_writes_logs(tmp_path):
    cfg = {"forest": SMALL, "scan": {"angular_rate": 180.0}}
    assert main(["run-scenario", "scan", "--config", write(tmp_path / "s.json", cfg),
                 "--output-dir", str(tmp_path)]) == 0
    with open(tmp_path / "scan_log.csv") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == LOG_COLUMNS
    assert len(rows) > 100
    summary = json.loads((tmp_path / "scan_summary.json").read_text())
    assert summary["success"] and summary["scenario"] == "scan"


def test_evaluate_baseline(tmp_path, capsys):
    assert main(["evaluate", "--episodes", "2", "--output-dir", str(tmp_path)]) == 0
    metrics = json.loads((tmp_path / "evaluation.json").read_text())
    assert metrics["success_rate"] == 1.0 and len(metrics["episodes"]) == 2
    assert "success rate" in capsys.readouterr().out


def test_evaluate_policy_file(tmp_path):
    path = tmp_path / "w.json"
    PolicyWeights.zeros().save(path)
    assert main(["evaluate", "--executor", f"policy:{path}", "--scenario", "hover_offset",
                 "--episodes", "1", "--output-dir", str(tmp_path)]) == 0
    metrics = json.loads((tmp_path / "evaluation.json").read_text())
    assert metrics["success_rate"] == 0.0


def test_bad_inputs_exit_nonzero(tmp_path):
    assert main(["evaluate", "--executor", "pid", "--output-dir", str(tmp_path)]) == 1
    assert main(["evaluate", "--executor", f"policy:{tmp_path}/none.json",
                 "--output-dir", str(tmp_path)]) == 1
    bad = tmp_path / "bad.json"
    bad.write_text('{"format": "other"}')
    assert main(["evaluate", "--executor", f"policy:{bad}", "--output-dir", str(tmp_path)]) == 1
    with pytest.raises(SystemExit):
        main(["run-scenario", "orbit"])


def test_train_smoke(tmp_path):
    cfg = {"rollout_length": 128, "minibatch_size": 64, "epochs": 1, "n_envs": 2}
    assert main(["train", "--steps", "512", "--config", write(tmp_path / "t.json", cfg),
                 "--output-dir", str(tmp_path)]) == 0
    PolicyWeights.load(tmp_path / "policy.json")
    assert (tmp_path / "learning_curve.csv").exists()
