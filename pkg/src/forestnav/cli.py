"""Command line entry point: ``forestnav <subcommand> [options]``.

All config files are JSON. Outputs land in ``--output-dir``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from .evaluation import SCENARIOS, evaluate
from .forest import ForestConfig, InfeasibleForestError, generate_forest, save_forest
from .mission import BaselineExecutor, PolicyExecutor, export_log
from .planning import ForestMap, PlanningError, RRTConfig, plan_smooth_path
from .policy import PolicyWeights
from .ppo import TrainConfig, train
from .scenarios import SCENARIO_NAMES, run_scenario
from .tour import plan_tour, targets_from_json

log = logging.getLogger("forestnav")


def _load_config(path):
    if path is None:
        return {}
    return json.loads(Path(path).read_text())


def _dataclass_from(cls, data, **overrides):
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**{**data, **overrides})


def _executor(spec):
    if spec == "baseline":
        return BaselineExecutor(), "baseline"
    if spec.startswith("policy:"):
        weights = PolicyWeights.load(spec.split(":", 1)[1])
        return PolicyExecutor(weights), weights
    raise argparse.ArgumentTypeError("executor must be 'baseline' or 'policy:<weights.json>'")


def _write_json(path, data):
    path.write_text(json.dumps(data, indent=1, default=_json_default))
    log.info("wrote %s", path)


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def cmd_train(args, out):
    cfg = _dataclass_from(TrainConfig, _load_config(args.config), seed=args.seed)
    if args.steps is not None:
        cfg = TrainConfig(**{**asdict(cfg), "total_steps": args.steps})

    def progress(update, steps, curve, weights):
        if curve.mean_reward:
            log.info("steps %d  mean episode reward %.3f", steps, curve.mean_reward[-1])

    weights, curve = train(config=cfg, progress=progress)
    weights.save(out / "policy.json")
    curve.to_csv(out / "learning_curve.csv")
    log.info("saved policy and learning curve to %s", out)
    return 0


def cmd_evaluate(args, out):
    _, weights = _executor(args.executor)
    scenario = _load_config(args.config).get("scenario", args.scenario)
    metrics = evaluate(weights, scenario, args.episodes, args.seed)
    _write_json(out / "evaluation.json", metrics.to_dict())
    print(f"success rate {metrics.success_rate:.3f}  mean position error "
          f"{metrics.mean_position_error:.4f} m  mean yaw error "
          f"{metrics.mean_yaw_error_deg:.2f} deg")
    return 0


def _map_from(cfg, seed):
    if "map_file" in cfg:
        return ForestMap.load(cfg["map_file"])
    return generate_forest(ForestConfig.from_dict({"seed": seed, **cfg.get("forest", {})}))


def cmd_plan(args, out):
    cfg = _load_config(args.config)
    if "targets" not in cfg or "start" not in cfg:
        raise SystemExit("plan config needs 'start' [x, y, z] and 'targets'")
    fmap = _map_from(cfg, args.seed)
    rrt = _dataclass_from(RRTConfig, cfg.get("rrt", {}), seed=args.seed)
    targets = targets_from_json(cfg["targets"])
    tour = plan_tour(np.asarray(cfg["start"], dtype=float), targets)
    position = np.asarray(cfg["start"], dtype=float)
    legs = []
    for leg, idx in enumerate(tour.order):
        t = targets[idx]
        try:
            path = plan_smooth_path(position, t.as_array(), fmap,
                                    RRTConfig(**{**asdict(rrt), "seed": rrt.seed + leg}),
                                    goal_yaw_deg=t.yaw_deg)
        except PlanningError as exc:
            log.error("leg %d to target %d: %s", leg, idx, exc)
            return 1
        path.save_csv(out / f"path_leg{leg}.csv")
        legs.append({"target": idx, "length": path.length, **path.to_dict()})
        position = t.as_array()
    _write_json(out / "plan.json", {"tour": tour.to_dict(), "legs": legs})
    print(f"tour {list(tour.order)} cost {tour.total_cost:.3f} m, "
          f"{sum(leg['length'] for leg in legs):.3f} m of paths")
    return 0


def cmd_run_scenario(args, out):
    executor, _ = _executor(args.executor)
    overrides = _load_config(args.config)
    overrides["seed"] = args.seed
    mission_log = run_scenario(args.scenario, overrides, executor)
    export_log(mission_log, out / f"{args.scenario}_log.csv")
    export_log(mission_log, out / f"{args.scenario}_log.json")
    summary = mission_log.summary
    _write_json(out / f"{args.scenario}_summary.json", summary)
    print(json.dumps({k: v for k, v in summary.items()
                      if k not in ("targets", "path_lengths", "switch_distances")},
                     default=_json_default))
    if not summary.get("success", False):
        log.error("mission failed: %s", summary.get("failure"))
        return 2
    return 0


def cmd_gen_forest(args, out):
    cfg = ForestConfig.from_dict({"seed": args.seed, **_load_config(args.config)})
    fmap = generate_forest(cfg)
    save_forest(fmap, out / "forest.json", cfg)
    print(f"{len(fmap.obstacles)} trunks written to {out / 'forest.json'}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="forestnav", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--output-dir", default=".", help="directory for outputs")

    p = sub.add_parser("train", help="train the hover policy with PPO")
    common(p)
    p.add_argument("--steps", type=int, help="override total_steps")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a policy or the baseline on a hover task")
    common(p)
    p.add_argument("--executor", default="baseline")
    p.add_argument("--scenario", default="hover", choices=sorted(SCENARIOS))
    p.add_argument("--episodes", type=int, default=50)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("plan", help="TSP tour plus RRT* paths for a target list")
    common(p)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("run-scenario", help="fly one of the validation scenarios")
    common(p)
    p.add_argument("scenario", choices=SCENARIO_NAMES)
    p.add_argument("--executor", default="baseline")
    p.set_defaults(func=cmd_run_scenario)

    p = sub.add_parser("gen-forest", help="generate a forest map")
    common(p)
    p.set_defaults(func=cmd_gen_forest)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        return args.func(args, out)
    except (ValueError, OSError, InfeasibleForestError, argparse.ArgumentTypeError) as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
