"""Quadrotor under-canopy forest inspection stack.

Rigid-body simulator, 100 Hz view-pose tracking environment, MLP actor-critic
trained with PPO, a cascaded baseline controller, exhaustive TSP sequencing,
informed RRT* over cylinder forests, reference generators and a mission runner.
"""

from .dynamics import PhysicalParams, QuadrotorState, action_to_rpm, hover_rpm, step_dynamics
from .env import InspectionEnv, NoiseConfig, TerminationStatus, ViewPoseRef, compute_reward
from .forest import ForestConfig, generate_forest
from .mission import MissionLog, export_log, run_mission
from .planning import ForestMap, RRTConfig, plan_path, smooth_path
from .policy import PolicyWeights, actor_forward
from .scenarios import run_scenario
from .tour import plan_tour

__version__ = "0.1.0"
