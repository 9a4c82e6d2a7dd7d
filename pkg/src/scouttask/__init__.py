"""Decentralised scout-task multi-robot coordination.

A team of task robots confirms targets hidden in a grid world while
scout sensors reduce uncertainty about where those targets are. Planning
is per-robot Monte Carlo tree search against sampled teammate intent;
the acquisition score adds the plan's mutual-information gain to a
delta-weighted log moment generating function of the confirmation
count, which upper-bounds the posterior expected reward with
probability at least 1 - delta. An expectimax baseline (expected reward
only) is built in for comparison.
"""

from .belief import (
    OccupancyBelief,
    belief_to_csv,
    binary_entropy,
    cell_information_gain,
    fuse,
    trajectory_information_gain,
    uniform_prior,
)
from .comms import BusConfig, Message, MessageBus, MessageKind
from .objective import (
    JointPlan,
    Mode,
    ObjectiveConfig,
    TeamObjective,
    detection_field,
    expected_reward,
    mi_ucb_objective,
    realized_reward,
    reward_cgf,
    ucb_violation_rate,
)
from .planner import PlanDistribution, PlannerConfig, SearchTree, compress_distribution, plan_round, sample_teammates
from .scenario import Scenario, ScenarioError, four_robot_scenario, load_scenario, scenario_from_dict, two_robot_scenario
from .sensing import (
    MeasurementGrid,
    SensorSpec,
    VisibilityCache,
    VisibilityMask,
    line_of_sight,
    sense,
    visibility_single,
    visibility_trajectory,
)
from .sim import EpisodeConfig, EpisodeMetrics, confirm_targets, run_episode
from .team import RobotSpec
from .world import (
    ActionSequence,
    GridSpec,
    GroundTruth,
    Heading,
    MotionPrimitive,
    ObstacleCollisionError,
    OutOfBoundsError,
    RobotPose,
    cell_of,
    rollout_poses,
    step,
)

__version__ = "0.1.0"
