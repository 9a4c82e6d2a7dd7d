"""Per-robot Monte Carlo tree search with asynchronous teammate intent.

Each robot grows a UCT tree over its own primitive sequences. Every
iteration fixes the other robots' trajectories at a random sample from
their last communicated plan distributions (STAY at the last known pose
when nothing has arrived yet) and scores the resulting joint plan with
the team objective. After a search round the robot publishes a
compressed distribution over its best complete sequences: top-K by mean
score, softmax-weighted.

Tie-breaks everywhere are lexicographic in heading order (N first,
STAY last). UCT means are min-max normalised over the scores seen so
far in the current tree so the exploration constant has a stable scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .objective import ObjectiveConfig, TeamObjective, _Contribution
from .sensing import VisibilityCache
from .team import RobotSpec
from .world import (
    ActionSequence,
    GridSpec,
    Heading,
    MotionPrimitive,
    RobotPose,
    pose_valid,
    stay_sequence,
    step,
)

ALL_HEADINGS = tuple(Heading)


@dataclass(frozen=True)
class PlannerConfig:
    """Search hyperparameters for one robot's planner."""

    horizon: int = 5
    iterations: int = 3000
    exploration: float = math.sqrt(2.0)
    distribution_size: int = 5
    temperature: float | None = None  # None: tree score range / 4
    rollout_policy: str = "uniform"  # "uniform" | "greedy"
    headings: tuple[Heading, ...] = ALL_HEADINGS

    def __post_init__(self) -> None:
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.exploration <= 0:
            raise ValueError("exploration constant must be positive")
        if self.distribution_size < 1:
            raise ValueError("distribution_size must be >= 1")
        if self.temperature is not None and self.temperature <= 0:
            raise ValueError("temperature must be positive (or None for automatic)")
        if self.rollout_policy not in ("uniform", "greedy"):
            raise ValueError(f"unknown rollout policy {self.rollout_policy!r}")
        if not self.headings:
            raise ValueError("headings set must not be empty")
        object.__setattr__(self, "headings", tuple(sorted(set(self.headings))))


@dataclass(frozen=True)
class PlanDistribution:
    """A robot's communicated intent: weighted candidate sequences.

    Sequences are rolled out from ``start_pose``, the sender's pose when
    the distribution was built.
    """

    robot_id: int
    start_pose: RobotPose
    entries: tuple[tuple[ActionSequence, float], ...]
    timestamp: int

    def __post_init__(self) -> None:
        if not self.entries:
            raise ValueError("a plan distribution needs at least one entry")
        weights = [w for _, w in self.entries]
        if any(w < 0 for w in weights):
            raise ValueError("plan weights must be non-negative")
        if abs(sum(weights) - 1.0) > 1e-6:
            raise ValueError(f"plan weights must sum to 1, got {sum(weights)}")

    def weights(self) -> np.ndarray:
        return np.array([w for _, w in self.entries])


class _Node:
    __slots__ = ("pose", "visits", "total", "children", "untried")

    def __init__(self, pose: RobotPose):
        self.pose = pose
        self.visits = 0
        self.total = 0.0
        self.children: dict[Heading, "_Node"] = {}
        self.untried: list[Heading] | None = None

    @property
    def mean(self) -> float:
        return self.total / self.visits if self.visits else 0.0


class SearchTree:
    """UCT tree over one robot's primitive prefixes."""

    def __init__(self, root_pose: RobotPose):
        self.root = _Node(root_pose)
        self.score_lo = math.inf
        self.score_hi = -math.inf

    def record(self, score: float) -> None:
        self.score_lo = min(self.score_lo, score)
        self.score_hi = max(self.score_hi, score)

    def normalised(self, mean: float) -> float:
        span = self.score_hi - self.score_lo
        if span <= 0.0:
            return 0.0
        return (mean - self.score_lo) / span

    def node(self, prefix: Sequence[Heading]) -> _Node | None:
        node = self.root
        for h in prefix:
            node = node.children.get(h)
            if node is None:
                return None
        return node

    def complete_sequences(self, horizon: int) -> list[tuple[tuple[Heading, ...], float]]:
        """All visited depth-``horizon`` prefixes with their mean scores."""
        out: list[tuple[tuple[Heading, ...], float]] = []

        def walk(node: _Node, prefix: tuple[Heading, ...]) -> None:
            if len(prefix) == horizon:
                out.append((prefix, node.mean))
                return
            for h, child in node.children.items():
                if child.visits > 0:
                    walk(child, prefix + (h,))

        walk(self.root, ())
        return out


class _TeammateSampler:
    """Pre-scored entries of one teammate's distribution for fast draws."""

    __slots__ = ("contribs", "cum_weights")

    def __init__(self, contribs: list[_Contribution], weights: np.ndarray):
        self.contribs = contribs
        total = weights.sum()
        self.cum_weights = np.cumsum(weights / total) if total > 0 else None

    def draw(self, rng: np.random.Generator) -> _Contribution:
        if self.cum_weights is None or len(self.contribs) == 1:
            if len(self.contribs) > 1:
                return self.contribs[int(rng.integers(len(self.contribs)))]
            return self.contribs[0]
        u = rng.random()
        return self.contribs[int(np.searchsorted(self.cum_weights, u))]


def _primitive_table(headings: Sequence[Heading], step_length: float) -> dict[Heading, MotionPrimitive]:
    return {
        h: MotionPrimitive.stay() if h is Heading.STAY else MotionPrimitive(h, step_length)
        for h in headings
    }


def sample_teammates(
    distributions: Mapping[int, PlanDistribution],
    rng: np.random.Generator,
    team_ids: Sequence[int],
    horizon: int,
) -> dict[int, ActionSequence]:
    """One categorical draw per teammate; STAY for teammates without a
    distribution. Teammates are visited in sorted id order."""
    out: dict[int, ActionSequence] = {}
    for tid in sorted(team_ids):
        dist = distributions.get(tid)
        if dist is None:
            out[tid] = stay_sequence(tid, horizon)
            continue
        weights = dist.weights()
        cum = np.cumsum(weights / weights.sum())
        idx = int(np.searchsorted(cum, rng.random()))
        out[tid] = dist.entries[idx][0]
    return out


def _teammate_poses_from_distribution(
    dist: PlanDistribution,
    seq: ActionSequence,
    grid: GridSpec,
    obstacles: np.ndarray,
) -> list[RobotPose]:
    poses: list[RobotPose] = []
    pose = dist.start_pose
    for prim in seq.primitives:
        try:
            pose = step(pose, prim, grid, obstacles)
        except Exception:
            break  # stale distribution against a changed constraint: keep the valid prefix
        poses.append(pose)
    return poses


def plan_round(
    robot_id: int,
    pose: RobotPose,
    robots: Mapping[int, RobotSpec],
    belief,
    distributions: Mapping[int, PlanDistribution],
    grid: GridSpec,
    obstacles: np.ndarray,
    step_length: float,
    config: PlannerConfig,
    objective_config: ObjectiveConfig,
    rng: np.random.Generator,
    *,
    round_index: int = 0,
    cache: VisibilityCache | None = None,
    known_poses: Mapping[int, RobotPose] | None = None,
    stats: dict | None = None,
) -> tuple[ActionSequence, PlanDistribution]:
    """Run one MCTS round and return (best sequence, compressed distribution).

    ``known_poses`` supplies fallback positions for teammates without a
    distribution (their scenario start poses by default). If no primitive
    at all is valid from ``pose`` the robot falls back to an all-STAY
    plan.
    """
    evaluator = TeamObjective(robots, belief, objective_config, grid, obstacles, cache)
    cache = evaluator.cache
    horizon = config.horizon
    prims = _primitive_table(config.headings, step_length)

    def valid_headings(p: RobotPose) -> list[Heading]:
        out = []
        for h in config.headings:
            if h is Heading.STAY:
                out.append(h)
                continue
            try:
                step(p, prims[h], grid, obstacles)
            except Exception:
                continue
            out.append(h)
        return out

    samplers: list[_TeammateSampler] = []
    for tid in sorted(robots):
        if tid == robot_id:
            continue
        spec = robots[tid]
        dist = distributions.get(tid)
        if dist is not None:
            contribs = []
            weights = []
            for seq, w in dist.entries:
                poses = _teammate_poses_from_distribution(dist, seq, grid, obstacles)
                contribs.append(evaluator.contribution(tid, poses))
                weights.append(w)
            samplers.append(_TeammateSampler(contribs, np.array(weights)))
        else:
            fallback = known_poses.get(tid) if known_poses else None
            if fallback is None:
                fallback = spec.start_pose
            stay_poses = [fallback] * horizon
            samplers.append(_TeammateSampler([evaluator.contribution(tid, stay_poses)], np.ones(1)))

    tree = SearchTree(pose)
    root = tree.root
    root.untried = valid_headings(pose)
    if not root.untried:
        seq = stay_sequence(robot_id, horizon)
        dist = PlanDistribution(robot_id, pose, ((seq, 1.0),), round_index)
        if stats is not None:
            stats.update({"fallback": "no_valid_action", "iterations": 0})
        return seq, dist

    c = config.exploration
    greedy = config.rollout_policy == "greedy"
    task_sensor = robots[robot_id].task_sensor

    def one_step_task_gain(p: RobotPose) -> float:
        if task_sensor is None:
            return 0.0
        mask = cache.visible_cells(p, task_sensor.range)
        return task_sensor.p_visible * float(mask @ evaluator.belief_flat)

    for _ in range(config.iterations):
        fixed = [s.draw(rng) for s in samplers]

        node = root
        path = [root]
        poses: list[RobotPose] = []
        while len(poses) < horizon:
            if node.untried is None:
                node.untried = valid_headings(node.pose)
            if node.untried:
                h = node.untried.pop(0)
                child = _Node(step(node.pose, prims[h], grid, obstacles) if h is not Heading.STAY else node.pose)
                node.children[h] = child
                path.append(child)
                poses.append(child.pose)
                node = child
                break
            if not node.children:
                break  # dead end without STAY in the action set
            ln_n = math.log(node.visits)
            best_h = None
            best_val = -math.inf
            for h, child in node.children.items():
                val = tree.normalised(child.mean) + c * math.sqrt(ln_n / child.visits)
                if val > best_val:
                    best_val = val
                    best_h = h
            node = node.children[best_h]
            path.append(node)
            poses.append(node.pose)

        roll_pose = poses[-1] if poses else pose
        while len(poses) < horizon:
            options = valid_headings(roll_pose)
            if not options:
                break
            if greedy:
                h = max(options, key=lambda hh: (one_step_task_gain(
                    step(roll_pose, prims[hh], grid, obstacles) if hh is not Heading.STAY else roll_pose
                ), -hh))
            else:
                h = options[int(rng.integers(len(options)))]
            roll_pose = step(roll_pose, prims[h], grid, obstacles) if h is not Heading.STAY else roll_pose
            poses.append(roll_pose)

        own = evaluator.contribution(robot_id, poses)
        score = evaluator.score([own] + fixed)
        tree.record(score)
        for n in path:
            n.visits += 1
            n.total += score

    headings: list[Heading] = []
    node = root
    while len(headings) < horizon:
        if node is not None and node.children:
            best_h = None
            best_visits = -1
            for h, child in node.children.items():
                if child.visits > best_visits:
                    best_visits = child.visits
                    best_h = h
            headings.append(best_h)
            node = node.children[best_h]
        else:
            headings.append(Heading.STAY)  # unexplored suffix: hold position
            node = None
    best_seq = ActionSequence(
        robot_id,
        tuple(prims.get(h, MotionPrimitive.stay()) for h in headings),
    )

    distribution = compress_distribution(
        tree, config, robot_id=robot_id, start_pose=pose, timestamp=round_index,
        step_length=step_length, fallback=best_seq,
    )
    if stats is not None:
        stats["iterations"] = config.iterations
        stats["root_visits"] = {h.name: ch.visits for h, ch in root.children.items()}
        stats["root_means"] = {h.name: ch.mean for h, ch in root.children.items()}
        stats["score_lo"] = tree.score_lo
        stats["score_hi"] = tree.score_hi
        stats["chosen"] = best_seq.describe()
    return best_seq, distribution


def compress_distribution(
    tree: SearchTree,
    config: PlannerConfig,
    *,
    robot_id: int,
    start_pose: RobotPose,
    timestamp: int,
    step_length: float,
    fallback: ActionSequence | None = None,
) -> PlanDistribution:
    """Top-K complete sequences by mean score, softmax-weighted.

    The temperature defaults to a quarter of the score range seen in the
    tree; a degenerate range yields uniform weights. Without any
    complete-horizon sequence the fallback sequence is published alone.
    """
    complete = tree.complete_sequences(config.horizon)
    prims = _primitive_table(ALL_HEADINGS, step_length)
    if not complete:
        if fallback is None:
            raise ValueError("tree holds no complete sequence and no fallback was given")
        return PlanDistribution(robot_id, start_pose, ((fallback, 1.0),), timestamp)

    complete.sort(key=lambda item: (-item[1], item[0]))
    top = complete[: config.distribution_size]
    means = np.array([m for _, m in top])

    span = tree.score_hi - tree.score_lo
    beta = config.temperature if config.temperature is not None else span / 4.0
    if beta <= 0.0 or not np.isfinite(beta):
        weights = np.full(len(top), 1.0 / len(top))
    else:
        z = (means - means.max()) / beta
        w = np.exp(z)
        weights = w / w.sum()

    entries = tuple(
        (ActionSequence(robot_id, tuple(prims[h] for h in prefix)), float(wt))
        for (prefix, _), wt in zip(top, weights)
    )
    return PlanDistribution(robot_id, start_pose, entries, timestamp)
