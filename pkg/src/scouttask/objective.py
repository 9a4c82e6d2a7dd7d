"""Team objectives: expected reward, its generating function, and the
information-weighted upper confidence score.

The reward of a joint plan is the number of targets the task sensors
confirm, a Poisson-binomial count over cells with per-cell detection
probability P(d) = P(visible to a task sensor) * P(occupied). Its
log moment generating function at unit exponent has the closed form
sum log(1 + P(d) (e - 1)).

The upper-confidence score adds the plan's expected information gain
(in nats) to delta times that generating function. A posterior expected
reward exceeds this score with probability at most delta over the
measurement draw; ``ucb_violation_rate`` measures that frequency
empirically with an exact enumeration posterior.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Mapping, Sequence

import numpy as np

from .belief import OccupancyBelief, cell_information_gain
from .sensing import VisibilityCache, coverage_counts
from .team import RobotSpec
from .world import ActionSequence, GridSpec, GroundTruth, RobotPose, rollout_poses

if TYPE_CHECKING:
    from .scenario import Scenario

_LN2 = math.log(2.0)
_E_MINUS_1 = math.e - 1.0


class TooLargeError(Exception):
    """The instance has too many free cells for exact enumeration."""


class Mode(str, enum.Enum):
    """Which acquisition the planner maximises."""

    MI_UCB = "mi_ucb"
    EXPECTIMAX = "expectimax"


@dataclass(frozen=True)
class ObjectiveConfig:
    """Acquisition mode and the confidence weight delta in (0, 1]."""

    delta: float = 0.1
    mode: Mode = Mode.MI_UCB

    def __post_init__(self) -> None:
        if not 0.0 < self.delta <= 1.0:
            raise ValueError(f"delta must lie in (0, 1], got {self.delta}")


@dataclass(frozen=True)
class JointPlan:
    """Action sequences for a set of robots plus their rolled-out poses."""

    sequences: Mapping[int, ActionSequence]
    poses: Mapping[int, tuple[RobotPose, ...]]

    @classmethod
    def from_sequences(
        cls,
        start_poses: Mapping[int, RobotPose],
        sequences: Mapping[int, ActionSequence],
        grid: GridSpec,
        obstacles: np.ndarray,
    ) -> "JointPlan":
        poses = {
            rid: tuple(rollout_poses(start_poses[rid], seq, grid, obstacles))
            for rid, seq in sequences.items()
        }
        return cls(dict(sequences), poses)


class _Contribution:
    """One robot's coverage counts, split by role."""

    __slots__ = ("scout_pv", "scout_counts", "gain_nats", "task_pv", "task_counts")

    def __init__(self, scout_pv, scout_counts, gain_nats, task_pv, task_counts):
        self.scout_pv = scout_pv
        self.scout_counts = scout_counts
        self.gain_nats = gain_nats
        self.task_pv = task_pv
        self.task_counts = task_counts


def _miss_factor(miss: np.ndarray, pv: float, counts: np.ndarray) -> np.ndarray:
    if pv >= 1.0:
        return miss * (counts == 0)
    return miss * (1.0 - pv) ** counts


def cgf_from_detection(pd: np.ndarray) -> float:
    """Closed-form log E[exp(count)] for independent Bernoulli detections."""
    return float(np.log1p(np.asarray(pd) * _E_MINUS_1).sum())


class TeamObjective:
    """Scores joint plans against one belief snapshot.

    Built once per planning round; per-sensor information fields are
    precomputed so that scoring a candidate plan reduces to a handful of
    vector operations over the grid.
    """

    def __init__(
        self,
        robots: Mapping[int, RobotSpec],
        belief: OccupancyBelief,
        config: ObjectiveConfig,
        grid: GridSpec,
        obstacles: np.ndarray,
        cache: VisibilityCache | None = None,
    ):
        self.robots = dict(robots)
        self.config = config
        self.grid = grid
        self.cache = cache if cache is not None else VisibilityCache(grid, obstacles)
        self.belief_flat = belief.probs.ravel()
        self._gain_nats: dict[int, np.ndarray] = {}
        if config.mode is Mode.MI_UCB:
            for rid, spec in self.robots.items():
                if spec.is_scout:
                    self._gain_nats[rid] = (
                        cell_information_gain(self.belief_flat, spec.scout_sensor) * _LN2
                    )

    def contribution(self, robot_id: int, poses: Sequence[RobotPose]) -> _Contribution:
        spec = self.robots[robot_id]
        scout_pv = scout_counts = gain = None
        task_pv = task_counts = None
        if spec.is_scout and self.config.mode is Mode.MI_UCB:
            scout_pv = spec.scout_sensor.p_visible
            scout_counts = coverage_counts(poses, spec.scout_sensor.range, self.cache)
            gain = self._gain_nats[robot_id]
        if spec.is_task:
            task_pv = spec.task_sensor.p_visible
            task_counts = coverage_counts(poses, spec.task_sensor.range, self.cache)
        return _Contribution(scout_pv, scout_counts, gain, task_pv, task_counts)

    def plan_contributions(self, plan: JointPlan) -> list[_Contribution]:
        return [self.contribution(rid, plan.poses[rid]) for rid in plan.poses]

    def task_visibility(self, contribs: Sequence[_Contribution]) -> np.ndarray:
        miss = np.ones(self.grid.n_cells)
        for c in contribs:
            if c.task_counts is not None:
                miss = _miss_factor(miss, c.task_pv, c.task_counts)
        return 1.0 - miss

    def expected_reward(self, contribs: Sequence[_Contribution]) -> float:
        return float(np.dot(self.task_visibility(contribs), self.belief_flat))

    def reward_cgf(self, contribs: Sequence[_Contribution]) -> float:
        return cgf_from_detection(self.task_visibility(contribs) * self.belief_flat)

    def information_nats(self, contribs: Sequence[_Contribution]) -> float:
        miss = np.ones(self.grid.n_cells)
        best = np.zeros(self.grid.n_cells)
        for c in contribs:
            if c.scout_counts is not None:
                miss = _miss_factor(miss, c.scout_pv, c.scout_counts)
                best = np.maximum(best, np.where(c.scout_counts > 0, c.gain_nats, 0.0))
        return float(np.dot(1.0 - miss, best))

    def score(self, contribs: Sequence[_Contribution]) -> float:
        if self.config.mode is Mode.EXPECTIMAX:
            return self.expected_reward(contribs)
        return self.information_nats(contribs) + self.config.delta * self.reward_cgf(contribs)

    def score_plan(self, plan: JointPlan) -> float:
        return self.score(self.plan_contributions(plan))


def detection_field(
    plan: JointPlan,
    robots: Mapping[int, RobotSpec],
    belief: OccupancyBelief,
    grid: GridSpec,
    obstacles: np.ndarray,
    cache: VisibilityCache | None = None,
) -> np.ndarray:
    """Per-cell detection probability P(v; task poses) * P(occupied)."""
    ev = TeamObjective(robots, belief, ObjectiveConfig(mode=Mode.EXPECTIMAX), grid, obstacles, cache)
    pd = ev.task_visibility(ev.plan_contributions(plan)) * ev.belief_flat
    return pd.reshape(grid.n_x, grid.n_y)


def expected_reward(
    plan: JointPlan,
    robots: Mapping[int, RobotSpec],
    belief: OccupancyBelief,
    grid: GridSpec,
    obstacles: np.ndarray,
    cache: VisibilityCache | None = None,
) -> float:
    """Expected confirmation count under the belief (the expectimax score)."""
    ev = TeamObjective(robots, belief, ObjectiveConfig(mode=Mode.EXPECTIMAX), grid, obstacles, cache)
    return ev.expected_reward(ev.plan_contributions(plan))


def reward_cgf(
    plan: JointPlan,
    robots: Mapping[int, RobotSpec],
    belief: OccupancyBelief,
    grid: GridSpec,
    obstacles: np.ndarray,
    cache: VisibilityCache | None = None,
) -> float:
    """log E[exp(reward)] in nats for the plan's Poisson-binomial count."""
    ev = TeamObjective(robots, belief, ObjectiveConfig(mode=Mode.EXPECTIMAX), grid, obstacles, cache)
    return ev.reward_cgf(ev.plan_contributions(plan))


def mi_ucb_objective(
    plan: JointPlan,
    robots: Mapping[int, RobotSpec],
    belief: OccupancyBelief,
    config: ObjectiveConfig,
    grid: GridSpec,
    obstacles: np.ndarray,
    cache: VisibilityCache | None = None,
) -> float:
    """The planner's acquisition score for one joint plan.

    MI_UCB mode returns information-gain (nats) + delta * reward CGF;
    EXPECTIMAX mode returns the expected confirmation count.
    """
    ev = TeamObjective(robots, belief, config, grid, obstacles, cache)
    return ev.score_plan(plan)


def realized_reward(
    plan: JointPlan,
    robots: Mapping[int, RobotSpec],
    ground_truth: GroundTruth,
    grid: GridSpec,
    obstacles: np.ndarray,
    rng: np.random.Generator | None = None,
    cache: VisibilityCache | None = None,
) -> int:
    """Ground-truth confirmation count for the plan.

    Deterministic when every task sensor has p_visible 1; otherwise each
    cell's trajectory visibility is sampled (one draw against the union
    probability, which matches independent per-pose draws).
    """
    cache = cache if cache is not None else VisibilityCache(grid, obstacles)
    miss = np.ones(grid.n_cells)
    stochastic = False
    for rid, poses in plan.poses.items():
        spec = robots[rid]
        if not spec.is_task:
            continue
        counts = coverage_counts(poses, spec.task_sensor.range, cache)
        pv = spec.task_sensor.p_visible
        stochastic = stochastic or pv < 1.0
        miss = _miss_factor(miss, pv, counts)
    p_vis = 1.0 - miss
    if stochastic:
        if rng is None:
            raise ValueError("rng required: a task sensor has p_visible < 1")
        seen = rng.random(p_vis.size) < p_vis
    else:
        seen = p_vis > 0.0
    return int(np.count_nonzero(seen & ground_truth.occupancy.ravel()))


# ---------------------------------------------------------------------------
# Confidence-bound violation measurement
# ---------------------------------------------------------------------------


def exact_cell_mi_nats(
    p: np.ndarray, pv: np.ndarray, tpr: np.ndarray, fpr: np.ndarray
) -> np.ndarray:
    """Per-cell I(reading; occupancy) in nats by direct joint enumeration.

    The reading takes three values (unobserved / empty / occupied); the
    sum runs over the full 2x3 joint, which keeps this independent of
    the entropy-difference form used for planning.
    """
    p = np.asarray(p, dtype=float)
    pe = np.stack([1.0 - p, p])  # (2, k)
    # P(y | e) rows: unobserved, read-empty, read-occupied
    read_occ = np.stack([np.asarray(fpr, float), np.asarray(tpr, float)])  # (2, k)
    py_e = np.stack([
        np.broadcast_to(1.0 - pv, p.shape) * np.ones((2, 1)),
        pv * (1.0 - read_occ),
        pv * read_occ,
    ])  # (3, 2, k)
    py = (py_e * pe[None, :, :]).sum(axis=1)  # (3, k)
    mi = np.zeros(p.shape)
    for y in range(3):
        for e in range(2):
            joint = py_e[y, e] * pe[e]
            term = np.zeros(p.shape)
            pos = joint > 0.0
            term[pos] = joint[pos] * (np.log(py_e[y, e][pos]) - np.log(py[y][pos]))
            mi += term
    return np.maximum(mi, 0.0)


def _instance_fields(
    instance: "Scenario",
    scout_plan: JointPlan,
    task_plan: JointPlan,
    cache: VisibilityCache,
) -> tuple[np.ndarray, ...]:
    """Distil (priors, scout pv, tpr, fpr, task pv) over free cells."""
    free = ~instance.obstacles.ravel()
    k = int(free.sum())
    if k > 12:
        raise TooLargeError(f"{k} free cells; exact enumeration capped at 12")
    robots = {r.id: r for r in instance.robots}
    priors = np.full(k, instance.prior)

    miss_s = np.ones(k)
    best_gain = np.full(k, -1.0)
    tpr = np.full(k, 0.5)
    fpr = np.full(k, 0.5)
    for rid, poses in scout_plan.poses.items():
        spec = robots[rid]
        if not spec.is_scout:
            continue
        sensor = spec.scout_sensor
        counts = coverage_counts(poses, sensor.range, cache)[free]
        miss_s = _miss_factor(miss_s, sensor.p_visible, counts)
        gain = np.where(counts > 0, cell_information_gain(priors, sensor), -1.0)
        better = gain > best_gain
        tpr[better] = sensor.tpr
        fpr[better] = sensor.fpr
        best_gain = np.maximum(best_gain, gain)
    scout_pv = 1.0 - miss_s

    miss_t = np.ones(k)
    for rid, poses in task_plan.poses.items():
        spec = robots[rid]
        if not spec.is_task:
            continue
        counts = coverage_counts(poses, spec.task_sensor.range, cache)[free]
        miss_t = _miss_factor(miss_t, spec.task_sensor.p_visible, counts)
    task_pv = 1.0 - miss_t
    return priors, scout_pv, tpr, fpr, task_pv


def posterior_expected_reward_enum(
    priors: np.ndarray,
    scout_pv: np.ndarray,
    tpr: np.ndarray,
    fpr: np.ndarray,
    task_pv: np.ndarray,
    obs: np.ndarray,
) -> np.ndarray:
    """E[reward | readings] by enumerating every occupancy configuration.

    ``obs`` is an (m, k) int array with 0 = unobserved, 1 = read empty,
    2 = read occupied. Works in plain probability space: with at most 12
    cells the likelihood products cannot underflow.
    """
    k = priors.size
    configs = ((np.arange(2**k)[:, None] >> np.arange(k)[None, :]) & 1).astype(bool)
    prior_cfg = np.prod(np.where(configs, priors, 1.0 - priors), axis=1)
    r_cfg = configs @ task_pv

    m = obs.shape[0]
    # P(obs | e) per cell for e = 0, 1
    like = np.empty((m, k, 2))
    for e, read_occ in ((0, fpr), (1, tpr)):
        like[:, :, e] = np.where(
            obs == 0,
            1.0 - scout_pv,
            np.where(obs == 2, scout_pv * read_occ, scout_pv * (1.0 - read_occ)),
        )
    lik_cfg = np.ones((m, 2**k))
    for c in range(k):
        lik_cfg *= np.where(configs[None, :, c], like[:, c, 1][:, None], like[:, c, 0][:, None])
    weights = lik_cfg * prior_cfg[None, :]
    total = weights.sum(axis=1)
    if np.any(total <= 0.0):
        raise ValueError("observed readings have zero prior-predictive probability")
    return (weights @ r_cfg) / total


def ucb_violation_rate(
    instance: "Scenario",
    scout_plan: JointPlan,
    task_plan: JointPlan,
    config: ObjectiveConfig,
    n_samples: int,
    rng: np.random.Generator,
    chunk_rows: int | None = None,
) -> float:
    """Fraction of measurement draws whose posterior expected reward exceeds
    (1/delta) * information + log E[exp(reward)].

    Measurements follow the planning-side model exactly: per free cell one
    visibility draw against the plan's union probability, then one
    confusion-matrix reading from the most informative covering sensor.
    The guarantee is that the population rate is at most delta.
    """
    cache = VisibilityCache(instance.grid, instance.obstacles)
    priors, scout_pv, tpr, fpr, task_pv = _instance_fields(instance, scout_plan, task_plan, cache)
    k = priors.size
    mi_nats = float(exact_cell_mi_nats(priors, scout_pv, tpr, fpr).sum())
    cgf = cgf_from_detection(task_pv * priors)
    bound = mi_nats / config.delta + cgf

    if chunk_rows is None:
        chunk_rows = max(256, 4_000_000 // (2**k))
    violations = 0
    done = 0
    while done < n_samples:
        m = min(chunk_rows, n_samples - done)
        occupied = rng.random((m, k)) < priors[None, :]
        visible = rng.random((m, k)) < scout_pv[None, :]
        p_read = np.where(occupied, tpr[None, :], fpr[None, :])
        read_occ = rng.random((m, k)) < p_read
        obs = np.where(visible, np.where(read_occ, 2, 1), 0)
        post_reward = posterior_expected_reward_enum(priors, scout_pv, tpr, fpr, task_pv, obs)
        violations += int(np.count_nonzero(post_reward > bound))
        done += m
    return violations / n_samples
