"""Episode runner: plan, move, sense, fuse, communicate, confirm.

Each tick runs five phases:

1. deliver due messages; fuse received measurements into each robot's
   own belief, absorb teammate plan distributions, and note reported
   confirmations (confirmed cells are pinned to belief 0 so nobody keeps
   chasing them);
2. every robot plans one search round against its belief snapshot and
   publishes its compressed plan distribution;
3. every robot executes ``replan_interval`` primitives of its chosen
   sequence; after each executed step scouts sense (fusing their own
   measurement and broadcasting it) and task robots check ground-truth
   target visibility, recording and broadcasting new confirmations;
4. metrics are recorded; the episode ends when all targets are
   confirmed or ``max_ticks`` is reached.

Confirmation is a ground-truth event: a task sensor that physically
sees a target confirms it regardless of the robot's belief there. Only
scout sensors produce belief measurements; task motion influences the
belief solely through confirmations.

Everything is deterministic given the seed. Random streams are derived
per purpose: planner draws per robot, sensing and confirmation draws
per (robot, tick, substep), bus drops per link counter.
"""

from __future__ import annotations

import dataclasses
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence, TextIO

import numpy as np

from .belief import OccupancyBelief, fuse, uniform_prior
from .comms import BusConfig, Message, MessageBus, MessageKind
from .objective import ObjectiveConfig
from .planner import PlanDistribution, PlannerConfig, plan_round
from .scenario import Scenario
from .sensing import MeasurementGrid, VisibilityCache, sense
from .team import RobotSpec
from .world import GridSpec, GroundTruth, RobotPose, step


class ConfigInvalidError(Exception):
    """Episode configuration is inconsistent with its scenario."""


@dataclass(frozen=True)
class EpisodeConfig:
    scenario: Scenario
    objective: ObjectiveConfig
    planner: PlannerConfig
    bus: BusConfig
    max_ticks: int
    replan_interval: int = 1
    seed: int = 0
    measurement_interval: int = 1
    target_cells: tuple[tuple[int, int], ...] | None = None

    def __post_init__(self) -> None:
        if self.max_ticks < 1:
            raise ConfigInvalidError("max_ticks must be >= 1")
        if not 1 <= self.replan_interval <= self.planner.horizon:
            raise ConfigInvalidError("replan_interval must lie in [1, planner horizon]")
        if self.measurement_interval < 1:
            raise ConfigInvalidError("measurement_interval must be >= 1")

    @classmethod
    def from_scenario(cls, scenario: Scenario, **overrides) -> "EpisodeConfig":
        """Episode settings defaulted from the scenario's own sections."""
        base = dict(
            scenario=scenario,
            objective=scenario.objective,
            planner=scenario.planner,
            bus=scenario.bus,
            max_ticks=scenario.max_ticks,
            replan_interval=scenario.replan_interval,
            seed=scenario.seed,
            measurement_interval=scenario.measurement_interval,
            target_cells=scenario.target_cells,
        )
        base.update(overrides)
        return cls(**base)


@dataclass
class EpisodeMetrics:
    scenario: str
    mode: str
    seed: int
    n_targets: int
    ticks: int
    confirmed: int
    fraction_confirmed: float
    total_distance: float
    reward_per_distance: float
    distance_by_robot: dict[int, float]
    confirmed_per_tick: list[int]
    timeline: list[list[float]]
    robot_ids: list[int]
    messages_sent: int
    messages_delivered: int
    messages_dropped: int

    def timeline_header(self) -> list[str]:
        cols = ["tick", "confirmed"]
        for rid in self.robot_ids:
            cols += [f"robot{rid}_x", f"robot{rid}_y", f"robot{rid}_dist"]
        return cols

    def write_timeline_csv(self, target: str | Path | TextIO) -> None:
        _write_csv(target, self.timeline_header(), self.timeline)

    def summary_header(self) -> list[str]:
        return [
            "scenario",
            "mode",
            "seed",
            "n_targets",
            "ticks",
            "confirmed",
            "fraction_confirmed",
            "total_distance",
            "reward_per_distance",
            "messages_sent",
            "messages_delivered",
            "messages_dropped",
        ]

    def summary_row(self) -> list:
        return [
            self.scenario,
            self.mode,
            self.seed,
            self.n_targets,
            self.ticks,
            self.confirmed,
            self.fraction_confirmed,
            self.total_distance,
            self.reward_per_distance,
            self.messages_sent,
            self.messages_delivered,
            self.messages_dropped,
        ]

    def write_summary_csv(self, target: str | Path | TextIO) -> None:
        _write_csv(target, self.summary_header(), [self.summary_row()])


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def _write_csv(target: str | Path | TextIO, header: Sequence[str], rows) -> None:
    def emit(f: TextIO) -> None:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(_fmt(v) for v in row) + "\n")

    if isinstance(target, (str, Path)):
        with open(target, "w", newline="") as f:
            emit(f)
    else:
        emit(target)


def _stream(*key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(tuple(int(k) for k in key))))


def _without_confirmed(meas: MeasurementGrid, confirmed: set[tuple[int, int]]) -> MeasurementGrid:
    if not confirmed or len(meas) == 0:
        return meas
    keep = np.array(
        [(int(i), int(j)) not in confirmed for i, j in meas.cells],
        dtype=bool,
    )
    if keep.all():
        return meas
    return MeasurementGrid(meas.cells[keep], meas.values[keep])


def _pin_zero(belief: OccupancyBelief, cells: set[tuple[int, int]]) -> OccupancyBelief:
    if not cells:
        return belief
    arr = np.array(sorted(cells), dtype=np.int64)
    return belief.with_cells(arr, np.zeros(len(arr)))


def confirm_targets(
    task_poses: Mapping[int, Sequence[RobotPose]],
    robots: Mapping[int, RobotSpec],
    ground_truth: GroundTruth,
    grid: GridSpec,
    confirmed: set[tuple[int, int]],
    rng: np.random.Generator | None = None,
    cache: VisibilityCache | None = None,
) -> set[tuple[int, int]]:
    """Return ``confirmed`` plus every target a task sensor sees from the
    given poses. Already-confirmed cells are never double counted; scout-only
    robots never confirm."""
    cache = cache if cache is not None else VisibilityCache(grid, ground_truth.obstacles)
    occupied = ground_truth.occupancy.ravel()
    out = set(confirmed)
    for rid in sorted(task_poses):
        spec = robots[rid]
        if not spec.is_task:
            continue
        sensor = spec.task_sensor
        for pose in task_poses[rid]:
            mask = cache.visible_cells(pose, sensor.range)
            if sensor.p_visible < 1.0:
                if rng is None:
                    raise ValueError("rng required: task sensor has p_visible < 1")
                mask = mask & (rng.random(mask.size) < sensor.p_visible)
            for flat in np.nonzero(mask & occupied)[0]:
                out.add(divmod(int(flat), grid.n_y))
    return out


class _Agent:
    __slots__ = ("spec", "pose", "belief", "confirmed", "distributions", "known_poses", "rng", "plan", "distance")

    def __init__(self, spec: RobotSpec, belief: OccupancyBelief, peers: Mapping[int, RobotSpec], seed: int):
        self.spec = spec
        self.pose = spec.start_pose
        self.belief = belief
        self.confirmed: set[tuple[int, int]] = set()
        self.distributions: dict[int, PlanDistribution] = {}
        self.known_poses = {rid: p.start_pose for rid, p in peers.items() if rid != spec.id}
        self.rng = _stream(seed, 11, spec.id)
        self.plan = None
        self.distance = 0.0

    def note_confirmed(self, cells: Sequence[tuple[int, int]]) -> None:
        fresh = set(cells) - self.confirmed
        if fresh:
            self.confirmed |= fresh
            self.belief = _pin_zero(self.belief, fresh)


def run_episode(
    config: EpisodeConfig,
    *,
    cache: VisibilityCache | None = None,
    planner_trace: TextIO | None = None,
    message_trace: TextIO | None = None,
) -> EpisodeMetrics:
    """Run one seeded episode and return its metrics.

    ``planner_trace`` and ``message_trace`` take writable text files and
    receive one JSON record per planning round / per message copy.
    """
    scenario = config.scenario
    grid, obstacles = scenario.grid, scenario.obstacles
    roster = scenario.roster()
    robot_ids = sorted(roster)

    if config.target_cells is not None:
        target_cells = tuple(config.target_cells)
    else:
        target_cells = scenario.place_targets(config.seed)
    gt = scenario.ground_truth(target_cells)
    n_targets = gt.n_targets

    cache = cache if cache is not None else VisibilityCache(grid, obstacles)
    trace_cb = None
    if message_trace is not None:
        trace_cb = lambda rec: message_trace.write(json.dumps(rec) + "\n")
    bus = MessageBus(config.bus, robot_ids, seed=config.seed, trace=trace_cb)

    prior = uniform_prior(grid, obstacles, scenario.prior)
    agents = {rid: _Agent(roster[rid], prior, roster, config.seed) for rid in robot_ids}

    confirmed_global: set[tuple[int, int]] = set()
    confirmed_per_tick: list[int] = []
    timeline: list[list[float]] = []
    ticks_run = 0

    if n_targets > 0:
        for tick in range(1, config.max_ticks + 1):
            ticks_run = tick
            bus.update_positions({rid: agents[rid].pose for rid in robot_ids})

            # 1. deliver and absorb
            inboxes = bus.deliver(tick)
            for rid in robot_ids:
                agent = agents[rid]
                for msg in inboxes[rid]:
                    if msg.kind is MessageKind.PLAN_DISTRIBUTION:
                        dist: PlanDistribution = msg.payload
                        prev = agent.distributions.get(dist.robot_id)
                        if prev is None or dist.timestamp >= prev.timestamp:
                            agent.distributions[dist.robot_id] = dist
                        agent.known_poses[dist.robot_id] = dist.start_pose
                    elif msg.kind is MessageKind.MEASUREMENT:
                        sensor = roster[msg.sender].scout_sensor
                        meas = _without_confirmed(msg.payload, agent.confirmed)
                        agent.belief = fuse(agent.belief, meas, sensor)
                    elif msg.kind is MessageKind.CONFIRMATION:
                        agent.note_confirmed(msg.payload)

            # 2. plan and publish intent
            for rid in robot_ids:
                agent = agents[rid]
                stats = {} if planner_trace is not None else None
                seq, dist = plan_round(
                    rid,
                    agent.pose,
                    roster,
                    agent.belief,
                    agent.distributions,
                    grid,
                    obstacles,
                    scenario.step_length,
                    config.planner,
                    config.objective,
                    agent.rng,
                    round_index=tick,
                    cache=cache,
                    known_poses=agent.known_poses,
                    stats=stats,
                )
                agent.plan = seq
                bus.publish(Message(rid, MessageKind.PLAN_DISTRIBUTION, dist, tick))
                if planner_trace is not None:
                    planner_trace.write(json.dumps({"tick": tick, "robot": rid, **stats}) + "\n")

            # 3. execute, sense, confirm
            for rid in robot_ids:
                agent = agents[rid]
                for k in range(config.replan_interval):
                    prim = agent.plan.primitives[k]
                    agent.pose = step(agent.pose, prim, grid, obstacles)
                    agent.distance += prim.step_length

                    if agent.spec.is_scout:
                        srng = _stream(config.seed, 13, rid, tick, k)
                        meas = sense(agent.pose, agent.spec.scout_sensor, gt, grid, srng, cache)
                        agent.belief = fuse(
                            agent.belief, _without_confirmed(meas, agent.confirmed), agent.spec.scout_sensor
                        )
                        if tick % config.measurement_interval == 0:
                            bus.publish(Message(rid, MessageKind.MEASUREMENT, meas, tick))

                    if agent.spec.is_task:
                        crng = _stream(config.seed, 17, rid, tick, k)
                        updated = confirm_targets(
                            {rid: [agent.pose]}, roster, gt, grid, confirmed_global, rng=crng, cache=cache
                        )
                        fresh = updated - confirmed_global
                        if fresh:
                            confirmed_global |= fresh
                            agent.note_confirmed(fresh)
                            bus.publish(
                                Message(rid, MessageKind.CONFIRMATION, tuple(sorted(fresh)), tick)
                            )

            # 4. record
            confirmed_per_tick.append(len(confirmed_global))
            row: list[float] = [tick, len(confirmed_global)]
            for rid in robot_ids:
                agent = agents[rid]
                row += [agent.pose.x, agent.pose.y, agent.distance]
            timeline.append(row)
            if len(confirmed_global) == n_targets:
                break

    total_distance = sum(agents[rid].distance for rid in robot_ids)
    confirmed = len(confirmed_global)
    fraction = 1.0 if n_targets == 0 else confirmed / n_targets
    if total_distance > 0:
        rpd = confirmed / total_distance
    else:
        rpd = 0.0 if confirmed == 0 else float("inf")
    return EpisodeMetrics(
        scenario=scenario.name,
        mode=config.objective.mode.value,
        seed=config.seed,
        n_targets=n_targets,
        ticks=ticks_run,
        confirmed=confirmed,
        fraction_confirmed=fraction,
        total_distance=total_distance,
        reward_per_distance=rpd,
        distance_by_robot={rid: agents[rid].distance for rid in robot_ids},
        confirmed_per_tick=confirmed_per_tick,
        timeline=timeline,
        robot_ids=robot_ids,
        messages_sent=bus.sent,
        messages_delivered=bus.delivered,
        messages_dropped=bus.dropped,
    )
