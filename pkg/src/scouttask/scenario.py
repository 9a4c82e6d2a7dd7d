"""Scenario descriptions and their on-disk YAML format.

A scenario is the immutable problem statement: grid, obstacle map,
targets (explicit cells, or a count placed randomly per run), the robot
roster with sensors and start poses, and the default episode, planner,
objective, and bus settings. The YAML loader is strict: unknown keys are
rejected so typos fail loudly.

File format (all sections except ``grid``, ``robots``, ``step_length``
and ``horizon`` are optional)::

    name: two-robot
    grid: {n_x: 20, n_y: 20, cell_size: 1.0}
    obstacles:
      rects: [[4, 8, 7, 11]]      # [i0, j0, i1, j1], inclusive cell indices
      cells: [[0, 5]]
    targets: {count: 3}           # or cells: [[3, 4], [10, 2], ...]
    prior: 0.5
    step_length: 2.5
    horizon: 5
    max_ticks: 30
    replan_interval: 1
    seed: 0
    measurement_interval: 1
    robots:
      - id: 0
        start: [2.5, 2.5]
        scout_sensor: {range: 8.0, p_visible: 1.0,
                       true_positive_rate: 0.9, false_positive_rate: 0.05}
        task_sensor: {range: 2.0}
    objective: {mode: mi_ucb, delta: 0.1}
    planner: {iterations: 300, exploration: 1.4142135623730951,
              distribution_size: 5, temperature: null, rollout_policy: uniform,
              horizon: 5}
    bus:
      delay: 0
      adjacency: full             # or {range: 12.0} or {graph: {0: [1], 1: [0]}}
      drop: {confirmation: 0.0, measurement: 0.0, plan_distribution: 0.0}
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import yaml

from .comms import BusConfig, MessageKind
from .objective import Mode, ObjectiveConfig
from .planner import PlannerConfig
from .sensing import SensorSpec
from .team import RobotSpec, roster_by_id
from .world import GridSpec, GroundTruth, RobotPose, pose_valid


class ScenarioError(Exception):
    """Malformed scenario or trial description."""


@dataclass(frozen=True)
class Scenario:
    """Immutable world description plus default run settings."""

    name: str
    grid: GridSpec
    obstacles: np.ndarray
    robots: tuple[RobotSpec, ...]
    step_length: float
    horizon: int
    prior: float = 0.5
    target_cells: tuple[tuple[int, int], ...] | None = None
    target_count: int | None = None
    max_ticks: int = 40
    replan_interval: int = 1
    seed: int = 0
    measurement_interval: int = 1
    objective: ObjectiveConfig = field(default_factory=ObjectiveConfig)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    bus: BusConfig = field(default_factory=BusConfig)

    def __post_init__(self) -> None:
        obstacles = np.array(self.obstacles, dtype=bool, copy=True)
        if obstacles.shape != (self.grid.n_x, self.grid.n_y):
            raise ScenarioError(
                f"obstacle map shape {obstacles.shape} does not match grid "
                f"({self.grid.n_x}, {self.grid.n_y})"
            )
        obstacles.setflags(write=False)
        object.__setattr__(self, "obstacles", obstacles)

        if self.step_length <= 0:
            raise ScenarioError("step_length must be positive")
        if self.horizon < 1:
            raise ScenarioError("horizon must be >= 1")
        if not 0.0 <= self.prior <= 1.0:
            raise ScenarioError("prior must lie in [0, 1]")
        if self.max_ticks < 1:
            raise ScenarioError("max_ticks must be >= 1")
        if not 1 <= self.replan_interval <= self.horizon:
            raise ScenarioError("replan_interval must lie in [1, horizon]")
        if self.measurement_interval < 1:
            raise ScenarioError("measurement_interval must be >= 1")

        roster_by_id(self.robots)  # raises on duplicate ids
        for robot in self.robots:
            if not pose_valid(robot.start_pose, self.grid, obstacles):
                raise ScenarioError(f"robot {robot.id} start pose is out of bounds or inside an obstacle")

        if self.target_cells is not None and self.target_count is not None:
            raise ScenarioError("give explicit target cells or a count, not both")
        if self.target_cells is None and self.target_count is None:
            raise ScenarioError("a scenario needs target cells or a target count")
        if self.target_count is not None and self.target_count < 0:
            raise ScenarioError("target count must be >= 0")
        if self.target_cells is not None:
            cells = tuple((int(i), int(j)) for i, j in self.target_cells)
            for i, j in cells:
                if not (0 <= i < self.grid.n_x and 0 <= j < self.grid.n_y):
                    raise ScenarioError(f"target cell ({i}, {j}) outside the grid")
                if obstacles[i, j]:
                    raise ScenarioError(f"target cell ({i}, {j}) is an obstacle")
            if len(set(cells)) != len(cells):
                raise ScenarioError("duplicate target cells")
            object.__setattr__(self, "target_cells", cells)

    @property
    def n_targets(self) -> int:
        if self.target_cells is not None:
            return len(self.target_cells)
        return int(self.target_count)

    def roster(self) -> dict[int, RobotSpec]:
        return roster_by_id(self.robots)

    def free_cells(self) -> list[tuple[int, int]]:
        ii, jj = np.nonzero(~self.obstacles)
        return [(int(i), int(j)) for i, j in zip(ii, jj)]

    def place_targets(self, seed: int) -> tuple[tuple[int, int], ...]:
        """Uniform random target cells over the free cells (no repeats)."""
        if self.target_cells is not None:
            return self.target_cells
        free = self.free_cells()
        if self.target_count > len(free):
            raise ScenarioError("more targets than free cells")
        rng = np.random.default_rng(np.random.SeedSequence((int(seed), 202)))
        picks = rng.choice(len(free), size=self.target_count, replace=False)
        return tuple(free[int(k)] for k in sorted(picks))

    def ground_truth(self, target_cells: Sequence[tuple[int, int]] | None = None) -> GroundTruth:
        cells = target_cells if target_cells is not None else self.target_cells
        if cells is None:
            raise ScenarioError("random-target scenario needs explicit cells for ground truth")
        occupancy = np.zeros((self.grid.n_x, self.grid.n_y), dtype=bool)
        for i, j in cells:
            occupancy[i, j] = True
        return GroundTruth(occupancy, self.obstacles)


def with_overrides(scenario: Scenario, **changes) -> Scenario:
    """dataclasses.replace with Scenario revalidation."""
    return dataclasses.replace(scenario, **changes)


# ---------------------------------------------------------------------------
# YAML parsing
# ---------------------------------------------------------------------------


def _check_keys(mapping: Mapping, allowed: Iterable[str], context: str) -> None:
    if not isinstance(mapping, Mapping):
        raise ScenarioError(f"{context} must be a mapping, got {type(mapping).__name__}")
    unknown = set(mapping) - set(allowed)
    if unknown:
        raise ScenarioError(f"unknown key(s) in {context}: {', '.join(sorted(map(str, unknown)))}")


def _sensor_from_dict(data: Mapping, context: str) -> SensorSpec:
    _check_keys(
        data,
        ("range", "p_visible", "true_positive_rate", "false_positive_rate", "allow_uninformative"),
        context,
    )
    if "range" not in data:
        raise ScenarioError(f"{context} needs a range")
    try:
        return SensorSpec(**{str(k): v for k, v in data.items()})
    except ValueError as err:
        raise ScenarioError(f"{context}: {err}") from err


def _robot_from_dict(data: Mapping) -> RobotSpec:
    _check_keys(data, ("id", "start", "scout_sensor", "task_sensor"), "robot entry")
    for required in ("id", "start"):
        if required not in data:
            raise ScenarioError(f"robot entry needs {required}")
    start = data["start"]
    if not isinstance(start, Sequence) or len(start) != 2:
        raise ScenarioError("robot start must be [x, y]")
    rid = int(data["id"])
    scout = data.get("scout_sensor")
    task = data.get("task_sensor")
    try:
        return RobotSpec(
            id=rid,
            start_pose=RobotPose(float(start[0]), float(start[1])),
            scout_sensor=_sensor_from_dict(scout, f"robot {rid} scout_sensor") if scout else None,
            task_sensor=_sensor_from_dict(task, f"robot {rid} task_sensor") if task else None,
        )
    except ValueError as err:
        raise ScenarioError(str(err)) from err


def _obstacles_from_dict(data: Mapping | None, grid: GridSpec) -> np.ndarray:
    obstacles = np.zeros((grid.n_x, grid.n_y), dtype=bool)
    if data is None:
        return obstacles
    _check_keys(data, ("rects", "cells"), "obstacles")
    for rect in data.get("rects") or ():
        if len(rect) != 4:
            raise ScenarioError(f"obstacle rect must be [i0, j0, i1, j1], got {rect}")
        i0, j0, i1, j1 = (int(v) for v in rect)
        if not (0 <= i0 <= i1 < grid.n_x and 0 <= j0 <= j1 < grid.n_y):
            raise ScenarioError(f"obstacle rect {rect} outside the grid")
        obstacles[i0 : i1 + 1, j0 : j1 + 1] = True
    for cell in data.get("cells") or ():
        if len(cell) != 2:
            raise ScenarioError(f"obstacle cell must be [i, j], got {cell}")
        i, j = int(cell[0]), int(cell[1])
        if not (0 <= i < grid.n_x and 0 <= j < grid.n_y):
            raise ScenarioError(f"obstacle cell {cell} outside the grid")
        obstacles[i, j] = True
    return obstacles


_DROP_KEYS = {
    "plan_distribution": MessageKind.PLAN_DISTRIBUTION,
    "measurement": MessageKind.MEASUREMENT,
    "confirmation": MessageKind.CONFIRMATION,
}


def _bus_from_dict(data: Mapping | None) -> BusConfig:
    if data is None:
        return BusConfig()
    _check_keys(data, ("delay", "adjacency", "drop"), "bus")
    drop: dict[MessageKind, float] = {}
    for name, p in (data.get("drop") or {}).items():
        if name not in _DROP_KEYS:
            raise ScenarioError(f"unknown drop key {name!r}; expected one of {sorted(_DROP_KEYS)}")
        drop[_DROP_KEYS[name]] = float(p)
    adjacency = data.get("adjacency", "full")
    if isinstance(adjacency, Mapping):
        _check_keys(adjacency, ("range", "graph"), "bus adjacency")
        if "range" in adjacency and "graph" in adjacency:
            raise ScenarioError("bus adjacency takes range or graph, not both")
        if "range" in adjacency:
            adjacency = ("range", float(adjacency["range"]))
        else:
            adjacency = {int(k): [int(v) for v in vs] for k, vs in adjacency["graph"].items()}
    try:
        return BusConfig(delay=int(data.get("delay", 0)), drop=drop, adjacency=adjacency)
    except ValueError as err:
        raise ScenarioError(f"bus: {err}") from err


def _objective_from_dict(data: Mapping | None) -> ObjectiveConfig:
    if data is None:
        return ObjectiveConfig()
    _check_keys(data, ("mode", "delta"), "objective")
    try:
        mode = Mode(data.get("mode", Mode.MI_UCB.value))
    except ValueError as err:
        raise ScenarioError(f"unknown objective mode {data.get('mode')!r}") from err
    try:
        return ObjectiveConfig(delta=float(data.get("delta", 0.1)), mode=mode)
    except ValueError as err:
        raise ScenarioError(f"objective: {err}") from err


def _planner_from_dict(data: Mapping | None, horizon: int) -> PlannerConfig:
    if data is None:
        return PlannerConfig(horizon=horizon)
    _check_keys(
        data,
        ("iterations", "exploration", "distribution_size", "temperature", "rollout_policy", "horizon"),
        "planner",
    )
    kwargs = {str(k): v for k, v in data.items()}
    kwargs.setdefault("horizon", horizon)
    try:
        return PlannerConfig(**kwargs)
    except (TypeError, ValueError) as err:
        raise ScenarioError(f"planner: {err}") from err


_TOP_KEYS = (
    "name",
    "grid",
    "obstacles",
    "targets",
    "prior",
    "step_length",
    "horizon",
    "max_ticks",
    "replan_interval",
    "seed",
    "measurement_interval",
    "robots",
    "objective",
    "planner",
    "bus",
)


def scenario_from_dict(data: Mapping, *, name: str | None = None) -> Scenario:
    _check_keys(data, _TOP_KEYS, "scenario")
    for required in ("grid", "robots", "step_length", "horizon"):
        if required not in data:
            raise ScenarioError(f"scenario needs {required}")

    grid_data = data["grid"]
    _check_keys(grid_data, ("n_x", "n_y", "cell_size"), "grid")
    try:
        grid = GridSpec(
            n_x=int(grid_data["n_x"]),
            n_y=int(grid_data["n_y"]),
            cell_size=float(grid_data.get("cell_size", 1.0)),
        )
    except (KeyError, ValueError) as err:
        raise ScenarioError(f"grid: {err}") from err

    obstacles = _obstacles_from_dict(data.get("obstacles"), grid)

    target_cells = None
    target_count = None
    targets = data.get("targets")
    if targets is not None:
        _check_keys(targets, ("cells", "count"), "targets")
        if "cells" in targets and "count" in targets:
            raise ScenarioError("targets take cells or count, not both")
        if "cells" in targets:
            target_cells = tuple((int(i), int(j)) for i, j in targets["cells"])
        elif "count" in targets:
            target_count = int(targets["count"])
    if target_cells is None and target_count is None:
        raise ScenarioError("scenario needs a targets section with cells or count")

    robots = tuple(_robot_from_dict(r) for r in data["robots"])
    horizon = int(data["horizon"])

    return Scenario(
        name=str(data.get("name", name or "scenario")),
        grid=grid,
        obstacles=obstacles,
        robots=robots,
        step_length=float(data["step_length"]),
        horizon=horizon,
        prior=float(data.get("prior", 0.5)),
        target_cells=target_cells,
        target_count=target_count,
        max_ticks=int(data.get("max_ticks", 40)),
        replan_interval=int(data.get("replan_interval", 1)),
        seed=int(data.get("seed", 0)),
        measurement_interval=int(data.get("measurement_interval", 1)),
        objective=_objective_from_dict(data.get("objective")),
        planner=_planner_from_dict(data.get("planner"), horizon),
        bus=_bus_from_dict(data.get("bus")),
    )


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as err:
        raise ScenarioError(f"{path}: invalid YAML: {err}") from err
    if not isinstance(data, Mapping):
        raise ScenarioError(f"{path}: scenario file must hold a mapping")
    return scenario_from_dict(data, name=path.stem)


# ---------------------------------------------------------------------------
# Built-in scenarios
# ---------------------------------------------------------------------------

_DEFAULT_SCOUT = SensorSpec(range=8.0, p_visible=1.0, true_positive_rate=0.9, false_positive_rate=0.05)
_DEFAULT_TASK = SensorSpec(range=2.0, p_visible=1.0, true_positive_rate=1.0, false_positive_rate=0.0)


def _default_obstacles(grid: GridSpec) -> np.ndarray:
    obstacles = np.zeros((grid.n_x, grid.n_y), dtype=bool)
    obstacles[4:8, 8:12] = True
    obstacles[12:16, 4:7] = True
    obstacles[10:13, 14:17] = True
    return obstacles


def two_robot_scenario(
    *,
    mode: Mode = Mode.MI_UCB,
    delta: float = 0.1,
    iterations: int = 300,
    max_ticks: int = 30,
    target_count: int = 3,
    drop_confirmation: float = 0.0,
) -> Scenario:
    """Default head-to-head scenario: one scout-and-task robot plus one
    task-only robot on a 20x20 grid with three obstacle blocks.

    The layout approximates the kind of cluttered court used in the
    surveillance comparison; exact dimensions are a documented choice,
    not a reproduction.
    """
    grid = GridSpec(20, 20, 1.0)
    robots = (
        RobotSpec(id=0, start_pose=RobotPose(2.5, 2.5), scout_sensor=_DEFAULT_SCOUT, task_sensor=_DEFAULT_TASK),
        RobotSpec(id=1, start_pose=RobotPose(17.5, 2.5), task_sensor=_DEFAULT_TASK),
    )
    drop = {MessageKind.CONFIRMATION: drop_confirmation} if drop_confirmation else {}
    return Scenario(
        name="two-robot",
        grid=grid,
        obstacles=_default_obstacles(grid),
        robots=robots,
        step_length=2.5,
        horizon=5,
        prior=0.5,
        target_count=target_count,
        max_ticks=max_ticks,
        objective=ObjectiveConfig(delta=delta, mode=mode),
        planner=PlannerConfig(horizon=5, iterations=iterations),
        bus=BusConfig(drop=drop),
    )


def four_robot_scenario(
    n_scout_and_task: int = 2,
    *,
    mode: Mode = Mode.MI_UCB,
    delta: float = 0.1,
    iterations: int = 300,
    max_ticks: int = 30,
    target_count: int = 5,
) -> Scenario:
    """Composition-sweep scenario: four task robots, the first
    ``n_scout_and_task`` of which also carry the long-range scout sensor."""
    if not 1 <= n_scout_and_task <= 4:
        raise ScenarioError("n_scout_and_task must lie in [1, 4]")
    grid = GridSpec(20, 20, 1.0)
    starts = (RobotPose(2.5, 2.5), RobotPose(17.5, 2.5), RobotPose(2.5, 17.5), RobotPose(17.5, 17.5))
    robots = tuple(
        RobotSpec(
            id=k,
            start_pose=starts[k],
            scout_sensor=_DEFAULT_SCOUT if k < n_scout_and_task else None,
            task_sensor=_DEFAULT_TASK,
        )
        for k in range(4)
    )
    return Scenario(
        name=f"four-robot-{n_scout_and_task}-scout",
        grid=grid,
        obstacles=_default_obstacles(grid),
        robots=robots,
        step_length=2.5,
        horizon=5,
        prior=0.5,
        target_count=target_count,
        max_ticks=max_ticks,
        objective=ObjectiveConfig(delta=delta, mode=mode),
        planner=PlannerConfig(horizon=5, iterations=iterations),
        bus=BusConfig(),
    )
