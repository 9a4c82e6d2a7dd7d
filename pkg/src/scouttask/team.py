"""Robot roster: roles, sensors, and start poses."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

from .sensing import SensorSpec
from .world import RobotPose


@dataclass(frozen=True)
class RobotSpec:
    """One robot's roles and equipment.

    A robot is a scout, a task robot, or both; each active role carries
    its own sensor. Scout sensors feed the occupancy belief, task
    sensors confirm targets.
    """

    id: int
    start_pose: RobotPose
    scout_sensor: SensorSpec | None = None
    task_sensor: SensorSpec | None = None

    def __post_init__(self) -> None:
        if self.scout_sensor is None and self.task_sensor is None:
            raise ValueError(f"robot {self.id} must be a scout, a task robot, or both")

    @property
    def is_scout(self) -> bool:
        return self.scout_sensor is not None

    @property
    def is_task(self) -> bool:
        return self.task_sensor is not None


def roster_by_id(robots: Iterable[RobotSpec]) -> dict[int, RobotSpec]:
    out: dict[int, RobotSpec] = {}
    for r in robots:
        if r.id in out:
            raise ValueError(f"duplicate robot id {r.id}")
        out[r.id] = r
    return out


def scouts(robots: Mapping[int, RobotSpec]) -> list[RobotSpec]:
    return [r for r in robots.values() if r.is_scout]


def task_robots(robots: Mapping[int, RobotSpec]) -> list[RobotSpec]:
    return [r for r in robots.values() if r.is_task]
