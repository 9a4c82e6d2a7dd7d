"""Grid geometry and the deterministic robot motion model.

Coordinates are continuous (x, y) in metres with the origin at the
south-west corner of the grid; x grows east, y grows north. Cell (i, j)
spans [i*cell_size, (i+1)*cell_size) x [j*cell_size, (j+1)*cell_size).
Points on a shared cell edge belong to the higher-index cell; points on
the outer boundary belong to the last cell, so every in-bounds point
maps to exactly one cell.

Robots are holonomic points. The action set is the eight compass
headings plus STAY, with diagonal displacements normalised so that every
non-STAY primitive moves the robot exactly ``step_length`` metres.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


class WorldError(Exception):
    """Base class for world-model errors."""


class OutOfBoundsError(WorldError):
    """A position or motion target lies outside the grid."""


class ObstacleCollisionError(WorldError):
    """A motion target lands inside an obstacle cell."""


class Heading(enum.IntEnum):
    """Compass headings in planner tie-break order (N first, STAY last)."""

    N = 0
    NE = 1
    E = 2
    SE = 3
    S = 4
    SW = 5
    W = 6
    NW = 7
    STAY = 8


_DIAG = math.sqrt(0.5)

_UNIT: dict[Heading, tuple[float, float]] = {
    Heading.N: (0.0, 1.0),
    Heading.NE: (_DIAG, _DIAG),
    Heading.E: (1.0, 0.0),
    Heading.SE: (_DIAG, -_DIAG),
    Heading.S: (0.0, -1.0),
    Heading.SW: (-_DIAG, -_DIAG),
    Heading.W: (-1.0, 0.0),
    Heading.NW: (-_DIAG, _DIAG),
    Heading.STAY: (0.0, 0.0),
}


@dataclass(frozen=True)
class GridSpec:
    """Rectangular grid: ``n_x`` columns by ``n_y`` rows of square cells."""

    n_x: int
    n_y: int
    cell_size: float = 1.0

    def __post_init__(self) -> None:
        if self.n_x < 1 or self.n_y < 1:
            raise ValueError(f"grid must have at least one cell, got {self.n_x}x{self.n_y}")
        if self.cell_size <= 0:
            raise ValueError(f"cell_size must be positive, got {self.cell_size}")

    @property
    def width(self) -> float:
        return self.n_x * self.cell_size

    @property
    def height(self) -> float:
        return self.n_y * self.cell_size

    @property
    def n_cells(self) -> int:
        return self.n_x * self.n_y

    def in_bounds(self, x: float, y: float) -> bool:
        return 0.0 <= x <= self.width and 0.0 <= y <= self.height

    def cell_index(self, x: float, y: float) -> tuple[int, int]:
        """Cell containing (x, y); outer-boundary points map to the last cell."""
        if not self.in_bounds(x, y):
            raise OutOfBoundsError(f"position ({x}, {y}) outside {self.width}x{self.height} grid")
        i = min(int(x / self.cell_size), self.n_x - 1)
        j = min(int(y / self.cell_size), self.n_y - 1)
        return i, j

    def cell_center(self, i: int, j: int) -> tuple[float, float]:
        return (i + 0.5) * self.cell_size, (j + 0.5) * self.cell_size


@dataclass(frozen=True)
class RobotPose:
    """Continuous planar position in metres."""

    x: float
    y: float

    def as_tuple(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass(frozen=True)
class MotionPrimitive:
    """One heading held for one time step.

    STAY primitives carry step_length 0 so that summing executed step
    lengths equals distance travelled.
    """

    heading: Heading
    step_length: float

    def __post_init__(self) -> None:
        if self.heading is not Heading.STAY and self.step_length <= 0:
            raise ValueError("non-STAY primitives need a positive step_length")
        if self.step_length < 0:
            raise ValueError("step_length must be non-negative")

    @classmethod
    def stay(cls) -> "MotionPrimitive":
        return cls(Heading.STAY, 0.0)

    def displacement(self) -> tuple[float, float]:
        ux, uy = _UNIT[self.heading]
        return self.step_length * ux, self.step_length * uy


def all_primitives(step_length: float) -> tuple[MotionPrimitive, ...]:
    """The full 9-action set: 8 normalised moves of ``step_length`` plus STAY."""
    moves = [MotionPrimitive(h, step_length) for h in Heading if h is not Heading.STAY]
    return tuple(moves) + (MotionPrimitive.stay(),)


@dataclass(frozen=True)
class ActionSequence:
    """One robot's planned primitives over the planning horizon."""

    robot_id: int
    primitives: tuple[MotionPrimitive, ...]

    def __len__(self) -> int:
        return len(self.primitives)

    def headings(self) -> tuple[Heading, ...]:
        return tuple(p.heading for p in self.primitives)

    def describe(self) -> str:
        return "-".join(p.heading.name for p in self.primitives) or "(empty)"


def stay_sequence(robot_id: int, horizon: int) -> ActionSequence:
    return ActionSequence(robot_id, tuple(MotionPrimitive.stay() for _ in range(horizon)))


def _frozen_bool(arr: np.ndarray, shape: tuple[int, int], name: str) -> np.ndarray:
    out = np.array(arr, dtype=bool, copy=True)
    if out.shape != shape:
        raise ValueError(f"{name} must have shape {shape}, got {out.shape}")
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class GroundTruth:
    """True target occupancy and the known obstacle map, shape (n_x, n_y)."""

    occupancy: np.ndarray
    obstacles: np.ndarray

    def __post_init__(self) -> None:
        occ = np.asarray(self.occupancy, dtype=bool)
        obs = np.asarray(self.obstacles, dtype=bool)
        if occ.shape != obs.shape or occ.ndim != 2:
            raise ValueError("occupancy and obstacles must share a 2-D shape")
        if np.any(occ & obs):
            raise ValueError("a cell cannot be both target and obstacle")
        object.__setattr__(self, "occupancy", _frozen_bool(occ, occ.shape, "occupancy"))
        object.__setattr__(self, "obstacles", _frozen_bool(obs, obs.shape, "obstacles"))

    @property
    def n_targets(self) -> int:
        return int(self.occupancy.sum())

    def target_cells(self) -> list[tuple[int, int]]:
        return [(int(i), int(j)) for i, j in zip(*np.nonzero(self.occupancy))]


def pose_valid(pose: RobotPose, grid: GridSpec, obstacles: np.ndarray) -> bool:
    if not grid.in_bounds(pose.x, pose.y):
        return False
    i, j = grid.cell_index(pose.x, pose.y)
    return not bool(obstacles[i, j])


def step(
    pose: RobotPose,
    action: MotionPrimitive,
    grid: GridSpec,
    obstacles: np.ndarray,
) -> RobotPose:
    """Apply one primitive; raises if the target pose is invalid.

    Only the resulting pose is validated, not the swept segment: robots
    are airborne points and cells are large relative to a step.
    """
    if action.heading is Heading.STAY:
        return pose
    dx, dy = action.displacement()
    nx, ny = pose.x + dx, pose.y + dy
    if not grid.in_bounds(nx, ny):
        raise OutOfBoundsError(
            f"{action.heading.name} from ({pose.x:.3f}, {pose.y:.3f}) leaves the grid"
        )
    i, j = grid.cell_index(nx, ny)
    if obstacles[i, j]:
        raise ObstacleCollisionError(
            f"{action.heading.name} from ({pose.x:.3f}, {pose.y:.3f}) hits obstacle cell ({i}, {j})"
        )
    return RobotPose(nx, ny)


def rollout_poses(
    start: RobotPose,
    seq: ActionSequence,
    grid: GridSpec,
    obstacles: np.ndarray,
) -> list[RobotPose]:
    """Poses after each primitive of ``seq`` applied from ``start``.

    Fails on the first invalid step; the raised error carries the
    offending primitive index as ``step_index``.
    """
    poses: list[RobotPose] = []
    pose = start
    for k, prim in enumerate(seq.primitives):
        try:
            pose = step(pose, prim, grid, obstacles)
        except WorldError as err:
            err.step_index = k  # type: ignore[attr-defined]
            raise
        poses.append(pose)
    return poses


def cell_of(position: RobotPose | tuple[float, float], grid: GridSpec) -> tuple[int, int]:
    """Cell index of a continuous position (see module docstring for edges)."""
    if isinstance(position, RobotPose):
        return grid.cell_index(position.x, position.y)
    return grid.cell_index(position[0], position[1])
