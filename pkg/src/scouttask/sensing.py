"""Visibility model, line of sight, and measurement generation.

A sensor sees a cell when the cell centre is within range of the robot
and the straight segment from the robot to the centre crosses no
obstacle cell. Seen cells are then visible with probability
``p_visible`` (an independent Bernoulli draw per cell and time step),
and visible cells report target presence through a confusion matrix
(true/false positive rates).

Obstacle cells are never visible: they cannot hold targets and the
occupancy belief pins them to zero, so measuring them carries no
information.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .world import GridSpec, GroundTruth, OutOfBoundsError, RobotPose

_ZERO_LEN = 1e-12


class SensingError(Exception):
    """Base class for sensing-model errors."""


@dataclass(frozen=True)
class SensorSpec:
    """Range-limited Bernoulli visibility plus a confusion matrix.

    ``true_positive_rate`` is P(read occupied | cell occupied, visible),
    ``false_positive_rate`` is P(read occupied | cell empty, visible).
    An informative sensor has TPR >= FPR; set ``allow_uninformative`` to
    build deliberately useless sensors for experiments.
    """

    range: float
    p_visible: float = 1.0
    true_positive_rate: float = 1.0
    false_positive_rate: float = 0.0
    allow_uninformative: bool = False

    def __post_init__(self) -> None:
        if self.range <= 0:
            raise ValueError(f"sensor range must be positive, got {self.range}")
        for name in ("p_visible", "true_positive_rate", "false_positive_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if not self.allow_uninformative and self.true_positive_rate < self.false_positive_rate:
            raise ValueError(
                "true_positive_rate < false_positive_rate; pass allow_uninformative=True "
                "if this sensor is intentional"
            )

    @property
    def tpr(self) -> float:
        return self.true_positive_rate

    @property
    def fpr(self) -> float:
        return self.false_positive_rate


@dataclass(frozen=True)
class VisibilityMask:
    """Per-cell visibility probabilities, shape (n_x, n_y)."""

    probs: np.ndarray

    def __post_init__(self) -> None:
        probs = np.array(self.probs, dtype=float, copy=True)
        if np.any(probs < 0) or np.any(probs > 1):
            raise ValueError("visibility probabilities must lie in [0, 1]")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)


@dataclass(frozen=True)
class MeasurementGrid:
    """Readings for the cells a sensor actually saw this step.

    ``cells`` is an (m, 2) int array of (i, j) indices and ``values`` the
    matching boolean occupied/empty readings.
    """

    cells: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        cells = np.array(self.cells, dtype=np.int64, copy=True).reshape(-1, 2)
        values = np.array(self.values, dtype=bool, copy=True).reshape(-1)
        if cells.shape[0] != values.shape[0]:
            raise ValueError("cells and values must have matching length")
        cells.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return int(self.values.shape[0])

    @classmethod
    def empty(cls) -> "MeasurementGrid":
        return cls(np.empty((0, 2), dtype=np.int64), np.empty(0, dtype=bool))


def _xy(p: RobotPose | tuple[float, float]) -> tuple[float, float]:
    if isinstance(p, RobotPose):
        return p.x, p.y
    return float(p[0]), float(p[1])


def _clamped_cell(grid: GridSpec, x: float, y: float) -> tuple[int, int]:
    # Midpoints of sub-segments can drift a few ulp outside the grid.
    x = min(max(x, 0.0), grid.width)
    y = min(max(y, 0.0), grid.height)
    return grid.cell_index(x, y)


def line_of_sight(
    a: RobotPose | tuple[float, float],
    b: RobotPose | tuple[float, float],
    obstacles: np.ndarray,
    grid: GridSpec,
) -> bool:
    """True iff no obstacle cell is strictly crossed by the open segment a-b.

    The segment is split at every grid line it crosses; each sub-segment of
    positive length is attributed to the cell containing its midpoint. The
    two endpoint cells never block. Corner touches (zero-length
    sub-segments) do not block either.
    """
    ax, ay = _xy(a)
    bx, by = _xy(b)
    for x, y in ((ax, ay), (bx, by)):
        if not grid.in_bounds(x, y):
            raise OutOfBoundsError(f"line_of_sight endpoint ({x}, {y}) outside grid")
    if ax == bx and ay == by:
        return True

    dx, dy = bx - ax, by - ay
    cs = grid.cell_size
    ts = [0.0, 1.0]
    if dx != 0.0:
        lo, hi = (ax, bx) if ax < bx else (bx, ax)
        for k in range(int(np.floor(lo / cs)) + 1, int(np.ceil(hi / cs))):
            t = (k * cs - ax) / dx
            if 0.0 < t < 1.0:
                ts.append(t)
    if dy != 0.0:
        lo, hi = (ay, by) if ay < by else (by, ay)
        for k in range(int(np.floor(lo / cs)) + 1, int(np.ceil(hi / cs))):
            t = (k * cs - ay) / dy
            if 0.0 < t < 1.0:
                ts.append(t)
    ts.sort()

    skip = {grid.cell_index(ax, ay), grid.cell_index(bx, by)}
    for t0, t1 in zip(ts, ts[1:]):
        if t1 - t0 <= _ZERO_LEN:
            continue
        tm = 0.5 * (t0 + t1)
        cell = _clamped_cell(grid, ax + tm * dx, ay + tm * dy)
        if cell in skip:
            continue
        if obstacles[cell]:
            return False
    return True


class VisibilityCache:
    """Memoised per-pose visible-cell masks over a fixed grid and obstacle map.

    Masks are flat boolean arrays in C order over (n_x, n_y). Line of
    sight is only evaluated for cells whose sightline bounding box
    overlaps some obstacle cell; everything else in range is visible.
    """

    def __init__(self, grid: GridSpec, obstacles: np.ndarray):
        self.grid = grid
        obstacles = np.asarray(obstacles, dtype=bool)
        if obstacles.shape != (grid.n_x, grid.n_y):
            raise ValueError("obstacle map shape does not match grid")
        self.obstacles = obstacles
        self._obstacle_flat = obstacles.ravel()
        ii, jj = np.meshgrid(np.arange(grid.n_x), np.arange(grid.n_y), indexing="ij")
        self._cx = ((ii + 0.5) * grid.cell_size).ravel()
        self._cy = ((jj + 0.5) * grid.cell_size).ravel()
        oi, oj = np.nonzero(obstacles)
        cs = grid.cell_size
        self._boxes = np.stack([oi * cs, (oi + 1) * cs, oj * cs, (oj + 1) * cs], axis=1)
        self._masks: dict[tuple[float, float, float], np.ndarray] = {}
        self.hits = 0
        self.misses = 0

    def visible_cells(self, pose: RobotPose, sensor_range: float) -> np.ndarray:
        """Flat boolean mask of cells with clear line of sight within range."""
        key = (round(pose.x, 9), round(pose.y, 9), round(sensor_range, 9))
        mask = self._masks.get(key)
        if mask is not None:
            self.hits += 1
            return mask
        self.misses += 1
        mask = self._compute(pose, sensor_range)
        self._masks[key] = mask
        return mask

    def _compute(self, pose: RobotPose, sensor_range: float) -> np.ndarray:
        px, py = pose.x, pose.y
        d2 = (self._cx - px) ** 2 + (self._cy - py) ** 2
        vis = (d2 <= sensor_range * sensor_range) & ~self._obstacle_flat
        if self._boxes.shape[0] and vis.any():
            lo_x = np.minimum(self._cx, px)
            hi_x = np.maximum(self._cx, px)
            lo_y = np.minimum(self._cy, py)
            hi_y = np.maximum(self._cy, py)
            near = np.zeros(vis.shape, dtype=bool)
            for x0, x1, y0, y1 in self._boxes:
                near |= (lo_x <= x1) & (hi_x >= x0) & (lo_y <= y1) & (hi_y >= y0)
            for flat in np.nonzero(vis & near)[0]:
                i, j = divmod(int(flat), self.grid.n_y)
                if not line_of_sight((px, py), self.grid.cell_center(i, j), self.obstacles, self.grid):
                    vis[flat] = False
        vis.setflags(write=False)
        return vis


def coverage_counts(
    poses: Sequence[RobotPose],
    sensor_range: float,
    cache: VisibilityCache,
) -> np.ndarray:
    """Number of poses from which each cell is in clear view (flat int array)."""
    counts = np.zeros(cache.grid.n_cells, dtype=np.int32)
    for pose in poses:
        counts += cache.visible_cells(pose, sensor_range)
    return counts


def visibility_single(
    pose: RobotPose,
    sensor: SensorSpec,
    grid: GridSpec,
    obstacles: np.ndarray,
    cache: VisibilityCache | None = None,
) -> VisibilityMask:
    """Per-cell visibility probability from one pose."""
    cache = cache if cache is not None else VisibilityCache(grid, obstacles)
    probs = sensor.p_visible * cache.visible_cells(pose, sensor.range).astype(float)
    return VisibilityMask(probs.reshape(grid.n_x, grid.n_y))


def visibility_trajectory(
    groups: Sequence[tuple[Sequence[RobotPose], SensorSpec]],
    grid: GridSpec,
    obstacles: np.ndarray,
    cache: VisibilityCache | None = None,
) -> VisibilityMask:
    """Combined visibility over several (pose set, sensor) groups.

    Per-step visibility draws are independent, so the trajectory-level
    probability is the complement of the product of misses:
    P(v) = 1 - prod(1 - p_single). With deterministic sensors this is a
    boolean OR over the per-pose visible sets.
    """
    cache = cache if cache is not None else VisibilityCache(grid, obstacles)
    miss = np.ones(grid.n_cells)
    for poses, sensor in groups:
        counts = coverage_counts(poses, sensor.range, cache)
        miss *= (1.0 - sensor.p_visible) ** counts
    return VisibilityMask((1.0 - miss).reshape(grid.n_x, grid.n_y))


def sense(
    pose: RobotPose,
    sensor: SensorSpec,
    ground_truth: GroundTruth,
    grid: GridSpec,
    rng: np.random.Generator,
    cache: VisibilityCache | None = None,
) -> MeasurementGrid:
    """Draw one measurement: visibility per cell, then a confusion-matrix reading."""
    cache = cache if cache is not None else VisibilityCache(grid, ground_truth.obstacles)
    flat = np.nonzero(cache.visible_cells(pose, sensor.range))[0]
    if sensor.p_visible < 1.0:
        flat = flat[rng.random(flat.size) < sensor.p_visible]
    occupied = ground_truth.occupancy.ravel()[flat]
    p_read_occ = np.where(occupied, sensor.true_positive_rate, sensor.false_positive_rate)
    values = rng.random(flat.size) < p_read_occ
    cells = np.stack(np.unravel_index(flat, (grid.n_x, grid.n_y)), axis=1)
    return MeasurementGrid(cells, values)
