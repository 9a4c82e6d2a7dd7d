"""Factorised Bernoulli occupancy belief and information-gain computations.

The belief over the target map factorises per cell, so fusion and
information quantities are closed-form per-cell expressions. Entropy and
information gain are reported in bits; the planning objective converts
to nats where it combines information with the reward generating
function.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import xlogy

from .sensing import MeasurementGrid, SensorSpec, VisibilityCache, coverage_counts
from .world import GridSpec, RobotPose

_LN2 = math.log(2.0)

#: Fusion clamp: priors are pulled into [FUSE_EPS, 1 - FUSE_EPS] before the
#: Bayes update so absorbing 0/1 states cannot zero the normaliser.
FUSE_EPS = 1e-6


class DegenerateLikelihoodError(Exception):
    """The observed reading has zero probability under both hypotheses."""


@dataclass(frozen=True)
class OccupancyBelief:
    """Per-cell P(target present), shape (n_x, n_y); obstacle cells stay 0."""

    probs: np.ndarray

    def __post_init__(self) -> None:
        probs = np.array(self.probs, dtype=float, copy=True)
        if probs.ndim != 2:
            raise ValueError("belief must be a 2-D probability matrix")
        if np.any(probs < 0.0) or np.any(probs > 1.0):
            raise ValueError("belief probabilities must lie in [0, 1]")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    def with_cells(self, cells: np.ndarray, values: np.ndarray) -> "OccupancyBelief":
        out = np.array(self.probs, copy=True)
        out[cells[:, 0], cells[:, 1]] = values
        return OccupancyBelief(out)


def uniform_prior(grid: GridSpec, obstacles: np.ndarray, p0: float) -> OccupancyBelief:
    """Uniform prior ``p0`` on free cells, 0 on obstacle cells."""
    if not 0.0 <= p0 <= 1.0:
        raise ValueError(f"prior probability must lie in [0, 1], got {p0}")
    probs = np.full((grid.n_x, grid.n_y), p0, dtype=float)
    probs[np.asarray(obstacles, dtype=bool)] = 0.0
    return OccupancyBelief(probs)


def fuse(belief: OccupancyBelief, measurement: MeasurementGrid, sensor: SensorSpec) -> OccupancyBelief:
    """Bayes update of every observed cell; unobserved cells are untouched.

    For a cell with (clamped) prior p, an occupied reading gives
    TPR*p / (TPR*p + FPR*(1-p)) and an empty reading
    (1-TPR)*p / ((1-TPR)*p + (1-FPR)*(1-p)).
    """
    if len(measurement) == 0:
        return belief
    probs = np.array(belief.probs, copy=True)
    i, j = measurement.cells[:, 0], measurement.cells[:, 1]
    p = np.clip(probs[i, j], FUSE_EPS, 1.0 - FUSE_EPS)
    occ = measurement.values
    like_occ = np.where(occ, sensor.tpr, 1.0 - sensor.tpr)
    like_emp = np.where(occ, sensor.fpr, 1.0 - sensor.fpr)
    denom = like_occ * p + like_emp * (1.0 - p)
    if np.any(denom == 0.0):
        raise DegenerateLikelihoodError(
            "a reading with zero likelihood under both hypotheses cannot be fused"
        )
    probs[i, j] = like_occ * p / denom
    return OccupancyBelief(probs)


def binary_entropy(p: float | np.ndarray) -> float | np.ndarray:
    """Entropy of a Bernoulli(p) in bits, with 0*log(0) = 0."""
    arr = np.asarray(p, dtype=float)
    if np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ValueError("binary_entropy expects probabilities in [0, 1]")
    h = -(xlogy(arr, arr) + xlogy(1.0 - arr, 1.0 - arr)) / _LN2
    return float(h) if h.ndim == 0 else h


def cell_information_gain(p: float | np.ndarray, sensor: SensorSpec) -> float | np.ndarray:
    """Mutual information (bits) between a cell's occupancy and one reading.

    H(P(y)) - [p H(TPR) + (1-p) H(FPR)] with P(y occupied) = p*TPR + (1-p)*FPR.
    Clipped at 0 to absorb float cancellation.
    """
    arr = np.asarray(p, dtype=float)
    p_read = arr * sensor.tpr + (1.0 - arr) * sensor.fpr
    gain = binary_entropy(p_read) - (
        arr * binary_entropy(sensor.tpr) + (1.0 - arr) * binary_entropy(sensor.fpr)
    )
    gain = np.maximum(gain, 0.0)
    return float(gain) if np.ndim(gain) == 0 else gain


def trajectory_information_gain(
    belief: OccupancyBelief,
    scout_groups: Sequence[tuple[Sequence[RobotPose], SensorSpec]],
    grid: GridSpec,
    obstacles: np.ndarray,
    cache: VisibilityCache | None = None,
) -> float:
    """Expected information (bits) from one measurement per covered cell.

    Each cell contributes once, weighted by the probability that the plan
    sees it at all; where several sensors cover a cell the most
    informative one is credited.
    """
    cache = cache if cache is not None else VisibilityCache(grid, obstacles)
    n = grid.n_cells
    miss = np.ones(n)
    best_gain = np.zeros(n)
    p_flat = belief.probs.ravel()
    for poses, sensor in scout_groups:
        counts = coverage_counts(poses, sensor.range, cache)
        miss *= (1.0 - sensor.p_visible) ** counts
        gain = cell_information_gain(p_flat, sensor)
        best_gain = np.maximum(best_gain, np.where(counts > 0, gain, 0.0))
    return float(np.dot(1.0 - miss, best_gain))


def belief_to_csv(belief: OccupancyBelief, path) -> None:
    """Dense dump, one text row per grid row j (south first), 6 decimals."""
    np.savetxt(path, belief.probs.T, fmt="%.6f", delimiter=",")
