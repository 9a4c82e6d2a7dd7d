"""Independent oracle suites for the core probabilistic identities.

Each suite checks a closed-form quantity used by the planner against a
brute-force computation that shares no code with it: the reward
generating function against full outcome enumeration, per-cell
information gain against the 2x2 joint table, Bayes fusion against the
enumeration posterior, and the confidence bound against its sampled
violation frequency. The CLI ``selftest`` subcommand runs reduced
versions; the acceptance tests run them at full size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .belief import OccupancyBelief, binary_entropy, cell_information_gain, fuse
from .objective import JointPlan, ObjectiveConfig, cgf_from_detection, ucb_violation_rate
from .scenario import Scenario
from .sensing import MeasurementGrid, SensorSpec
from .team import RobotSpec
from .world import (
    ActionSequence,
    GridSpec,
    Heading,
    MotionPrimitive,
    RobotPose,
    pose_valid,
    step,
)


@dataclass
class SuiteResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail}"


# ---------------------------------------------------------------------------
# Brute-force references
# ---------------------------------------------------------------------------


def brute_force_cgf(pd: np.ndarray) -> float:
    """log E[exp(count)] by enumerating all 2^k detection outcomes."""
    pd = np.asarray(pd, dtype=float)
    k = pd.size
    configs = ((np.arange(2**k)[:, None] >> np.arange(k)[None, :]) & 1).astype(bool)
    probs = np.prod(np.where(configs, pd, 1.0 - pd), axis=1)
    counts = configs.sum(axis=1)
    return float(np.log(np.dot(probs, np.exp(counts))))


def brute_force_mi_bits(p: float, tpr: float, fpr: float) -> float:
    """I(occupancy; reading) in bits from the full 2x2 joint table."""
    pe = (1.0 - p, p)
    p_read = (fpr, tpr)  # P(read occupied | e)
    total = 0.0
    for e in (0, 1):
        for y in (0, 1):
            py_e = p_read[e] if y else 1.0 - p_read[e]
            joint = pe[e] * py_e
            if joint <= 0.0:
                continue
            py = pe[0] * (p_read[0] if y else 1.0 - p_read[0]) + pe[1] * (
                p_read[1] if y else 1.0 - p_read[1]
            )
            total += joint * math.log2(py_e / py)
    return max(total, 0.0)


def enumeration_posterior(p: float, tpr: float, fpr: float, read_occupied: bool) -> float:
    """P(occupied | reading) from the joint over (occupancy, reading)."""
    like_occ = tpr if read_occupied else 1.0 - tpr
    like_emp = fpr if read_occupied else 1.0 - fpr
    denom = like_occ * p + like_emp * (1.0 - p)
    if denom == 0.0:
        raise ZeroDivisionError("reading impossible under both hypotheses")
    return like_occ * p / denom


# ---------------------------------------------------------------------------
# Random-instance generators
# ---------------------------------------------------------------------------


def _random_valid_sequence(
    rng: np.random.Generator,
    robot_id: int,
    pose: RobotPose,
    grid: GridSpec,
    obstacles: np.ndarray,
    horizon: int,
    step_length: float,
) -> ActionSequence:
    prims = []
    for _ in range(horizon):
        options = [MotionPrimitive.stay()]
        for h in Heading:
            if h is Heading.STAY:
                continue
            cand = MotionPrimitive(h, step_length)
            try:
                step(pose, cand, grid, obstacles)
            except Exception:
                continue
            options.append(cand)
        prim = options[int(rng.integers(len(options)))]
        pose = step(pose, prim, grid, obstacles)
        prims.append(prim)
    return ActionSequence(robot_id, tuple(prims))


def random_violation_instance(
    rng: np.random.Generator,
    max_free_cells: int = 8,
    horizon: int = 3,
) -> tuple[Scenario, JointPlan, JointPlan]:
    """A tiny scenario plus random valid plans for the bound check."""
    n_x = int(rng.integers(2, 5))
    n_y = max(1, max_free_cells // n_x)
    grid = GridSpec(n_x, n_y, 1.0)
    obstacles = np.zeros((n_x, n_y), dtype=bool)

    scout_sensor = SensorSpec(
        range=float(rng.uniform(1.2, 3.5)),
        p_visible=float(rng.choice([1.0, rng.uniform(0.5, 0.95)])),
        true_positive_rate=float(rng.uniform(0.6, 0.98)),
        false_positive_rate=float(rng.uniform(0.02, 0.3)),
    )
    task_sensor = SensorSpec(range=float(rng.uniform(1.0, 2.2)))

    def random_pose() -> RobotPose:
        i = int(rng.integers(n_x))
        j = int(rng.integers(n_y))
        return RobotPose(*grid.cell_center(i, j))

    robots = (
        RobotSpec(id=0, start_pose=random_pose(), scout_sensor=scout_sensor, task_sensor=task_sensor),
        RobotSpec(id=1, start_pose=random_pose(), task_sensor=task_sensor),
    )
    scenario = Scenario(
        name="violation-instance",
        grid=grid,
        obstacles=obstacles,
        robots=robots,
        step_length=1.0,
        horizon=horizon,
        prior=float(rng.uniform(0.15, 0.85)),
        target_count=0,
    )
    sequences = {
        r.id: _random_valid_sequence(rng, r.id, r.start_pose, grid, obstacles, horizon, 1.0)
        for r in robots
    }
    starts = {r.id: r.start_pose for r in robots}
    plan = JointPlan.from_sequences(starts, sequences, grid, obstacles)
    return scenario, plan, plan


# ---------------------------------------------------------------------------
# Suites
# ---------------------------------------------------------------------------


def cgf_suite(
    n_instances: int = 200,
    max_cells: int = 12,
    tol: float = 1e-9,
    seed: int = 0,
) -> SuiteResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_instances):
        k = int(rng.integers(1, max_cells + 1))
        belief = rng.random(k)
        visibility = np.where(rng.random(k) < 0.3, rng.integers(0, 2, k).astype(float), rng.random(k))
        pd = belief * visibility
        err = abs(cgf_from_detection(pd) - brute_force_cgf(pd))
        worst = max(worst, err)
    return SuiteResult(
        "cgf-enumeration",
        worst <= tol,
        f"max |closed-form - enumeration| = {worst:.3e} over {n_instances} instances (tol {tol:g})",
    )


def mi_suite(n_triples: int = 1000, tol: float = 1e-12, seed: int = 1) -> SuiteResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    bound_violated = False
    for _ in range(n_triples):
        p = float(rng.random())
        tpr = float(rng.random())
        fpr = float(rng.uniform(0.0, tpr))
        sensor = SensorSpec(range=1.0, true_positive_rate=tpr, false_positive_rate=fpr)
        got = cell_information_gain(p, sensor)
        want = brute_force_mi_bits(p, tpr, fpr)
        worst = max(worst, abs(got - want))
        if got < 0 or got > min(binary_entropy(p), 1.0) + tol:
            bound_violated = True
    return SuiteResult(
        "mi-enumeration",
        worst <= tol and not bound_violated,
        f"max |gain - joint-table MI| = {worst:.3e} over {n_triples} triples (tol {tol:g})",
    )


def bayes_suite(
    n_triples: int = 1000,
    n_order_pairs: int = 100,
    tol: float = 1e-12,
    seed: int = 2,
) -> SuiteResult:
    rng = np.random.default_rng(seed)
    grid_shape = (1, 1)
    cell = np.array([[0, 0]])
    worst = 0.0
    for _ in range(n_triples):
        p = float(rng.uniform(1e-3, 1.0 - 1e-3))
        tpr = float(rng.random())
        fpr = float(rng.uniform(0.0, tpr))
        sensor = SensorSpec(range=1.0, true_positive_rate=tpr, false_positive_rate=fpr)
        for reading in (False, True):
            try:
                want = enumeration_posterior(p, tpr, fpr, reading)
            except ZeroDivisionError:
                continue
            belief = OccupancyBelief(np.full(grid_shape, p))
            got = fuse(belief, MeasurementGrid(cell, np.array([reading])), sensor)
            worst = max(worst, abs(float(got.probs[0, 0]) - want))

    order_ok = True
    for _ in range(n_order_pairs):
        p = float(rng.uniform(1e-3, 1.0 - 1e-3))
        sensor_a = SensorSpec(range=1.0, true_positive_rate=float(rng.uniform(0.5, 1.0)),
                              false_positive_rate=float(rng.uniform(0.0, 0.5)))
        sensor_b = SensorSpec(range=1.0, true_positive_rate=float(rng.uniform(0.5, 1.0)),
                              false_positive_rate=float(rng.uniform(0.0, 0.5)))
        ma = MeasurementGrid(cell, np.array([bool(rng.integers(2))]))
        mb = MeasurementGrid(cell, np.array([bool(rng.integers(2))]))
        belief = OccupancyBelief(np.full(grid_shape, p))
        ab = fuse(fuse(belief, ma, sensor_a), mb, sensor_b).probs[0, 0]
        ba = fuse(fuse(belief, mb, sensor_b), ma, sensor_a).probs[0, 0]
        if abs(float(ab) - float(ba)) > tol:
            order_ok = False
    return SuiteResult(
        "bayes-enumeration",
        worst <= tol and order_ok,
        f"max |fuse - enumeration posterior| = {worst:.3e} over {n_triples} triples, "
        f"order invariance {'ok' if order_ok else 'VIOLATED'} (tol {tol:g})",
    )


def ucb_suite(
    n_instances: int = 5,
    n_samples: int = 100_000,
    deltas: Sequence[float] = (0.1, 0.5),
    max_free_cells: int = 8,
    seed: int = 3,
) -> SuiteResult:
    rng = np.random.default_rng(seed)
    lines = []
    ok = True
    for idx in range(n_instances):
        scenario, scout_plan, task_plan = random_violation_instance(rng, max_free_cells)
        for delta in deltas:
            margin = delta + 3.0 * math.sqrt(delta * (1.0 - delta) / n_samples)
            rate = ucb_violation_rate(
                scenario,
                scout_plan,
                task_plan,
                ObjectiveConfig(delta=delta),
                n_samples,
                np.random.default_rng(seed * 1000 + idx),
            )
            if rate > margin:
                ok = False
            lines.append(f"inst{idx} d={delta:g}: rate={rate:.4f} <= {margin:.4f}")
    return SuiteResult("ucb-violation", ok, "; ".join(lines))


def run_all(quick: bool = True, seed: int = 0) -> list[SuiteResult]:
    if quick:
        return [
            cgf_suite(n_instances=50, seed=seed),
            mi_suite(n_triples=200, seed=seed + 1),
            bayes_suite(n_triples=200, n_order_pairs=40, seed=seed + 2),
            ucb_suite(n_instances=2, n_samples=20_000, seed=seed + 3),
        ]
    return [
        cgf_suite(seed=seed),
        mi_suite(seed=seed + 1),
        bayes_suite(seed=seed + 2),
        ucb_suite(seed=seed + 3),
    ]
