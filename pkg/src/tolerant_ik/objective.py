"""Task functions and the weighted-sum objective.

A task is a scalar function of the configuration (a pose-error component,
a joint velocity/acceleration/jerk, a link-pair clearance or the
manipulability) fed through one of the parametric losses and weighted.
Task lists are flattened into arrays (:class:`CompiledTasks`) so that the
objective and its finite-difference gradient run inside numba.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import numba as nb
import numpy as np
import yaml

from . import losses as L
from .losses import GoalRange, LossParams
from .robot import (
    Pose,
    RobotModel,
    chain_kernel,
    jacobian_kernel,
    manipulability_kernel,
    segment_distance,
    world_capsule_points,
)
from .rotations import matrix_to_rotvec

TASK_KINDS = {
    "position_dof": 0,
    "rotation_dof": 1,
    "joint_velocity": 2,
    "joint_acceleration": 3,
    "joint_jerk": 4,
    "self_collision_pair": 5,
    "manipulability": 6,
}
POSE_KINDS = ("position_dof", "rotation_dof")
MODES = ("ranged", "relaxed", "trac")
MIN_LINK_DISTANCE = 0.02
DOF_NAMES = ("x", "y", "z", "rx", "ry", "rz")

# columns of CompiledTasks.table
_LO, _HI, _G, _C, _A1, _A2, _M, _N, _B, _WIDTH, _W, _DLO, _DHI, _HASDEAD = range(14)
_NCOL = 14


class TaskConfigError(ValueError):
    """An inconsistent task definition (caught when tasks are assembled)."""


@dataclass(frozen=True)
class TaskSpec:
    """One weighted objective term.

    ``deadband`` (optional) zeroes the task value whenever it lies inside
    the given closed interval before the loss is applied.
    """

    kind: str
    index: int
    loss_kind: str
    range: GoalRange
    params: LossParams
    weight: float
    deadband: tuple[float, float] | None = None

    def __post_init__(self):
        if self.kind not in TASK_KINDS:
            raise TaskConfigError(f"unknown task kind {self.kind!r}")
        if self.loss_kind not in L.LOSS_KINDS:
            raise TaskConfigError(f"unknown loss kind {self.loss_kind!r}")
        if not self.weight > 0:
            raise TaskConfigError(f"task weight must be positive, got {self.weight}")
        if self.kind in POSE_KINDS and self.index not in (0, 1, 2):
            raise TaskConfigError(f"{self.kind} index must be 0, 1 or 2")
        needs_goal = self.loss_kind in ("groove", "swamp_groove")
        if needs_goal and self.range.preferred is None and not self.range.degenerate:
            raise TaskConfigError(f"{self.loss_kind} task needs a preferred goal")
        if self.deadband is not None and not self.deadband[0] <= self.deadband[1]:
            raise TaskConfigError("deadband must satisfy lower <= upper")


@dataclass(frozen=True)
class GoalUpdate:
    """Goal pose at time ``timestamp`` with per-DoF tolerances.

    Tolerances are bounds on the pose error expressed in the goal frame,
    ordered x, y, z, rx, ry, rz.
    """

    timestamp: float
    target_pose: Pose
    tolerances: tuple[GoalRange, ...] = field(default_factory=lambda: exact_tolerances())

    def __post_init__(self):
        tol = tuple(self.tolerances)
        if len(tol) != 6:
            raise ValueError("a goal needs six tolerance ranges")
        for name, t in zip(DOF_NAMES, tol):
            if not t.lower <= 0.0 <= t.upper:
                raise ValueError(f"tolerance on {name} must contain zero, got [{t.lower}, {t.upper}]")
        object.__setattr__(self, "tolerances", tol)


def exact_tolerances() -> tuple[GoalRange, ...]:
    return tuple(GoalRange(0.0, 0.0) for _ in range(6))


def symmetric_tolerances(bounds: Sequence[float]) -> tuple[GoalRange, ...]:
    """``[-b, b]`` for each of the six bounds (``math.inf`` allowed)."""
    return tuple(GoalRange(-abs(b), abs(b)) for b in bounds)


@dataclass(frozen=True)
class SolverState:
    """The three previous configurations and the frame period."""

    q_prev: np.ndarray
    q_prev2: np.ndarray
    q_prev3: np.ndarray
    dt: float

    def __post_init__(self):
        h = [np.asarray(v, dtype=float) for v in (self.q_prev, self.q_prev2, self.q_prev3)]
        if not (h[0].shape == h[1].shape == h[2].shape) or h[0].ndim != 1:
            raise ValueError("history configurations must be vectors of equal length")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        for name, v in zip(("q_prev", "q_prev2", "q_prev3"), h):
            object.__setattr__(self, name, v)

    @classmethod
    def at_rest(cls, q, dt: float) -> SolverState:
        q = np.asarray(q, dtype=float)
        return cls(q.copy(), q.copy(), q.copy(), dt)

    def shifted(self, q) -> SolverState:
        return SolverState(np.array(q, dtype=float), self.q_prev, self.q_prev2, self.dt)

    @property
    def history(self) -> np.ndarray:
        return np.stack([self.q_prev, self.q_prev2, self.q_prev3])


# --------------------------------------------------------------------------
# task functions

def _check_q(model, q):
    q = np.asarray(q, dtype=float)
    if q.shape != (model.n,):
        raise ValueError(f"expected a configuration of length {model.n}, got shape {q.shape}")
    return q


@nb.njit(cache=True)
def pose_error_kernel(frames, goal_p, goal_R):
    """Position and scaled-axis rotation error in the goal frame."""
    n1 = frames.shape[0] - 1
    perr = np.empty(3)
    for i in range(3):
        s = 0.0
        for k in range(3):
            s += goal_R[k, i] * (frames[n1, k, 3] - goal_p[k])
        perr[i] = s
    Rrel = np.empty((3, 3))
    for r in range(3):
        for c in range(3):
            s = 0.0
            for k in range(3):
                s += goal_R[k, r] * frames[n1, k, c]
            Rrel[r, c] = s
    return perr, matrix_to_rotvec(Rrel)


def pose_errors(model: RobotModel, q, target: Pose) -> tuple[np.ndarray, np.ndarray]:
    frames, _, _ = chain_kernel(model.origins, model.axes, model.ee, _check_q(model, q))
    return pose_error_kernel(frames, target.position, target.rotation)


def position_error(model: RobotModel, q, goal: GoalUpdate, i: int) -> float:
    """Component ``i`` of the end-effector position error in the goal frame."""
    if i not in (0, 1, 2):
        raise ValueError("axis index must be 0, 1 or 2")
    return float(pose_errors(model, q, goal.target_pose)[0][i])


def rotation_error(model: RobotModel, q, goal: GoalUpdate, i: int) -> float:
    """Component ``i`` of the scaled-axis vector of ``R_goal^-1 R_ee``."""
    if i not in (0, 1, 2):
        raise ValueError("axis index must be 0, 1 or 2")
    return float(pose_errors(model, q, goal.target_pose)[1][i])


def smoothness_terms(state: SolverState, q) -> np.ndarray:
    """Backward-difference velocity, acceleration and jerk, shape (n, 3)."""
    q = np.asarray(q, dtype=float)
    dt = state.dt
    d1 = q - state.q_prev
    d2 = state.q_prev - state.q_prev2
    d3 = state.q_prev2 - state.q_prev3
    v = d1 / dt
    a = (d1 - d2) / dt ** 2
    j = ((d1 - d2) - (d2 - d3)) / dt ** 3
    return np.stack([v, a, j], axis=1)


def self_collision_terms(model: RobotModel, q) -> list[tuple[tuple[int, int], float]]:
    """Clearance of every non-adjacent capsule pair, keyed by link indices."""
    frames, _, _ = chain_kernel(model.origins, model.axes, model.ee, _check_q(model, q))
    wa, wb = world_capsule_points(frames, model.cap_link, model.cap_a, model.cap_b)
    out = []
    for i, j in model.collision_pairs:
        d = segment_distance(wa[i], wb[i], wa[j], wb[j]) - (model.cap_r[i] + model.cap_r[j])
        out.append(((int(model.cap_link[i]), int(model.cap_link[j])), float(d)))
    return out


# --------------------------------------------------------------------------
# compiled objective

@dataclass(frozen=True, eq=False)
class CompiledTasks:
    kinds: np.ndarray
    index: np.ndarray
    loss: np.ndarray
    table: np.ndarray

    def __len__(self):
        return self.kinds.shape[0]


def compile_tasks(tasks: Sequence[TaskSpec], model: RobotModel) -> CompiledTasks:
    tasks = list(tasks)
    if not tasks:
        raise TaskConfigError("the task list is empty")
    J = len(tasks)
    kinds = np.empty(J, dtype=np.int64)
    index = np.empty(J, dtype=np.int64)
    loss = np.empty(J, dtype=np.int64)
    table = np.zeros((J, _NCOL))
    n_pairs = model.collision_pairs.shape[0]
    for j, t in enumerate(tasks):
        kinds[j] = TASK_KINDS[t.kind]
        index[j] = t.index
        if t.kind.startswith("joint_") and not 0 <= t.index < model.n:
            raise TaskConfigError(f"{t.kind} index {t.index} out of range for {model.n} joints")
        if t.kind == "self_collision_pair" and not 0 <= t.index < n_pairs:
            raise TaskConfigError(f"collision pair index {t.index} out of range ({n_pairs} pairs)")
        r, p = t.range, t.params
        kind = L.LOSS_KINDS[t.loss_kind]
        goal = r.preferred if r.preferred is not None else r.lower
        if r.degenerate:
            kind, goal = L.GROOVE, r.lower
        loss[j] = kind
        table[j, _LO] = r.lower
        table[j, _HI] = r.upper
        table[j, _G] = goal
        table[j, _C] = p.c
        table[j, _A1] = p.a1
        table[j, _A2] = p.a2
        table[j, _M] = p.m
        table[j, _N] = p.n
        table[j, _B] = p.b
        table[j, _WIDTH] = p.width
        table[j, _W] = t.weight
        if t.deadband is not None:
            table[j, _DLO], table[j, _DHI] = t.deadband
            table[j, _HASDEAD] = 1.0
    return CompiledTasks(kinds, index, loss, table)


@nb.njit(cache=True)
def task_values_kernel(q, origins, axes, ee, cap_link, cap_a, cap_b, cap_r, pairs, mrows,
                       goal_p, goal_R, hist, dt, kinds, index):
    J = kinds.shape[0]
    need_fk = False
    need_caps = False
    need_manip = False
    for j in range(J):
        k = kinds[j]
        if k == 0 or k == 1 or k == 5 or k == 6:
            need_fk = True
        if k == 5:
            need_caps = True
        if k == 6:
            need_manip = True
    n = q.shape[0]
    perr = np.zeros(3)
    rerr = np.zeros(3)
    manip = 0.0
    frames = np.zeros((n + 2, 4, 4))
    wa = np.zeros((0, 3))
    wb = np.zeros((0, 3))
    if need_fk:
        frames, jp, ja = chain_kernel(origins, axes, ee, q)
        perr, rerr = pose_error_kernel(frames, goal_p, goal_R)
        if need_manip:
            manip = manipulability_kernel(jacobian_kernel(frames, jp, ja), mrows)
        if need_caps:
            wa, wb = world_capsule_points(frames, cap_link, cap_a, cap_b)
    inv_dt = 1.0 / dt
    out = np.empty(J)
    for j in range(J):
        k = kinds[j]
        i = index[j]
        if k == 0:
            x = perr[i]
        elif k == 1:
            x = rerr[i]
        elif k == 2:
            x = (q[i] - hist[0, i]) * inv_dt
        elif k == 3:
            x = ((q[i] - hist[0, i]) - (hist[0, i] - hist[1, i])) * inv_dt * inv_dt
        elif k == 4:
            # nested differences: exactly zero for a constant history
            d1 = q[i] - hist[0, i]
            d2 = hist[0, i] - hist[1, i]
            d3 = hist[1, i] - hist[2, i]
            x = ((d1 - d2) - (d2 - d3)) * inv_dt * inv_dt * inv_dt
        elif k == 5:
            a = pairs[i, 0]
            b = pairs[i, 1]
            x = segment_distance(wa[a], wb[a], wa[b], wb[b]) - (cap_r[a] + cap_r[b])
        else:
            x = manip
        out[j] = x
    return out


@nb.njit(cache=True)
def apply_loss(kind, x, row):
    """Loss of one task plus one (see ``losses._groove1``)."""
    if row[_HASDEAD] > 0.0 and row[_DLO] <= x <= row[_DHI]:
        x = 0.0
    m = int(row[_M])
    n = int(row[_N])
    if kind == 0:
        return L._groove1(x, row[_G], row[_C], row[_A2], m)
    if kind == 1:
        return L._swamp1(x, row[_LO], row[_HI], row[_A1], row[_A2], m, n, row[_B], row[_WIDTH])
    return L._swamp_groove1(x, row[_LO], row[_HI], row[_G], row[_C], row[_A1], row[_A2],
                           m, n, row[_B], row[_WIDTH])


@nb.njit(cache=True)
def objective_kernel(q, origins, axes, ee, cap_link, cap_a, cap_b, cap_r, pairs, mrows,
                     goal_p, goal_R, hist, dt, kinds, index, loss, table):
    x = task_values_kernel(q, origins, axes, ee, cap_link, cap_a, cap_b, cap_r, pairs, mrows,
                           goal_p, goal_R, hist, dt, kinds, index)
    total = 0.0
    for j in range(x.shape[0]):
        total += table[j, _W] * apply_loss(loss[j], x[j], table[j])
    return total


@nb.njit(cache=True)
def gradient_kernel(q, origins, axes, ee, cap_link, cap_a, cap_b, cap_r, pairs, mrows,
                    goal_p, goal_R, hist, dt, kinds, index, loss, table, central, f0):
    """Finite-difference gradient; ``f0`` is F(q), used by the forward path."""
    n = q.shape[0]
    g = np.empty(n)
    xq = q.copy()
    for i in range(n):
        qi = q[i]
        if central:
            h = 1e-7 * (1.0 + abs(qi))
            xq[i] = qi + h
            fp = objective_kernel(xq, origins, axes, ee, cap_link, cap_a, cap_b, cap_r, pairs,
                                  mrows, goal_p, goal_R, hist, dt, kinds, index, loss, table)
            up = xq[i]
            xq[i] = qi - h
            fm = objective_kernel(xq, origins, axes, ee, cap_link, cap_a, cap_b, cap_r, pairs,
                                  mrows, goal_p, goal_R, hist, dt, kinds, index, loss, table)
            g[i] = (fp - fm) / (up - xq[i])
        else:
            h = 1.4901161193847656e-08 * (1.0 + abs(qi))
            xq[i] = qi + h
            fp = objective_kernel(xq, origins, axes, ee, cap_link, cap_a, cap_b, cap_r, pairs,
                                  mrows, goal_p, goal_R, hist, dt, kinds, index, loss, table)
            g[i] = (fp - f0) / (xq[i] - qi)
        xq[i] = qi
    return g


class Objective:
    """The weighted-sum objective for one model and task list.

    Goal and history are supplied per evaluation, so the same instance
    serves a whole stream as long as the task list does not change.
    """

    def __init__(self, model: RobotModel, tasks: Sequence[TaskSpec] | CompiledTasks):
        self.model = model
        self.tasks = tasks if isinstance(tasks, CompiledTasks) else compile_tasks(tasks, model)
        # the kernels sum (loss + 1) per task; F is that sum minus the weights
        self.offset = float(self.tasks.table[:, _W].sum())
        m = model
        self._model_args = (m.origins, m.axes, m.ee, m.cap_link, m.cap_a, m.cap_b, m.cap_r,
                            m.collision_pairs, m.manipulability_rows)

    def _args(self, goal: GoalUpdate, state: SolverState):
        pose = goal.target_pose
        return self._model_args + (pose.position, pose.rotation, state.history, float(state.dt))

    def bind(self, goal: GoalUpdate, state: SolverState):
        """Return ``(f, grad)`` closures over a fixed goal and history.

        ``f`` is the objective plus the constant :attr:`offset`.
        """
        args = self._args(goal, state)
        t = self.tasks
        tail = (t.kinds, t.index, t.loss, t.table)

        def f(q):
            return objective_kernel(q, *args, *tail)

        def grad(q, f0=0.0, central=True):
            return gradient_kernel(q, *args, *tail, central, f0)

        return f, grad

    def value(self, q, goal, state) -> float:
        q = _check_q(self.model, q)
        t = self.tasks
        return float(objective_kernel(q, *self._args(goal, state), t.kinds, t.index, t.loss,
                                      t.table)) - self.offset

    def gradient(self, q, goal, state, method: str = "central") -> np.ndarray:
        q = _check_q(self.model, q)
        t = self.tasks
        if method not in ("central", "forward"):
            raise ValueError(f"unknown difference method {method!r}")
        central = method == "central"
        f0 = 0.0 if central else self.value(q, goal, state) + self.offset
        return gradient_kernel(q, *self._args(goal, state), t.kinds, t.index, t.loss, t.table,
                               central, f0)

    def task_values(self, q, goal, state) -> np.ndarray:
        q = _check_q(self.model, q)
        return task_values_kernel(q, *self._args(goal, state), self.tasks.kinds, self.tasks.index)


def evaluate_objective(q, model: RobotModel, goal: GoalUpdate, state: SolverState,
                       tasks: Sequence[TaskSpec]) -> float:
    """Weighted sum of task losses at ``q``."""
    return Objective(model, tasks).value(q, goal, state)


def objective_gradient(q, model: RobotModel, goal: GoalUpdate, state: SolverState,
                       tasks: Sequence[TaskSpec], method: str = "central") -> np.ndarray:
    """Finite-difference gradient of :func:`evaluate_objective`.

    Central differences use ``h = 1e-7 (1 + |q_i|)``; the forward fast path
    uses a step of sqrt(machine epsilon) scaled the same way.
    """
    return Objective(model, tasks).gradient(q, goal, state, method)


# --------------------------------------------------------------------------
# task families and assembly

@dataclass(frozen=True)
class TaskFamily:
    loss_kind: str
    params: LossParams
    weight: float


FAMILY_NAMES = ("position", "position_ranged", "rotation", "rotation_ranged", "velocity",
                "acceleration", "jerk", "self_collision", "manipulability")
_PARAM_KEYS = ("c", "a1", "a2", "m", "n", "b", "width")


def family_from_dict(name: str, data: dict, base: TaskFamily | None = None) -> TaskFamily:
    if not isinstance(data, dict):
        raise TaskConfigError(f"family {name!r} must be a mapping")
    unknown = set(data) - set(_PARAM_KEYS) - {"loss_kind", "weight"}
    if unknown:
        raise TaskConfigError(f"family {name!r}: unknown keys {sorted(unknown)}")
    params = base.params if base is not None else LossParams()
    try:
        params = params.with_(**{k: data[k] for k in _PARAM_KEYS if k in data})
    except (TypeError, ValueError) as exc:
        raise TaskConfigError(f"family {name!r}: {exc}") from exc
    loss_kind = data.get("loss_kind", base.loss_kind if base else None)
    weight = data.get("weight", base.weight if base else None)
    if loss_kind not in L.LOSS_KINDS:
        raise TaskConfigError(f"family {name!r}: invalid loss_kind {loss_kind!r}")
    if weight is None or not float(weight) > 0:
        raise TaskConfigError(f"family {name!r}: weight must be positive")
    return TaskFamily(loss_kind, params, float(weight))


def load_families(path: str | Path | None = None) -> dict[str, TaskFamily]:
    """Loss/weight settings per task family.

    The bundled defaults are always loaded; a user file only needs the
    families and keys it overrides.
    """
    text = resources.files("tolerant_ik.data").joinpath("loss_params.yaml").read_text()
    families = {k: family_from_dict(k, v) for k, v in yaml.safe_load(text).items()}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"loss parameter file not found: {path}")
        user = yaml.safe_load(path.read_text()) or {}
        if not isinstance(user, dict):
            raise TaskConfigError("loss parameter file must map family names to settings")
        for k, v in user.items():
            families[k] = family_from_dict(k, v, families.get(k))
    return families


def _family_task(fam: TaskFamily, kind: str, index: int, rng: GoalRange, **kw) -> TaskSpec:
    return TaskSpec(kind, index, fam.loss_kind, rng, fam.params, fam.weight, **kw)


def pose_tasks(tolerances: Sequence[GoalRange], families: dict[str, TaskFamily],
               mode: str = "ranged") -> list[TaskSpec]:
    """The end-effector pose terms for one set of per-DoF tolerances.

    ``ranged``: exact DoFs become grooves, finite intervals swamps and
    fully unbounded DoFs are dropped.  ``relaxed`` ignores tolerances and
    matches all six DoFs.  ``trac`` zeroes in-tolerance errors before a
    groove, and drops unbounded DoFs (whose error would always be zeroed).
    """
    if mode not in MODES:
        raise TaskConfigError(f"unknown mode {mode!r}")
    tasks = []
    for dof, tol in enumerate(tolerances):
        kind = POSE_KINDS[dof // 3]
        fam_name = "position" if dof < 3 else "rotation"
        axis = dof % 3
        exact = families[fam_name]
        if mode == "relaxed" or tol.degenerate:
            tasks.append(_family_task(exact, kind, axis, GoalRange.exact(0.0)))
        elif tol.unbounded:
            continue
        elif mode == "ranged":
            ranged = families[fam_name + "_ranged"]
            tasks.append(_family_task(ranged, kind, axis, GoalRange(tol.lower, tol.upper)))
        else:
            tasks.append(_family_task(exact, kind, axis, GoalRange.exact(0.0),
                                      deadband=(tol.lower, tol.upper)))
    return tasks


def smoothness_tasks(model: RobotModel, families: dict[str, TaskFamily]) -> list[TaskSpec]:
    tasks = []
    for i in range(model.n):
        vl, al = model.velocity_limits[i], model.acceleration_limits[i]
        tasks.append(_family_task(families["velocity"], "joint_velocity", i, GoalRange(-vl, vl, 0.0)))
        tasks.append(_family_task(families["acceleration"], "joint_acceleration", i,
                                  GoalRange(-al, al, 0.0)))
        tasks.append(_family_task(families["jerk"], "joint_jerk", i, GoalRange.exact(0.0)))
    return tasks


def collision_tasks(model: RobotModel, families: dict[str, TaskFamily],
                    min_distance: float = MIN_LINK_DISTANCE) -> list[TaskSpec]:
    fam = families["self_collision"]
    rng = GoalRange(min_distance, math.inf)
    return [_family_task(fam, "self_collision_pair", p, rng)
            for p in range(model.collision_pairs.shape[0])]


def manipulability_task(families: dict[str, TaskFamily]) -> TaskSpec:
    return _family_task(families["manipulability"], "manipulability", 0, GoalRange.exact(1.0))


def build_tasks(model: RobotModel, tolerances: Sequence[GoalRange] | None = None,
                mode: str = "ranged", families: dict[str, TaskFamily] | None = None) -> list[TaskSpec]:
    """Default task set for a mode.

    ``ranged`` and ``relaxed`` use pose, smoothness, self-collision and
    manipulability terms.  ``trac`` keeps only the (dead-banded) pose terms,
    like a pure pose solver seeded with the previous solution.
    """
    families = families or load_families()
    tolerances = tolerances if tolerances is not None else exact_tolerances()
    tasks = pose_tasks(tolerances, families, mode)
    if mode == "trac":
        if not tasks:
            raise TaskConfigError("every pose DoF is unbounded; nothing to solve for")
        return tasks
    tasks += smoothness_tasks(model, families)
    tasks += collision_tasks(model, families)
    tasks.append(manipulability_task(families))
    return tasks


def load_task_config(path: str | Path, model: RobotModel,
                     tolerances: Sequence[GoalRange] | None = None,
                     families: dict[str, TaskFamily] | None = None) -> list[TaskSpec]:
    """Build a task list from a YAML array of task entries.

    Each entry is ``{kind, index?, loss_kind?, weight?, params?}``; ``kind``
    is either a task kind or one of the groups ``pose``, ``smoothness``,
    ``self_collision`` and ``manipulability``.  Omitted fields come from the
    matching family defaults.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"task configuration not found: {path}")
    entries = yaml.safe_load(path.read_text())
    if not isinstance(entries, list) or not entries:
        raise TaskConfigError("task configuration must be a non-empty list")
    families = families or load_families()
    tolerances = tolerances if tolerances is not None else exact_tolerances()
    tasks: list[TaskSpec] = []
    for pos, entry in enumerate(entries):
        if not isinstance(entry, dict) or "kind" not in entry:
            raise TaskConfigError(f"task entry {pos} needs a 'kind'")
        tasks += _entry_tasks(entry, model, tolerances, families)
    return tasks


_KIND_FAMILY = {"joint_velocity": "velocity", "joint_acceleration": "acceleration",
                "joint_jerk": "jerk", "self_collision_pair": "self_collision",
                "manipulability": "manipulability"}


def _entry_tasks(entry, model, tolerances, families):
    overrides = {k: entry[k] for k in ("loss_kind", "weight") if k in entry}
    overrides.update(entry.get("params") or {})

    def fam(name):
        return family_from_dict(name, overrides, families[name]) if overrides else families[name]

    kind = entry["kind"]
    local = dict(families)
    if kind in ("pose", *POSE_KINDS):
        base = "position" if kind != "rotation_dof" else "rotation"
        for nm in ([base, base + "_ranged"] if kind != "pose" else
                   ["position", "position_ranged", "rotation", "rotation_ranged"]):
            if overrides:
                local[nm] = fam(nm)
        tasks = pose_tasks(tolerances, local, entry.get("mode", "ranged"))
        if kind != "pose":
            tasks = [t for t in tasks if t.kind == kind]
            if "index" in entry:
                tasks = [t for t in tasks if t.index == int(entry["index"])]
        return tasks
    if kind == "smoothness":
        for nm in ("velocity", "acceleration", "jerk"):
            if overrides:
                local[nm] = fam(nm)
        return smoothness_tasks(model, local)
    if kind in ("self_collision", "self_collision_pair"):
        if overrides:
            local["self_collision"] = fam("self_collision")
        tasks = collision_tasks(model, local)
        if "index" in entry:
            tasks = [t for t in tasks if t.index == int(entry["index"])]
        return tasks
    if kind == "manipulability":
        if overrides:
            local["manipulability"] = fam("manipulability")
        return [manipulability_task(local)]
    if kind in _KIND_FAMILY:
        name = _KIND_FAMILY[kind]
        local[name] = fam(name)
        tasks = [t for t in smoothness_tasks(model, local) if t.kind == kind]
        if "index" in entry:
            tasks = [t for t in tasks if t.index == int(entry["index"])]
        return tasks
    raise TaskConfigError(f"unknown task kind {kind!r}")
