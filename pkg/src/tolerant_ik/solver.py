"""Box-constrained local minimization of the task objective.

Projected L-BFGS with an Armijo backtracking search along the projection
arc.  Joint limits are enforced by clamping, so every iterate (and every
returned solution) lies inside the box exactly.
"""

from __future__ import annotations

import math
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .objective import CompiledTasks, GoalUpdate, Objective, SolverState, TaskSpec
from .robot import RobotModel


class SolverError(RuntimeError):
    """The objective cannot be minimized as configured (e.g. non-finite at the seed)."""


class StreamError(RuntimeError):
    def __init__(self, frame: int, cause: Exception):
        super().__init__(f"frame {frame}: {cause}")
        self.frame = frame
        self.cause = cause


@dataclass(frozen=True)
class SolverOptions:
    max_iterations: int = 100
    gradient_tolerance: float = 1e-5
    max_time_budget: float = 0.03
    step_initial: float = 1.0
    memory: int = 6
    armijo: float = 1e-4

    def __post_init__(self):
        for key in ("max_iterations", "gradient_tolerance", "max_time_budget", "step_initial", "memory"):
            if not getattr(self, key) > 0:
                raise ValueError(f"{key} must be positive")


@dataclass
class SolveResult:
    q_star: np.ndarray
    objective_value: float
    iterations: int
    converged: bool
    wall_time: float


@dataclass
class SolveRequest:
    model: RobotModel
    goal: GoalUpdate
    state: SolverState
    tasks: Sequence[TaskSpec] | CompiledTasks
    options: SolverOptions = field(default_factory=SolverOptions)


def project_to_limits(q, model: RobotModel) -> np.ndarray:
    """Clamp ``q`` componentwise to the joint position limits."""
    return np.minimum(np.maximum(np.asarray(q, dtype=float), model.lower), model.upper)


def _projected_gradient_norm(x, g, lo, hi):
    return float(np.max(np.abs(np.minimum(np.maximum(x - g, lo), hi) - x)))


def _two_loop(g, S, Y):
    """L-BFGS inverse-Hessian product ``H g``."""
    q = g.copy()
    stack = []
    for s, y in zip(reversed(S), reversed(Y)):
        rho = 1.0 / float(y @ s)
        a = rho * float(s @ q)
        q -= a * y
        stack.append((s, y, rho, a))
    s, y = S[-1], Y[-1]
    q *= float(s @ y) / float(y @ y)
    for s, y, rho, a in reversed(stack):
        b = rho * float(y @ q)
        q += (a - b) * s
    return q


class Solver:
    """Reusable solver bound to one model and task list.

    Holds the compiled objective; not meant to be shared between threads
    while a solve is running.
    """

    def __init__(self, model: RobotModel, tasks: Sequence[TaskSpec] | CompiledTasks,
                 options: SolverOptions | None = None):
        self.model = model
        self.options = options or SolverOptions()
        self.objective = Objective(model, tasks)

    def solve(self, goal: GoalUpdate, state: SolverState, seed=None) -> SolveResult:
        """Minimize from ``seed`` (default: the previous configuration)."""
        opts = self.options
        t0 = time.perf_counter()
        lo, hi = self.model.lower, self.model.upper
        f, grad = self.objective.bind(goal, state)
        x = project_to_limits(state.q_prev if seed is None else seed, self.model)
        fx = f(x)  # shifted by objective.offset
        if not math.isfinite(fx):
            raise SolverError(f"objective is not finite at the seed ({fx - self.objective.offset})")
        g = grad(x)
        S: deque = deque(maxlen=opts.memory)
        Y: deque = deque(maxlen=opts.memory)
        converged = False
        it = 0
        while it < opts.max_iterations:
            if _projected_gradient_norm(x, g, lo, hi) <= opts.gradient_tolerance:
                converged = True
                break
            free = ~(((x <= lo) & (g > 0)) | ((x >= hi) & (g < 0)))
            gf = np.where(free, g, 0.0)
            if S:
                d = -_two_loop(gf, S, Y)
                d[~free] = 0.0
                if float(gf @ d) >= 0.0:
                    d = -gf
                    S.clear()
                    Y.clear()
                step = opts.step_initial
            else:
                d = -gf
                step = opts.step_initial * min(1.0, 0.1 / float(np.max(np.abs(gf))))
            accepted = False
            for _ in range(40):
                xn = np.minimum(np.maximum(x + step * d, lo), hi)
                fn = f(xn)
                if fn <= fx + opts.armijo * float(g @ (xn - x)):
                    accepted = True
                    break
                step *= 0.5
            it += 1
            if not accepted or not np.any(xn != x):
                break
            gn = grad(xn)
            s, y = xn - x, gn - g
            if float(s @ y) > 1e-12 * float(y @ y):
                S.append(s)
                Y.append(y)
            x, fx, g = xn, fn, gn
            if time.perf_counter() - t0 > opts.max_time_budget:
                break
        else:
            converged = _projected_gradient_norm(x, g, lo, hi) <= opts.gradient_tolerance
        return SolveResult(x, float(fx) - self.objective.offset, it, converged, time.perf_counter() - t0)


def solve(request: SolveRequest) -> SolveResult:
    """One box-constrained solve seeded from ``request.state.q_prev``."""
    return Solver(request.model, request.tasks, request.options).solve(request.goal, request.state)


def stream_solve(model: RobotModel, goals: Iterable[GoalUpdate], initial_q,
                 tasks: Sequence[TaskSpec] | Callable[[GoalUpdate], Sequence[TaskSpec]],
                 options: SolverOptions | None = None, dt: float | None = None) -> list[SolveResult]:
    """Solve a goal stream, warm-starting each frame from the last solution.

    ``tasks`` is either a fixed list or a callable building the list from
    each goal (it is recompiled only when the returned object changes).
    ``dt`` defaults to the spacing of the first two goal timestamps.
    """
    goals = list(goals)
    if not goals:
        raise ValueError("the goal stream is empty")
    if dt is None:
        dt = goals[1].timestamp - goals[0].timestamp if len(goals) > 1 else 1.0 / 30.0
    state = SolverState.at_rest(project_to_limits(initial_q, model), dt)
    solver = None
    current = None
    results = []
    for k, goal in enumerate(goals):
        try:
            task_list = tasks(goal) if callable(tasks) else tasks
            if task_list is not current:
                solver = Solver(model, task_list, options)
                current = task_list
            res = solver.solve(goal, state)
        except Exception as exc:
            raise StreamError(k, exc) from exc
        results.append(res)
        state = state.shifted(res.q_star)
    return results
