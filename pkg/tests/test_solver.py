import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tolerant_ik.bench import BenchmarkConfig, TOLERANCES, load_manifest
from tolerant_ik.bench.runner import prepare_run
from tolerant_ik.losses import GoalRange, LossParams
from tolerant_ik.objective import (
    GoalUpdate,
    Objective,
    SolverState,
    TaskSpec,
    build_tasks,
    exact_tolerances,
)
from tolerant_ik.robot import Pose, end_effector_pose, home_configuration, load_robot, robot_from_dict
from tolerant_ik.solver import (
    SolveRequest,
    Solver,
    SolverError,
    SolverOptions,
    StreamError,
    project_to_limits,
    solve,
    stream_solve,
)

NO_BUDGET = SolverOptions(max_time_budget=math.inf)


def one_joint():
    return robot_from_dict({
        "name": "one",
        "joints": [{"name": "j", "axis": [0, 0, 1], "limits": {"position": [-2, 2]}}],
        "end_effector_offset": {"translation": [1, 0, 0]},
    })


def groove_task(kind, index, weight=1.0, params=LossParams(c=0.1, a2=2.0, m=2)):
    return TaskSpec(kind, index, "groove", GoalRange.exact(0.0), params, weight)


# ---------------------------------------------------------------- projection

def test_projection_examples(ur5):
    q = np.array([0.1, -0.2, 0.3, 0.0, 1.0, -1.0])
    assert np.array_equal(project_to_limits(q, ur5), q)
    q2 = q.copy()
    q2[2] = ur5.upper[2] + 0.5
    assert project_to_limits(q2, ur5)[2] == ur5.upper[2]


@given(st.lists(st.floats(-20, 20), min_size=7, max_size=7))
def test_projection_idempotent(values):
    model = load_robot("sawyer")
    once = project_to_limits(values, model)
    assert np.array_equal(project_to_limits(once, model), once)
    assert np.all((once >= model.lower) & (once <= model.upper))


# ---------------------------------------------------------------- single solves

@pytest.mark.parametrize("name", ["ur5", "sawyer"])
def test_seed_is_stationary(name):
    model = load_robot(name)
    q = home_configuration(name)
    goal = GoalUpdate(0.0, end_effector_pose(model, q))
    tasks = [groove_task("position_dof", i) for i in range(3)] + \
            [groove_task("rotation_dof", i) for i in range(3)]
    res = Solver(model, tasks, NO_BUDGET).solve(goal, SolverState.at_rest(q, 1 / 30))
    assert np.abs(res.q_star - q).max() <= 1e-4


def test_one_joint_reaches_goal():
    model = one_joint()
    target = np.array([math.cos(1.2), math.sin(1.2), 0.0])
    goal = GoalUpdate(0.0, Pose(target, np.eye(3)))
    tasks = [groove_task("position_dof", 0), groove_task("position_dof", 1)]
    res = solve(SolveRequest(model, goal, SolverState.at_rest([0.0], 1.0), tasks, NO_BUDGET))
    assert res.converged
    assert np.linalg.norm(end_effector_pose(model, res.q_star).position - target) <= 1e-3
    # 1-D oracle: the minimizer of the squared distance along the circle
    grid = np.linspace(-2, 2, 400001)
    best = grid[np.argmin((np.cos(grid) - target[0]) ** 2 + (np.sin(grid) - target[1]) ** 2)]
    assert res.q_star[0] == pytest.approx(best, abs=1e-4)


def test_seed_outside_limits_is_clamped():
    model = one_joint()
    goal = GoalUpdate(0.0, Pose(np.array([-1.0, 0.0, 0.0]), np.eye(3)))
    tasks = [groove_task("position_dof", 0)]
    res = Solver(model, tasks, NO_BUDGET).solve(goal, SolverState.at_rest([5.0], 1.0))
    assert model.lower[0] <= res.q_star[0] <= model.upper[0]
    # the goal sits beyond the upper limit, so the solver rests on it
    assert res.q_star[0] == model.upper[0]


def test_objective_not_increased(ur5, rng):
    tasks = build_tasks(ur5)
    solver = Solver(ur5, tasks, NO_BUDGET)
    for _ in range(5):
        q = rng.uniform(-2, 2, 6)
        goal = GoalUpdate(0.0, end_effector_pose(ur5, q + rng.normal(0, 0.1, 6)))
        state = SolverState.at_rest(q, 1 / 30)
        res = solver.solve(goal, state)
        assert res.objective_value <= Objective(ur5, tasks).value(project_to_limits(q, ur5), goal, state)
        assert res.objective_value == pytest.approx(Objective(ur5, tasks).value(res.q_star, goal, state),
                                                    abs=1e-9)


def test_monotone_acceptance(sawyer):
    # iterates form a prefix of the same sequence; F must never go up along it
    tasks = build_tasks(sawyer)
    q = home_configuration("sawyer")
    goal = GoalUpdate(0.0, end_effector_pose(sawyer, q + 0.2))
    state = SolverState.at_rest(q, 1 / 30)
    values = []
    for k in range(1, 40):
        opts = SolverOptions(max_iterations=k, gradient_tolerance=1e-12, max_time_budget=math.inf)
        values.append(Solver(sawyer, tasks, opts).solve(goal, state).objective_value)
    assert all(b <= a for a, b in zip(values, values[1:]))
    assert values[-1] < values[0]


@given(st.integers(0, 2**31))
def test_feasibility(seed):
    rng = np.random.default_rng(seed)
    model = load_robot("ur5")
    q = rng.uniform(model.lower, model.upper)
    # a far target pushes joints against their limits
    goal = GoalUpdate(0.0, Pose(rng.uniform(-3, 3, 3), np.eye(3)))
    opts = SolverOptions(max_iterations=30, max_time_budget=math.inf)
    res = Solver(model, build_tasks(model, mode="trac"), opts).solve(goal, SolverState.at_rest(q, 1 / 30))
    assert np.all(res.q_star >= model.lower) and np.all(res.q_star <= model.upper)


def test_determinism(sawyer):
    tasks = build_tasks(sawyer)
    q = home_configuration("sawyer")
    goal = GoalUpdate(0.0, end_effector_pose(sawyer, q + 0.1))
    state = SolverState.at_rest(q, 1 / 30)
    a = Solver(sawyer, tasks, NO_BUDGET).solve(goal, state)
    b = Solver(sawyer, tasks, NO_BUDGET).solve(goal, state)
    assert np.array_equal(a.q_star, b.q_star)
    assert (a.objective_value, a.iterations, a.converged) == (b.objective_value, b.iterations, b.converged)


def test_time_budget_returns_best_so_far(sawyer):
    tasks = build_tasks(sawyer)
    q = home_configuration("sawyer")
    goal = GoalUpdate(0.0, end_effector_pose(sawyer, q + 0.3))
    state = SolverState.at_rest(q, 1 / 30)
    res = Solver(sawyer, tasks, SolverOptions(max_time_budget=1e-9)).solve(goal, state)
    assert not res.converged
    assert res.iterations == 1
    assert res.objective_value <= Objective(sawyer, tasks).value(q, goal, state)


def test_non_finite_seed_rejected(ur5):
    huge = LossParams(c=0.1, a2=1e308, m=2)
    tasks = [groove_task("position_dof", 0, params=huge)]
    goal = GoalUpdate(0.0, Pose(np.array([50.0, 0, 0]), np.eye(3)))
    with pytest.raises(SolverError, match="not finite"):
        Solver(ur5, tasks).solve(goal, SolverState.at_rest(np.zeros(6), 1 / 30))


def test_options_validation():
    with pytest.raises(ValueError):
        SolverOptions(max_iterations=0)
    with pytest.raises(ValueError):
        SolverOptions(max_time_budget=-1.0)


# ---------------------------------------------------------------- streams

def test_single_frame_stream_is_one_solve(ur5):
    q = home_configuration("ur5")
    goal = GoalUpdate(0.0, end_effector_pose(ur5, q + 0.05))
    tasks = build_tasks(ur5)
    (streamed,) = stream_solve(ur5, [goal], q, tasks, NO_BUDGET)
    single = Solver(ur5, tasks, NO_BUDGET).solve(goal, SolverState.at_rest(q, 1 / 30))
    assert np.array_equal(streamed.q_star, single.q_star)


def test_stream_shifts_history(planar):
    # with only a velocity groove the solution must stay at the previous q
    tasks = [groove_task("joint_velocity", 0), groove_task("joint_velocity", 1)]
    goals = [GoalUpdate(k / 30, Pose(np.zeros(3), np.eye(3))) for k in range(3)]
    out = stream_solve(planar, goals, [0.4, 0.2], tasks, NO_BUDGET)
    for r in out:
        assert np.allclose(r.q_star, [0.4, 0.2], atol=1e-12)


@pytest.mark.filterwarnings("ignore:overflow")
def test_stream_error_has_frame_index(ur5):
    huge = LossParams(c=0.1, a2=1e308, m=2)
    tasks = [groove_task("position_dof", 0, params=huge)]
    goals = [GoalUpdate(k / 30, Pose(np.array([x, 0, 0]), np.eye(3)))
             for k, x in enumerate((0.5, 0.5, 50.0))]
    with pytest.raises(StreamError) as info:
        stream_solve(ur5, goals, np.zeros(6), tasks, NO_BUDGET)
    assert info.value.frame == 2
    assert "frame 2" in str(info.value)


def test_empty_stream(ur5):
    with pytest.raises(ValueError):
        stream_solve(ur5, [], np.zeros(6), build_tasks(ur5))


def test_tasks_callable_per_goal(ur5):
    q = home_configuration("ur5")
    pose = end_effector_pose(ur5, q)
    built = []

    def tasks_for(goal):
        built.append(goal.timestamp)
        return build_tasks(ur5, goal.tolerances)

    goals = [GoalUpdate(k / 30, pose, exact_tolerances()) for k in range(3)]
    out = stream_solve(ur5, goals, q, tasks_for, NO_BUDGET)
    assert len(out) == 3 and built == [0.0, 1 / 30, 2 / 30]


@pytest.mark.parametrize("robot", ["ur5", "sawyer"])
def test_warm_start_continuity(robot):
    manifest = load_manifest()
    config = BenchmarkConfig("writing", robot, "ranged", 0, frames=300)
    prep = prepare_run(config, manifest)
    tasks = build_tasks(prep.model, TOLERANCES["writing"].ranges())
    out = stream_solve(prep.model, prep.goals, prep.initial_q, tasks, NO_BUDGET, dt=1 / 30)
    traj = np.array([prep.initial_q] + [r.q_star for r in out])
    steps = np.abs(np.diff(traj, axis=0))
    assert np.all(steps <= prep.model.velocity_limits * (1 / 30) * 1.5)
