import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from tolerant_ik.bench.metrics import METRIC_FIELDS, backward_differences, compute_metrics
from tolerant_ik.bench.paths import TOLERANCES, ToleranceSpec
from tolerant_ik.objective import GoalUpdate
from tolerant_ik.robot import Pose, end_effector_pose, load_robot

EXACT = ToleranceSpec(((0.0, 0.0),) * 6)


def goals_for(model, traj, tol=EXACT, offsets=None):
    """Goals equal to the FK of ``traj``, shifted by tool-frame ``offsets``."""
    out = []
    for k, q in enumerate(traj):
        pose = end_effector_pose(model, q)
        p = pose.position
        if offsets is not None:
            p = p - pose.rotation @ offsets[k]
        out.append(GoalUpdate(k / 30, Pose(p, pose.rotation), tol.ranges()))
    return out


def test_static_trajectory(ur5):
    q = np.array([0.1, -1.0, 1.2, -0.5, 0.3, 0.2])
    traj = np.repeat(q[None], 20, axis=0)
    rep = compute_metrics(ur5, traj, goals_for(ur5, traj), EXACT, 1 / 30)
    assert rep.mean_joint_velocity == 0.0
    assert rep.mean_joint_acceleration == 0.0
    assert rep.mean_joint_jerk == 0.0
    assert rep.mean_joint_movement == 0.0
    assert rep.mean_pos_error == pytest.approx(0.0, abs=1e-15)
    assert rep.exceed_tolerance_count == 0
    assert rep.frames == 20


def test_hand_built_three_frames(planar):
    traj = np.array([[0.0, math.pi / 2], [0.1, math.pi / 2], [0.3, math.pi / 2]])
    initial = np.array([0.0, math.pi / 2])
    rep = compute_metrics(planar, traj, goals_for(planar, traj), EXACT, 0.5, initial_q=initial)
    # joint 0 velocities 0, 0.2, 0.4; accelerations 0, 0.4, 0.4; jerks 0, 0.8, 0
    assert rep.mean_joint_velocity == pytest.approx(0.6 / 6, abs=1e-12)
    assert rep.mean_joint_acceleration == pytest.approx(0.8 / 6, abs=1e-12)
    assert rep.mean_joint_jerk == pytest.approx(0.8 / 6, abs=1e-12)
    assert rep.mean_joint_movement == pytest.approx(0.3, abs=1e-15)
    assert rep.mean_manipulability == pytest.approx(1.0, abs=1e-12)
    assert rep.std_joint_velocity == pytest.approx(np.std([0, 0.2, 0.4, 0, 0, 0]), abs=1e-12)


def test_movement_counts_first_step(planar):
    traj = np.array([[0.2, 1.0], [0.2, 1.0]])
    rep = compute_metrics(planar, traj, goals_for(planar, traj), EXACT, 0.1, initial_q=[0.0, 0.5])
    assert rep.mean_joint_movement == pytest.approx(0.7)


def test_backward_differences_match_polynomial():
    dt = 0.1
    t = np.arange(1, 8) * dt
    traj = (t ** 3)[:, None]
    vel, acc, jerk = backward_differences(traj, dt, initial_q=[0.0])
    # third backward difference of t^3 is exactly 6 dt^3 once the history is real
    assert np.allclose(jerk[3:, 0], 6.0, atol=1e-8)


def test_position_error_mean(ur5):
    q = np.array([0.1, -1.0, 1.2, -0.5, 0.3, 0.2])
    traj = np.repeat(q[None], 4, axis=0)
    offsets = np.zeros((4, 3))
    offsets[1] = [0.01, 0.0, -0.02]
    rep = compute_metrics(ur5, traj, goals_for(ur5, traj, offsets=offsets), EXACT, 1 / 30)
    assert rep.mean_pos_error == pytest.approx(0.03 / 12, abs=1e-12)


def test_threshold_crossing(ur5):
    q = np.array([0.1, -1.0, 1.2, -0.5, 0.3, 0.2])
    traj = np.repeat(q[None], 3, axis=0)
    tol = TOLERANCES["spraying"]
    offsets = np.zeros((3, 3))
    offsets[1, 0] = 0.04
    assert compute_metrics(ur5, traj, goals_for(ur5, traj, tol, offsets), tol, 1 / 30).exceed_tolerance_count == 0
    offsets[1, 0] = 0.06
    offsets[2, 1] = -0.06
    rep = compute_metrics(ur5, traj, goals_for(ur5, traj, tol, offsets), tol, 1 / 30)
    assert rep.exceed_tolerance_count == 2


def test_masking(ur5):
    # moving along a toleranced DoF inside its bound leaves the exact-DoF error unchanged
    q = np.array([0.1, -1.0, 1.2, -0.5, 0.3, 0.2])
    traj = np.repeat(q[None], 5, axis=0)
    tol = TOLERANCES["filling"]  # x and z toleranced, y exact
    base = np.zeros((5, 3))
    base[:, 1] = [0.001, 0.002, 0.0, -0.003, 0.0]
    moved = base.copy()
    moved[:, 0] = [0.01, -0.04, 0.0, 0.03, 0.049]
    moved[:, 2] = [0.02, 0.0, -0.05, 0.0, 0.01]
    a = compute_metrics(ur5, traj, goals_for(ur5, traj, tol, base), tol, 1 / 30)
    b = compute_metrics(ur5, traj, goals_for(ur5, traj, tol, moved), tol, 1 / 30)
    assert a.mean_pos_error == pytest.approx(b.mean_pos_error, abs=1e-15)
    assert a.mean_pos_error == pytest.approx(0.006 / 5, abs=1e-12)
    assert b.exceed_tolerance_count == 0
    assert a.exact_pos_dofs == 1 and a.exact_rot_dofs == 2


def _recount(model, traj, goals, tol):
    """Exceedances from raw FK, using scipy for the rotation error."""
    count = 0
    b = np.array(tol.bounds)
    for q, goal in zip(traj, goals):
        pose = end_effector_pose(model, q)
        Rg = goal.target_pose.rotation
        e = np.concatenate([Rg.T @ (pose.position - goal.target_pose.position),
                            Rotation.from_matrix(Rg.T @ pose.rotation).as_rotvec()])
        bad = False
        for k in range(6):
            lo, hi = b[k]
            if (lo, hi) == (0.0, 0.0) or not (math.isfinite(lo) or math.isfinite(hi)):
                continue
            bad |= not (lo <= e[k] <= hi)
        count += bad
    return count


@given(st.integers(0, 2**31), st.sampled_from(["writing", "spraying", "filling"]))
def test_violation_recount(seed, app):
    rng = np.random.default_rng(seed)
    model = load_robot("ur5")
    tol = TOLERANCES[app]
    traj = rng.uniform(-2, 2, (15, 6))
    goals = []
    for k, q in enumerate(traj):
        pose = end_effector_pose(model, q + rng.normal(0, 0.05, 6))
        goals.append(GoalUpdate(k / 30, pose, tol.ranges()))
    rep = compute_metrics(model, traj, goals, tol, 1 / 30)
    assert rep.exceed_tolerance_count == _recount(model, traj, goals, tol)


def test_report_fields_finite(ur5, rng):
    traj = rng.uniform(-1, 1, (10, 6))
    rep = compute_metrics(ur5, traj, goals_for(ur5, traj), EXACT, 1 / 30)
    for name in METRIC_FIELDS:
        assert math.isfinite(getattr(rep, name))
    assert set(rep.as_dict()) == set(METRIC_FIELDS)


def test_length_mismatch(ur5):
    traj = np.zeros((3, 6))
    with pytest.raises(ValueError, match="frames"):
        compute_metrics(ur5, traj, goals_for(ur5, traj)[:2], EXACT, 1 / 30)
    with pytest.raises(ValueError):
        compute_metrics(ur5, np.zeros((3, 5)), goals_for(ur5, traj), EXACT, 1 / 30)
