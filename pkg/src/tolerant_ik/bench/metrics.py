"""Motion-quality metrics for a solved goal stream."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from ..objective import pose_error_kernel
from ..robot import RobotModel, chain_kernel, jacobian_kernel, manipulability_kernel
from .paths import ToleranceSpec


@dataclass
class MetricsReport:
    """Per-run means (with standard deviations over the run's samples).

    Pose errors are averaged over the exact (zero-tolerance) DoFs only;
    ``exact_pos_dofs`` / ``exact_rot_dofs`` say how many there were.
    Joint movement is the total L1 path length in joint space.
    """

    mean_pos_error: float
    mean_rot_error: float
    mean_joint_velocity: float
    mean_joint_acceleration: float
    mean_joint_jerk: float
    mean_manipulability: float
    exceed_tolerance_count: int
    mean_joint_movement: float
    std_pos_error: float = 0.0
    std_rot_error: float = 0.0
    std_joint_velocity: float = 0.0
    std_joint_acceleration: float = 0.0
    std_joint_jerk: float = 0.0
    std_manipulability: float = 0.0
    exact_pos_dofs: int = 0
    exact_rot_dofs: int = 0
    frames: int = 0
    mean_solve_time: float = 0.0
    p95_solve_time: float = 0.0
    max_solve_time: float = 0.0

    def as_dict(self) -> dict:
        return asdict(self)


METRIC_FIELDS = tuple(f.name for f in fields(MetricsReport))
TIMING_FIELDS = ("mean_solve_time", "p95_solve_time", "max_solve_time")


def backward_differences(trajectory: np.ndarray, dt: float, initial_q=None):
    """Velocity, acceleration and jerk of every frame, shapes (T, n).

    The frames before the first one are taken to be ``initial_q`` (default:
    the first frame), i.e. the stream starts at rest.
    """
    traj = np.asarray(trajectory, dtype=float)
    q0 = traj[0] if initial_q is None else np.asarray(initial_q, dtype=float)
    padded = np.concatenate([np.repeat(q0[None], 3, axis=0), traj])
    q, q1, q2, q3 = padded[3:], padded[2:-1], padded[1:-2], padded[:-3]
    d1, d2, d3 = q - q1, q1 - q2, q2 - q3
    vel = d1 / dt
    acc = (d1 - d2) / dt ** 2
    jerk = ((d1 - d2) - (d2 - d3)) / dt ** 3
    return vel, acc, jerk


def trajectory_errors(model: RobotModel, trajectory: np.ndarray, goals) -> np.ndarray:
    """Pose error (x, y, z, rx, ry, rz) of each frame in its goal frame."""
    out = np.empty((len(goals), 6))
    for t, (q, goal) in enumerate(zip(trajectory, goals)):
        frames, _, _ = chain_kernel(model.origins, model.axes, model.ee, np.asarray(q, dtype=float))
        perr, rerr = pose_error_kernel(frames, goal.target_pose.position, goal.target_pose.rotation)
        out[t, :3] = perr
        out[t, 3:] = rerr
    return out


def trajectory_manipulability(model: RobotModel, trajectory: np.ndarray) -> np.ndarray:
    out = np.empty(len(trajectory))
    for t, q in enumerate(trajectory):
        frames, jp, ja = chain_kernel(model.origins, model.axes, model.ee, np.asarray(q, dtype=float))
        out[t] = manipulability_kernel(jacobian_kernel(frames, jp, ja), model.manipulability_rows)
    return out


def exceeded_frames(errors: np.ndarray, tolerances: ToleranceSpec) -> np.ndarray:
    """Boolean per frame: some finite non-zero tolerance is violated."""
    bounds = np.array(tolerances.bounds)
    mask = tolerances.bounded_dofs
    lo, hi = bounds[mask, 0], bounds[mask, 1]
    e = errors[:, mask]
    return np.any((e < lo) | (e > hi), axis=1)


def _mean_std(values) -> tuple[float, float]:
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return 0.0, 0.0
    return float(values.mean()), float(values.std())


def compute_metrics(model: RobotModel, trajectory, goals, tolerances: ToleranceSpec, dt: float,
                    initial_q=None) -> MetricsReport:
    """Metrics of a solved stream against its goals."""
    traj = np.asarray(trajectory, dtype=float)
    if traj.ndim != 2 or traj.shape[1] != model.n:
        raise ValueError(f"trajectory must have shape (T, {model.n})")
    if len(traj) != len(goals):
        raise ValueError(f"trajectory has {len(traj)} frames but there are {len(goals)} goals")
    if len(traj) == 0:
        raise ValueError("empty trajectory")
    errors = trajectory_errors(model, traj, goals)
    exact = tolerances.exact_dofs
    pos = np.abs(errors[:, :3][:, exact[:3]])
    rot = np.abs(errors[:, 3:][:, exact[3:]])
    vel, acc, jerk = backward_differences(traj, dt, initial_q)
    manip = trajectory_manipulability(model, traj)
    q0 = traj[0] if initial_q is None else np.asarray(initial_q, dtype=float)
    steps = np.diff(np.concatenate([q0[None], traj]), axis=0)
    report = MetricsReport(
        mean_pos_error=_mean_std(pos)[0],
        mean_rot_error=_mean_std(rot)[0],
        mean_joint_velocity=_mean_std(np.abs(vel))[0],
        mean_joint_acceleration=_mean_std(np.abs(acc))[0],
        mean_joint_jerk=_mean_std(np.abs(jerk))[0],
        mean_manipulability=_mean_std(manip)[0],
        exceed_tolerance_count=int(exceeded_frames(errors, tolerances).sum()),
        mean_joint_movement=float(np.abs(steps).sum()),
        std_pos_error=_mean_std(pos)[1],
        std_rot_error=_mean_std(rot)[1],
        std_joint_velocity=_mean_std(np.abs(vel))[1],
        std_joint_acceleration=_mean_std(np.abs(acc))[1],
        std_joint_jerk=_mean_std(np.abs(jerk))[1],
        std_manipulability=_mean_std(manip)[1],
        exact_pos_dofs=int(exact[:3].sum()),
        exact_rot_dofs=int(exact[3:].sum()),
        frames=len(traj),
    )
    for name in METRIC_FIELDS:
        if not math.isfinite(getattr(report, name)):
            raise ValueError(f"metric {name} is not finite")
    return report
