"""Benchmark runs: workspace placement, homing, streaming and reporting."""

from __future__ import annotations

import csv
import json
import math
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable

import numpy as np
import yaml

from ..objective import MODES, SolverState, build_tasks, exact_tolerances, load_families, pose_errors
from ..objective import GoalUpdate
from ..robot import Pose, end_effector_pose, load_robot
from ..rotations import matrix_to_rotvec, rotvec_to_matrix
from ..solver import Solver, SolverOptions, stream_solve
from .metrics import METRIC_FIELDS, TIMING_FIELDS, MetricsReport, compute_metrics
from .paths import APPLICATIONS, TOLERANCES, FillingDomains, Whiteboard, board_for, generate_path

REACH_POS_TOL = 1e-3
REACH_ROT_TOL = 1e-2
BOARD_SCALES = (1.0, 0.85, 0.7, 0.55, 0.4)


@dataclass(frozen=True)
class BenchmarkConfig:
    application: str
    robot: str
    mode: str
    seed: int
    frames: int = 2000
    rate: float = 30.0

    def __post_init__(self):
        if self.application not in APPLICATIONS:
            raise ValueError(f"unknown application {self.application!r}")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.frames < 2:
            raise ValueError("frames must be >= 2")
        if not self.rate > 0:
            raise ValueError("rate must be positive")


# --------------------------------------------------------------------------
# manifest

def bundled_manifest_path() -> Path:
    return Path(str(resources.files("tolerant_ik.data").joinpath("benchmarks.yaml")))


def load_manifest(path: str | Path | None = None) -> dict:
    """Read a benchmark manifest; missing keys fall back to the bundled one."""
    base = yaml.safe_load(bundled_manifest_path().read_text())
    if path is None:
        return base
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"benchmark manifest not found: {path}")
    user = yaml.safe_load(path.read_text()) or {}
    if not isinstance(user, dict):
        raise ValueError(f"benchmark manifest {path} must be a mapping")
    merged = dict(base)
    for key, value in user.items():
        if key in ("workspaces", "solver") and isinstance(value, dict):
            merged[key] = {**base.get(key, {}), **value}
        else:
            merged[key] = value
    return merged


def manifest_configs(manifest: dict) -> list[BenchmarkConfig]:
    """Every (robot, application, mode, seed) run, in a fixed order."""
    frames = int(manifest.get("frames", 2000))
    rate = float(manifest.get("rate", 30.0))
    return [BenchmarkConfig(app, robot, mode, int(seed), frames, rate)
            for robot in manifest["robots"]
            for app in manifest["applications"]
            for mode in manifest["modes"]
            for seed in manifest["seeds"]]


def solver_options(manifest: dict) -> SolverOptions:
    opts = dict(manifest.get("solver") or {})
    if "max_time_budget" in opts:
        opts["max_time_budget"] = float(opts["max_time_budget"])
    return SolverOptions(**opts)


@dataclass(frozen=True)
class Workspace:
    home: tuple[float, ...]
    board: Whiteboard
    domains: FillingDomains


def workspace_for(robot: str, manifest: dict) -> Workspace:
    try:
        ws = manifest["workspaces"][robot]
    except KeyError:
        raise ValueError(f"manifest has no workspace for robot {robot!r}") from None
    b = ws.get("board", {})
    f = ws.get("filling", {})
    board = Whiteboard(np.array(b.get("center", [0.5, 0.0, 0.3]), dtype=float), 0.0,
                       float(b.get("width", 0.6)), float(b.get("height", 0.4)))
    domains = FillingDomains(np.array(f["cup"], dtype=float), np.array(f["faucet"], dtype=float),
                             np.array(f["final"], dtype=float), float(f.get("size", 0.2)))
    return Workspace(tuple(float(v) for v in ws["home"]), board, domains)


# --------------------------------------------------------------------------
# reaching poses from a home configuration

_POSE_OPTIONS = SolverOptions(max_iterations=300, gradient_tolerance=1e-9, max_time_budget=math.inf)


def _interpolate(a: Pose, b: Pose, s: float) -> Pose:
    rel = matrix_to_rotvec(a.rotation.T @ b.rotation)
    return Pose(a.position + s * (b.position - a.position), a.rotation @ rotvec_to_matrix(s * rel))


def _pose_solver(model) -> Solver:
    return Solver(model, build_tasks(model, exact_tolerances(), "trac"), _POSE_OPTIONS)


def reach_pose(model, q_start, target: Pose, steps: int = 20, solver: Solver | None = None,
               damped: Solver | None = None):
    """Move from ``q_start`` to an exact pose by following the straight
    interpolation between the start and target poses.

    Each intermediate pose is solved with the full exact-pose task set
    (its smoothness terms keep every step small, which also settles the
    redundancy of a 7-joint arm near where it started), then the final
    pose is polished with pose terms only.
    Returns ``(q, position_error_norm, rotation_error_norm)``.
    """
    solver = solver or _pose_solver(model)
    damped = damped or Solver(model, build_tasks(model, exact_tolerances(), "relaxed"), _POSE_OPTIONS)
    q = np.asarray(q_start, dtype=float)
    start = end_effector_pose(model, q)
    tol = exact_tolerances()
    for k in range(1, steps + 1):
        goal = GoalUpdate(0.0, _interpolate(start, target, k / steps), tol)
        q = damped.solve(goal, SolverState.at_rest(q, 1.0 / 30.0)).q_star
    q = solver.solve(GoalUpdate(0.0, target, tol), SolverState.at_rest(q, 1.0)).q_star
    perr, rerr = pose_errors(model, q, target)
    return q, float(np.linalg.norm(perr)), float(np.linalg.norm(rerr))


def board_check_points(board: Whiteboard) -> np.ndarray:
    hw, hh = board.width / 2, board.height / 2
    uv = [(u, v) for v in (-hh, 0.0, hh) for u in (-hw, 0.0, hw)]
    return board.point(*np.array(uv).T)


def fit_board_scale(model, home, board: Whiteboard, scales=BOARD_SCALES) -> float:
    """Largest scale at which the centre, edges and corners are reachable."""
    solver = _pose_solver(model)
    damped = Solver(model, build_tasks(model, exact_tolerances(), "relaxed"), _POSE_OPTIONS)
    rot = board.tool_rotation
    q_center, pe, re = reach_pose(model, home, Pose(board.center, rot), solver=solver, damped=damped)
    if pe > REACH_POS_TOL or re > REACH_ROT_TOL:
        return scales[-1]
    for s in scales:
        ok = True
        for p in board_check_points(board.scaled(s)):
            _, pe, re = reach_pose(model, q_center, Pose(p, rot), steps=10, solver=solver,
                                   damped=damped)
            if pe > REACH_POS_TOL or re > REACH_ROT_TOL:
                ok = False
                break
        if ok:
            return s
    return scales[-1]


@dataclass
class PreparedRun:
    model: object
    goals: list
    initial_q: np.ndarray
    board_scale: float


_PREPARED: dict = {}


def prepare_run(config: BenchmarkConfig, manifest: dict) -> PreparedRun:
    """Goals and starting configuration shared by every mode of a seed."""
    ws = workspace_for(config.robot, manifest)
    key = (config.robot, config.application, config.seed, config.frames, config.rate,
           json.dumps(manifest["workspaces"][config.robot], sort_keys=True))
    if key in _PREPARED:
        return _PREPARED[key]
    model = load_robot(config.robot)
    scale = 1.0
    if config.application != "filling":
        scale = fit_board_scale(model, np.array(ws.home), board_for(config.application, config.seed,
                                                                     ws.board))
    goals = generate_path(config.application, config.seed, config.frames, config.rate,
                          board=ws.board, domains=ws.domains, board_scale=scale)
    q0, pe, re = reach_pose(model, np.array(ws.home), goals[0].target_pose)
    if pe > REACH_POS_TOL or re > REACH_ROT_TOL:
        raise RuntimeError(f"{config.robot} cannot reach the first goal of {config.application} "
                           f"seed {config.seed} (errors {pe:.2e} m, {re:.2e} rad)")
    prepared = PreparedRun(model, goals, q0, scale)
    if len(_PREPARED) > 64:
        _PREPARED.clear()
    _PREPARED[key] = prepared
    return prepared


# --------------------------------------------------------------------------
# runs

def run_benchmark(config: BenchmarkConfig, manifest: dict | None = None,
                  families=None) -> MetricsReport:
    """Solve one goal stream and measure it."""
    return run_stream(config, manifest, families)[0]


def run_stream(config: BenchmarkConfig, manifest: dict | None = None,
               families=None) -> tuple[MetricsReport, np.ndarray]:
    """Like :func:`run_benchmark`, also returning the per-frame solve times (s)."""
    manifest = manifest if manifest is not None else load_manifest()
    prep = prepare_run(config, manifest)
    tol = TOLERANCES[config.application]
    tasks = build_tasks(prep.model, tol.ranges(), config.mode, families or load_families())
    dt = 1.0 / config.rate
    results = stream_solve(prep.model, prep.goals, prep.initial_q, tasks, solver_options(manifest), dt)
    traj = np.array([r.q_star for r in results])
    report = compute_metrics(prep.model, traj, prep.goals, tol, dt, initial_q=prep.initial_q)
    times = np.array([r.wall_time for r in results])
    report.mean_solve_time = float(times.mean())
    report.p95_solve_time = float(np.percentile(times, 95))
    report.max_solve_time = float(times.max())
    return report, times


@dataclass
class RunRecord:
    config: BenchmarkConfig
    report: MetricsReport | None = None
    error: str | None = None
    elapsed: float = 0.0

    def row(self) -> dict:
        c = self.config
        out = {"robot": c.robot, "application": c.application, "mode": c.mode, "seed": c.seed,
               "frames": c.frames, "rate": c.rate, "status": "ok" if self.report else "failed",
               "error": self.error or ""}
        rep = self.report.as_dict() if self.report else {}
        for name in METRIC_FIELDS:
            if name != "frames":
                out[name] = rep.get(name, "")
        return out


def _run_one(args) -> RunRecord:
    config, manifest = args
    t0 = time.perf_counter()
    try:
        report = run_benchmark(config, manifest)
        return RunRecord(config, report, None, time.perf_counter() - t0)
    except Exception as exc:
        msg = f"{type(exc).__name__}: {exc}"
        if not str(exc):
            msg += " " + traceback.format_exc(limit=2)
        return RunRecord(config, None, msg, time.perf_counter() - t0)


def run_suite(manifest: dict, jobs: int = 1, configs: Iterable[BenchmarkConfig] | None = None,
              progress=None) -> list[RunRecord]:
    """Run every configuration; failures are recorded, not raised."""
    configs = list(configs) if configs is not None else manifest_configs(manifest)
    # keep the modes of one seed together so their shared setup is cached
    work = [(c, manifest) for c in configs]
    if jobs <= 1:
        records = []
        for item in work:
            rec = _run_one(item)
            if progress:
                progress(rec)
            records.append(rec)
        return records
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        records = []
        for rec in pool.map(_run_one, work):
            if progress:
                progress(rec)
            records.append(rec)
    return records


# --------------------------------------------------------------------------
# reporting

# the report's own frame count duplicates the config column
CSV_COLUMNS = ("robot", "application", "mode", "seed", "frames", "rate", "status", "error",
               *(f for f in METRIC_FIELDS if f != "frames"))


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def write_csv(records: list[RunRecord], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for rec in records:
            writer.writerow({k: _fmt(v) for k, v in rec.row().items()})


def _stats(values) -> dict:
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return {"mean": None, "std": None}
    return {"mean": float(values.mean()), "std": float(values.std())}


SUMMARY_METRICS = ("mean_pos_error", "mean_rot_error", "mean_joint_velocity",
                   "mean_joint_acceleration", "mean_joint_jerk", "mean_manipulability",
                   "mean_joint_movement")


def summarize(records: list[RunRecord]) -> dict:
    """Mean and std across runs per (robot, mode), like the comparison table.

    Pose errors only use runs that have exact DoFs of that kind; the exceed
    count is the total over runs; timing is pooled over runs.
    """
    out: dict = {}
    ok = [r for r in records if r.report is not None]
    robots = sorted({r.config.robot for r in records})
    for robot in robots:
        out[robot] = {}
        for mode in MODES:
            runs = [r.report for r in ok if r.config.robot == robot and r.config.mode == mode]
            failed = sum(1 for r in records if r.config.robot == robot and r.config.mode == mode
                         and r.report is None)
            if not runs and not failed:
                continue
            entry = {}
            for name in SUMMARY_METRICS:
                vals = [getattr(rep, name) for rep in runs]
                if name == "mean_pos_error":
                    vals = [rep.mean_pos_error for rep in runs if rep.exact_pos_dofs]
                elif name == "mean_rot_error":
                    vals = [rep.mean_rot_error for rep in runs if rep.exact_rot_dofs]
                entry[name] = _stats(vals)
            entry["exceed_tolerance_count"] = int(sum(rep.exceed_tolerance_count for rep in runs))
            frames = np.array([rep.frames for rep in runs], dtype=float)
            if runs:
                entry["mean_solve_time"] = float(np.average([rep.mean_solve_time for rep in runs],
                                                            weights=frames))
                entry["max_p95_solve_time"] = float(max(rep.p95_solve_time for rep in runs))
            entry["runs"] = len(runs)
            entry["failed"] = failed
            entry["solves"] = int(frames.sum())
            out[robot][mode] = entry
    return out


def write_summary(records: list[RunRecord], path: str | Path) -> dict:
    summary = summarize(records)
    Path(path).write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary


__all__ = ["BenchmarkConfig", "CSV_COLUMNS", "PreparedRun", "RunRecord", "TIMING_FIELDS",
           "Workspace", "fit_board_scale", "load_manifest", "manifest_configs", "prepare_run",
           "reach_pose", "run_benchmark", "run_suite", "solver_options", "summarize",
           "workspace_for", "write_csv", "write_summary"]
