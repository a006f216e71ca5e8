"""Command-line interface.

Subcommands::

    tolerant-ik solve      one solve, printed as a JSON line
    tolerant-ik bench      run a benchmark manifest, write CSV + JSON summary
    tolerant-ik dump-loss  sample a loss and its derivative as CSV

Exit codes: 0 success, 1 configuration error, 2 solve did not converge,
3 some benchmark runs failed.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np
import yaml

from . import losses as L
from .bench import runner
from .losses import GoalRange, InvalidRangeError, LossParams
from .objective import (DOF_NAMES, MODES, GoalUpdate, SolverState, TaskConfigError, build_tasks,
                        exact_tolerances, load_families, load_task_config, pose_errors)
from .robot import Pose, RobotDescriptionError, home_configuration, load_robot
from .solver import Solver, SolverError, SolverOptions

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NOT_CONVERGED = 2
EXIT_RUNS_FAILED = 3

# a solve only counts as converged when the pose is also within these of its tolerance band
REACHED_POS = 1e-3
REACHED_ROT = 1e-2

log = logging.getLogger("tolerant_ik")


class ConfigError(Exception):
    pass


def _float(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None


def _parse_tolerance(text: str) -> tuple[int, float, float]:
    """``DOF=LO:HI`` (e.g. ``rz=-inf:inf``) or ``DOF=H`` for a symmetric band."""
    try:
        dof, bounds = text.split("=", 1)
        dof = dof.strip().lower()
        if ":" in bounds:
            lo, hi = (float(b) for b in bounds.split(":", 1))
        else:
            hi = abs(float(bounds))
            lo = -hi
    except ValueError:
        raise argparse.ArgumentTypeError(f"tolerance must look like rx=-0.5:0.5, got {text!r}") from None
    if dof not in DOF_NAMES:
        raise argparse.ArgumentTypeError(f"unknown DoF {dof!r}; use one of {', '.join(DOF_NAMES)}")
    return DOF_NAMES.index(dof), lo, hi


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tolerant-ik", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve for one end-effector goal")
    p.add_argument("--robot", default="ur5", help="bundled robot name or YAML path")
    p.add_argument("--position", nargs=3, type=_float, required=True, metavar=("X", "Y", "Z"))
    p.add_argument("--rotation", nargs=3, type=_float, default=[0.0, 0.0, 0.0],
                   metavar=("RX", "RY", "RZ"), help="scaled-axis orientation (rad)")
    p.add_argument("--tolerance", action="append", type=_parse_tolerance, default=[],
                   metavar="DOF=LO:HI", help="pose-error band for one DoF (repeatable)")
    p.add_argument("--q0", nargs="+", type=_float, help="seed configuration (default: robot home)")
    p.add_argument("--tasks", help="task list YAML (default: the mode's standard task set)")
    p.add_argument("--loss-params", help="YAML overriding loss parameters per task family")
    p.add_argument("--mode", choices=MODES, default="ranged")
    p.add_argument("--dt", type=_float, default=1.0, help="history step for the smoothness terms (s)")
    p.add_argument("--max-iterations", type=int, default=500)
    p.add_argument("--time-budget", type=_float, default=math.inf, help="seconds (default: none)")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("bench", help="run benchmark streams")
    p.add_argument("--manifest", help="benchmark manifest YAML (default: bundled)")
    p.add_argument("--out", default="bench_out", help="output directory")
    p.add_argument("--robot", action="append", help="restrict to robot(s)")
    p.add_argument("--app", action="append", help="restrict to application(s)")
    p.add_argument("--mode", action="append", choices=MODES, help="restrict to mode(s)")
    p.add_argument("--seed", action="append", type=int, help="restrict to seed(s)")
    p.add_argument("--frames", type=int, help="override frames per run")
    p.add_argument("--jobs", type=int, default=1, help="parallel runs (default 1)")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("dump-loss", help="sample a loss function as CSV (x, f, df)")
    p.add_argument("kind", help="groove, swamp, swamp_groove, wall, gaussian or polynomial")
    p.add_argument("--lower", type=_float, default=-1.0)
    p.add_argument("--upper", type=_float, default=1.0)
    p.add_argument("--goal", type=_float, default=0.0, help="specific / preferred goal")
    for name in ("c", "a1", "a2"):
        p.add_argument(f"--{name}", type=_float)
    p.add_argument("--m", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--xmin", type=_float, help="default: 2x the range around its centre")
    p.add_argument("--xmax", type=_float)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--out", help="CSV path (default: standard output)")
    p.set_defaults(func=cmd_dump_loss)
    return parser


# --------------------------------------------------------------------------
# solve

def _solve_tasks(args, model, tolerances):
    families = load_families(args.loss_params) if args.loss_params else load_families()
    if args.tasks:
        return load_task_config(args.tasks, model, tolerances, families)
    return build_tasks(model, tolerances, args.mode, families)


def _reached(model, q, goal: GoalUpdate) -> bool:
    perr, rerr = pose_errors(model, q, goal.target_pose)
    for err, rng, slack in zip((*perr, *rerr), goal.tolerances, (REACHED_POS,) * 3 + (REACHED_ROT,) * 3):
        if err < rng.lower - slack or err > rng.upper + slack:
            return False
    return True


def cmd_solve(args) -> int:
    model = load_robot(args.robot)
    tol = list(exact_tolerances())
    for dof, lo, hi in args.tolerance:
        tol[dof] = GoalRange(lo, hi)
    goal = GoalUpdate(0.0, Pose.from_rotvec(args.position, args.rotation), tuple(tol))
    tasks = _solve_tasks(args, model, goal.tolerances)
    if args.q0 is not None:
        q0 = np.array(args.q0)
        if q0.shape != (model.n,):
            raise ConfigError(f"--q0 needs {model.n} values, got {q0.size}")
    else:
        home = home_configuration(args.robot)
        q0 = home if home is not None else 0.5 * (model.lower + model.upper)
    options = SolverOptions(max_iterations=args.max_iterations, max_time_budget=args.time_budget)
    result = Solver(model, tasks, options).solve(goal, SolverState.at_rest(q0, args.dt))
    reached = _reached(model, result.q_star, goal)
    perr, rerr = pose_errors(model, result.q_star, goal.target_pose)
    out = {
        "q_star": [float(v) for v in result.q_star],
        "objective_value": result.objective_value,
        "converged": bool(result.converged and reached),
        "solver_converged": bool(result.converged),
        "goal_reached": bool(reached),
        "iterations": result.iterations,
        "wall_time": result.wall_time,
        "position_error": [float(v) for v in perr],
        "rotation_error": [float(v) for v in rerr],
    }
    print(json.dumps(out))
    return EXIT_OK if out["converged"] else EXIT_NOT_CONVERGED


# --------------------------------------------------------------------------
# bench

def cmd_bench(args) -> int:
    manifest = runner.load_manifest(args.manifest)
    for key, flag in (("robots", args.robot), ("applications", args.app), ("modes", args.mode),
                      ("seeds", args.seed)):
        if flag:
            manifest[key] = flag
    if args.frames is not None:
        manifest["frames"] = args.frames
    for key in ("robots", "applications", "modes", "seeds"):
        if not manifest.get(key):
            raise ConfigError(f"manifest lists no {key}")
    configs = runner.manifest_configs(manifest)
    for robot in manifest["robots"]:
        runner.workspace_for(robot, manifest)
        load_robot(robot)
    runner.solver_options(manifest)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def progress(rec):
        c = rec.config
        status = "ok" if rec.report else f"FAILED {rec.error}"
        print(f"{c.robot} {c.application} {c.mode} seed={c.seed}: {status} ({rec.elapsed:.1f}s)",
              file=sys.stderr, flush=True)

    records = runner.run_suite(manifest, jobs=args.jobs, configs=configs, progress=progress)
    runner.write_csv(records, out / "results.csv")
    runner.write_summary(records, out / "summary.json")
    failed = sum(1 for r in records if r.report is None)
    solves = sum(r.report.frames for r in records if r.report)
    print(json.dumps({"runs": len(records), "failed": failed, "solves": solves,
                      "csv": str(out / "results.csv"), "summary": str(out / "summary.json")}))
    return EXIT_RUNS_FAILED if failed else EXIT_OK


# --------------------------------------------------------------------------
# dump-loss

_LOSS_KINDS = ("groove", "swamp", "swamp_groove", "wall", "gaussian", "polynomial")


def loss_samples(kind: str, lower: float, upper: float, goal: float, params: LossParams,
                 xmin: float, xmax: float, samples: int = 1000) -> np.ndarray:
    """(x, f(x), f'(x)) rows for one loss."""
    if kind not in _LOSS_KINDS:
        raise ConfigError(f"unknown loss kind {kind!r}; choose from {', '.join(_LOSS_KINDS)}")
    if samples < 2:
        raise ConfigError("need at least two samples")
    p = params
    rng = GoalRange(lower, upper, goal if lower <= goal <= upper else None)
    funcs = {
        "groove": (lambda x: L.groove(x, goal, p), lambda x: L.groove_derivative(x, goal, p)),
        "swamp": (lambda x: L.swamp(x, rng, p), lambda x: L.swamp_derivative(x, rng, p)),
        "swamp_groove": (lambda x: L.swamp_groove(x, rng, p),
                         lambda x: L.swamp_groove_derivative(x, rng, p)),
        "wall": (lambda x: L.wall(x, lower, upper, p.a1, p.n),
                 lambda x: L.wall_derivative(x, lower, upper, p.a1, p.n)),
        "gaussian": (lambda x: L.gaussian(x, goal, p.c), lambda x: L.gaussian_derivative(x, goal, p.c)),
        "polynomial": (lambda x: L.polynomial(x, goal, p.a2, p.m),
                       lambda x: L.polynomial_derivative(x, goal, p.a2, p.m)),
    }
    f, df = funcs[kind]
    xs = np.linspace(xmin, xmax, samples)
    return np.array([(x, f(x), df(x)) for x in xs])


def cmd_dump_loss(args) -> int:
    overrides = {k: getattr(args, k) for k in ("c", "a1", "a2", "m", "n") if getattr(args, k) is not None}
    params = LossParams(**overrides)
    if args.kind not in _LOSS_KINDS:
        raise ConfigError(f"unknown loss kind {args.kind!r}; choose from {', '.join(_LOSS_KINDS)}")
    lo, hi = args.lower, args.upper
    if math.isfinite(lo) and math.isfinite(hi):
        mid, half = 0.5 * (lo + hi), max(hi - lo, 1e-9)
    else:
        mid, half = args.goal, 1.0
    xmin = args.xmin if args.xmin is not None else mid - half
    xmax = args.xmax if args.xmax is not None else mid + half
    if not xmin < xmax:
        raise ConfigError("need xmin < xmax")
    rows = loss_samples(args.kind, lo, hi, args.goal, params, xmin, xmax, args.samples)
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["x", "f", "df"])
        for x, f, d in rows:
            writer.writerow([repr(float(x)), repr(float(f)), repr(float(d))])
    finally:
        if args.out:
            fh.close()
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except BrokenPipeError:
        return EXIT_OK
    except (ConfigError, FileNotFoundError, RobotDescriptionError, TaskConfigError,
            InvalidRangeError, ValueError, TypeError, SolverError, yaml.YAMLError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
