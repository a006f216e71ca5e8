import csv
import json
import math

import numpy as np
import pytest
import yaml

from tolerant_ik.bench import BenchmarkConfig, load_manifest, run_benchmark, run_suite
from tolerant_ik.bench.metrics import TIMING_FIELDS
from tolerant_ik.bench.runner import (
    CSV_COLUMNS,
    manifest_configs,
    prepare_run,
    reach_pose,
    solver_options,
    summarize,
    workspace_for,
    write_csv,
    write_summary,
)
from tolerant_ik.objective import pose_errors
from tolerant_ik.robot import end_effector_pose, load_robot


def small(app="writing", robot="ur5", mode="ranged", seed=0, frames=40):
    return BenchmarkConfig(app, robot, mode, seed, frames)


def test_config_validation():
    with pytest.raises(ValueError):
        BenchmarkConfig("writing", "ur5", "ranged", 0, frames=1)
    with pytest.raises(ValueError):
        BenchmarkConfig("writing", "ur5", "ranged", 0, rate=0.0)
    with pytest.raises(ValueError):
        BenchmarkConfig("drawing", "ur5", "ranged", 0)
    with pytest.raises(ValueError):
        BenchmarkConfig("writing", "ur5", "exact", 0)


def test_bundled_manifest_scale():
    manifest = load_manifest()
    configs = manifest_configs(manifest)
    # 2 robots x 4 applications x 3 modes x 10 seeds, 2000 frames each
    assert len(configs) == 240
    assert sum(c.frames for c in configs) == 480_000
    assert {c.rate for c in configs} == {30.0}


def test_manifest_override(tmp_path):
    path = tmp_path / "m.yaml"
    path.write_text(yaml.safe_dump({"robots": ["ur5"], "seeds": [4], "solver": {"max_iterations": 7}}))
    manifest = load_manifest(path)
    assert manifest["robots"] == ["ur5"] and manifest["seeds"] == [4]
    assert solver_options(manifest).max_iterations == 7
    assert solver_options(manifest).gradient_tolerance == 1e-5
    assert "sawyer" in manifest["workspaces"]


def test_manifest_missing(tmp_path):
    with pytest.raises(FileNotFoundError, match="nope.yaml"):
        load_manifest(tmp_path / "nope.yaml")


def test_workspace_unknown_robot():
    with pytest.raises(ValueError, match="kuka"):
        workspace_for("kuka", load_manifest())


@pytest.mark.parametrize("robot", ["ur5", "sawyer"])
def test_reach_pose_from_home(robot):
    manifest = load_manifest()
    ws = workspace_for(robot, manifest)
    model = load_robot(robot)
    home = np.array(ws.home)
    target = end_effector_pose(model, home + 0.15)
    q, pe, re = reach_pose(model, home, target)
    assert pe < 1e-6 and re < 1e-6
    p, r = pose_errors(model, q, target)
    assert np.linalg.norm(p) == pytest.approx(pe)


@pytest.mark.parametrize("robot", ["ur5", "sawyer"])
@pytest.mark.parametrize("app", ["writing", "spraying", "wiping", "filling"])
def test_first_goal_is_reached(robot, app):
    prep = prepare_run(small(app, robot), load_manifest())
    p, r = pose_errors(prep.model, prep.initial_q, prep.goals[0].target_pose)
    assert np.linalg.norm(p) < 1e-3 and np.linalg.norm(r) < 1e-2
    assert 0.0 < prep.board_scale <= 1.0


def test_seed_determinism():
    a = run_benchmark(small(seed=1))
    b = run_benchmark(small(seed=1))
    da, db = a.as_dict(), b.as_dict()
    for key in TIMING_FIELDS:
        da.pop(key), db.pop(key)
    assert da == db


def test_modes_share_goals():
    manifest = load_manifest()
    preps = [prepare_run(small(mode=m), manifest) for m in ("ranged", "relaxed", "trac")]
    assert preps[0] is preps[1] is preps[2]


def test_report_shape():
    rep = run_benchmark(small(app="spraying", mode="trac"))
    assert rep.frames == 40
    assert rep.exact_pos_dofs == 1 and rep.exact_rot_dofs == 3
    assert rep.exceed_tolerance_count >= 0
    assert rep.mean_solve_time > 0 and rep.p95_solve_time <= rep.max_solve_time


def test_suite_records_failures(tmp_path):
    manifest = load_manifest()
    manifest = dict(manifest, workspaces={"ur5": manifest["workspaces"]["ur5"]})
    configs = [small(frames=10), small(robot="sawyer", frames=10)]
    seen = []
    records = run_suite(manifest, configs=configs, progress=seen.append)
    assert len(seen) == 2
    assert records[0].report is not None and records[0].error is None
    assert records[1].report is None and "sawyer" in records[1].error

    path = tmp_path / "results.csv"
    write_csv(records, path)
    rows = list(csv.DictReader(path.open()))
    assert list(rows[0]) == list(CSV_COLUMNS)
    assert [r["status"] for r in rows] == ["ok", "failed"]

    summary = write_summary(records, tmp_path / "summary.json")
    assert json.loads((tmp_path / "summary.json").read_text()) == summary
    assert summary["ur5"]["ranged"]["runs"] == 1
    assert summary["sawyer"]["ranged"]["failed"] == 1


def test_summary_statistics():
    records = run_suite(load_manifest(), configs=[small(seed=s, frames=10) for s in (0, 1)])
    summary = summarize(records)["ur5"]["ranged"]
    jerks = [r.report.mean_joint_jerk for r in records]
    assert summary["mean_joint_jerk"]["mean"] == pytest.approx(np.mean(jerks))
    assert summary["mean_joint_jerk"]["std"] == pytest.approx(np.std(jerks))
    assert summary["solves"] == 20
    # writing has exact position DoFs but no exact rotation DoFs
    assert summary["mean_rot_error"]["mean"] is None
    assert math.isfinite(summary["mean_pos_error"]["mean"])
