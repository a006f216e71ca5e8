import csv
import io
import json
import math
from contextlib import redirect_stdout

import numpy as np
import pytest

from oracles import ref_swamp
from tolerant_ik.bench.metrics import TIMING_FIELDS
from tolerant_ik.cli import build_parser, loss_samples, main
from tolerant_ik.losses import GoalRange, LossParams
from tolerant_ik.robot import end_effector_pose, home_configuration, load_robot


def run(argv):
    buf = io.StringIO()
    with redirect_stdout(buf):
        code = main(argv)
    return code, buf.getvalue()


def read_loss_csv(text):
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == ["x", "f", "df"]
    return np.array(rows[1:], dtype=float)


# ---------------------------------------------------------------- solve

def test_solve_reachable_goal():
    model = load_robot("ur5")
    pose = end_effector_pose(model, home_configuration("ur5") + 0.1)
    rv = pose.rotvec()
    code, out = run(["solve", "--robot", "ur5", "--position", *map(str, pose.position),
                     "--rotation", *map(str, rv)])
    result = json.loads(out)
    assert code == 0
    assert result["converged"] is True
    assert np.linalg.norm(result["position_error"]) < 1e-3


def test_solve_unreachable_goal():
    model = load_robot("ur5")
    code, out = run(["solve", "--robot", "ur5", "--position", "5", "0", "0", "--max-iterations", "100"])
    result = json.loads(out)
    assert code == 2
    assert result["converged"] is False
    q = np.array(result["q_star"])
    assert np.all(q >= model.lower) and np.all(q <= model.upper)


def test_solve_with_tolerance():
    model = load_robot("ur5")
    pose = end_effector_pose(model, home_configuration("ur5"))
    code, out = run(["solve", "--position", *map(str, pose.position), "--rotation",
                     *map(str, pose.rotvec()), "--tolerance", "rz=-inf:inf", "--tolerance", "x=0.05"])
    assert code == 0 and json.loads(out)["goal_reached"]


def test_solve_missing_robot_file(tmp_path, capsys):
    path = tmp_path / "missing_robot.yaml"
    code = main(["solve", "--robot", str(path), "--position", "0.3", "0", "0.3"])
    assert code == 1
    assert "missing_robot.yaml" in capsys.readouterr().err


def test_solve_bad_seed_length(capsys):
    code = main(["solve", "--position", "0.3", "0", "0.3", "--q0", "0", "0"])
    assert code == 1
    assert "--q0" in capsys.readouterr().err


def test_bad_tolerance_flag():
    with pytest.raises(SystemExit):
        build_parser().parse_args(["solve", "--position", "0", "0", "0", "--tolerance", "w=1"])


# ---------------------------------------------------------------- bench

def _bench(out_dir):
    return run(["bench", "--out", str(out_dir), "--robot", "ur5", "--app", "spraying",
                "--seed", "0", "--seed", "1", "--frames", "20"])


def _rows(path):
    return list(csv.DictReader(path.open()))


def test_bench_small_grid(tmp_path):
    code, out = _bench(tmp_path / "a")
    assert code == 0
    info = json.loads(out)
    assert info["runs"] == 6 and info["failed"] == 0 and info["solves"] == 120
    rows = _rows(tmp_path / "a" / "results.csv")
    assert len(rows) == 6
    assert {r["mode"] for r in rows} == {"ranged", "relaxed", "trac"}
    summary = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert summary["ur5"]["trac"]["runs"] == 2

    code, _ = _bench(tmp_path / "b")
    again = _rows(tmp_path / "b" / "results.csv")
    for r in rows + again:
        for key in TIMING_FIELDS:
            r.pop(key)
    assert rows == again


def test_bench_unknown_robot(tmp_path, capsys):
    code = main(["bench", "--out", str(tmp_path), "--robot", "kuka", "--frames", "5"])
    assert code == 1
    assert "kuka" in capsys.readouterr().err


# ---------------------------------------------------------------- dump-loss

def test_dump_groove_minimum():
    code, out = run(["dump-loss", "groove", "--goal", "0", "--xmin", "-1", "--xmax", "1",
                     "--samples", "201"])
    assert code == 0
    rows = read_loss_csv(out)
    k = np.argmin(rows[:, 1])
    assert rows[k, 0] == pytest.approx(0.0, abs=1e-12)
    assert rows[k, 1] == pytest.approx(-1.0, abs=1e-12)
    assert rows[k, 2] == pytest.approx(0.0, abs=1e-12)


def test_dump_swamp_matches_formula(tmp_path):
    path = tmp_path / "swamp.csv"
    code, _ = run(["dump-loss", "swamp", "--lower", "-1", "--upper", "1", "--xmin", "-2",
                   "--xmax", "2", "--samples", "401", "--out", str(path)])
    assert code == 0
    rows = read_loss_csv(path.read_text())
    assert len(rows) == 401
    p = LossParams()
    for x in (-1.0, 1.0):
        (k,) = np.flatnonzero(np.isclose(rows[:, 0], x, atol=1e-12))
        assert rows[k, 1] == pytest.approx(ref_swamp(x, -1.0, 1.0, p.a1, p.a2, p.m, p.n), rel=1e-12)


def test_dump_wall_height_at_bounds():
    code, out = run(["dump-loss", "wall", "--n", "2", "--a1", "10", "--lower", "-1", "--upper", "1",
                     "--samples", "5"])
    rows = read_loss_csv(out)
    # default window is [-2, 2]; samples land on -1 and 1
    assert rows[1, 0] == -1.0 and rows[3, 0] == 1.0
    assert rows[1, 1] == pytest.approx(9.5, abs=1e-12)
    assert rows[3, 1] == pytest.approx(9.5, abs=1e-12)


def test_dump_invalid_kind(capsys):
    assert main(["dump-loss", "sombrero"]) == 1
    assert "sombrero" in capsys.readouterr().err


def test_dump_invalid_window(capsys):
    assert main(["dump-loss", "groove", "--xmin", "1", "--xmax", "0"]) == 1


def test_loss_samples_derivative_column():
    rows = loss_samples("polynomial", -1, 1, 0.5, LossParams(a2=3.0, m=2), -1.0, 1.0, 11)
    assert np.allclose(rows[:, 2], 6.0 * (rows[:, 0] - 0.5), atol=1e-12)
    assert math.isclose(rows[5, 1], 0.75, abs_tol=1e-12)
