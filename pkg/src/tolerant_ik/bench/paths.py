"""Goal streams for the four tolerance benchmarks.

Writing, spraying and wiping happen on a whiteboard in front of the robot
whose facing angle is drawn from [0, pi/2] (0 = vertical, pi/2 =
horizontal).  Filling moves a cup between three sampled cube-shaped
domains.  Every segment is timed with a minimum-jerk profile so goal
velocities are continuous.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..losses import GoalRange
from ..objective import GoalUpdate
from ..robot import Pose

APPLICATIONS = ("writing", "spraying", "wiping", "filling")
_APP_STREAM = {name: i for i, name in enumerate(APPLICATIONS)}

INF = math.inf


@dataclass(frozen=True)
class ToleranceSpec:
    """Per-DoF pose-error bounds (x, y, z, rx, ry, rz) in the goal frame."""

    bounds: tuple[tuple[float, float], ...]

    def __post_init__(self):
        b = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        if len(b) != 6:
            raise ValueError("six tolerance bounds are required")
        for lo, hi in b:
            if not lo <= 0.0 <= hi:
                raise ValueError(f"tolerance [{lo}, {hi}] must contain zero")
        object.__setattr__(self, "bounds", b)

    @classmethod
    def symmetric(cls, half_widths) -> ToleranceSpec:
        return cls(tuple((-abs(h), abs(h)) for h in half_widths))

    def ranges(self) -> tuple[GoalRange, ...]:
        return tuple(GoalRange(lo, hi) for lo, hi in self.bounds)

    @property
    def exact_dofs(self) -> np.ndarray:
        return np.array([lo == 0.0 and hi == 0.0 for lo, hi in self.bounds])

    @property
    def bounded_dofs(self) -> np.ndarray:
        """DoFs with a finite, non-zero tolerance (the ones that can be exceeded)."""
        return np.array([not (lo == 0.0 and hi == 0.0) and (math.isfinite(lo) or math.isfinite(hi))
                         for lo, hi in self.bounds])


TOLERANCES = {
    "writing": ToleranceSpec.symmetric([0, 0, 0, math.pi / 6, math.pi / 6, INF]),
    "spraying": ToleranceSpec.symmetric([0.05, 0.05, 0, 0, 0, 0]),
    "wiping": ToleranceSpec.symmetric([0, 0, 0, 0, 0, INF]),
    "filling": ToleranceSpec.symmetric([0.05, 0, 0.05, 0, INF, 0]),
}


@dataclass(frozen=True)
class Whiteboard:
    """A rectangle centred at ``center`` tilted by ``facing_angle`` about y.

    Board coordinates (u, v) run along the board width (world y) and height.
    The tool frame looks into the board: z against the board normal, x
    along the board's "up" direction.
    """

    center: np.ndarray
    facing_angle: float
    width: float = 0.6
    height: float = 0.4

    @property
    def u_axis(self) -> np.ndarray:
        return np.array([0.0, 1.0, 0.0])

    @property
    def v_axis(self) -> np.ndarray:
        phi = self.facing_angle
        return np.array([math.sin(phi), 0.0, math.cos(phi)])

    @property
    def normal(self) -> np.ndarray:
        phi = self.facing_angle
        return np.array([-math.cos(phi), 0.0, math.sin(phi)])

    @property
    def tool_rotation(self) -> np.ndarray:
        x = self.v_axis
        z = -self.normal
        return np.column_stack([x, np.cross(z, x), z])

    def point(self, u, v) -> np.ndarray:
        """World points for board coordinates; ``u``, ``v`` broadcast."""
        u = np.asarray(u, dtype=float)[..., None]
        v = np.asarray(v, dtype=float)[..., None]
        return self.center + u * self.u_axis + v * self.v_axis

    def sample_uv(self, rng: np.random.Generator, size) -> np.ndarray:
        lo = np.array([-self.width / 2, -self.height / 2])
        return rng.uniform(lo, -lo, size=(*np.atleast_1d(size), 2))

    def scaled(self, factor: float) -> Whiteboard:
        return Whiteboard(self.center, self.facing_angle, self.width * factor, self.height * factor)


def minimum_jerk(tau):
    """Minimum-jerk phase 10 t^3 - 15 t^4 + 6 t^5 on [0, 1]."""
    tau = np.clip(np.asarray(tau, dtype=float), 0.0, 1.0)
    return tau ** 3 * (10.0 - 15.0 * tau + 6.0 * tau ** 2)


def _split(frames: int, weights) -> list[int]:
    """Split ``frames`` into integer chunks proportional to ``weights``."""
    w = np.asarray(weights, dtype=float)
    raw = frames * w / w.sum()
    counts = np.floor(raw).astype(int)
    for i in np.argsort(-(raw - counts), kind="stable")[: frames - counts.sum()]:
        counts[i] += 1
    return [int(c) for c in counts]


def _phase(count: int) -> np.ndarray:
    """Minimum-jerk phase at ``count`` samples ending exactly at 1."""
    if count <= 0:
        return np.zeros(0)
    return minimum_jerk(np.arange(1, count + 1) / count)


def piecewise_linear(waypoints: np.ndarray, frames: int, weights=None) -> np.ndarray:
    """``frames`` samples along straight segments between waypoints.

    The first sample is the first waypoint; each segment is traversed with
    a minimum-jerk phase so the stream starts and stops at rest.
    """
    waypoints = np.asarray(waypoints, dtype=float)
    if weights is None:
        weights = np.linalg.norm(np.diff(waypoints, axis=0), axis=1) + 1e-9
    counts = _split(frames - 1, weights)
    out = [waypoints[:1]]
    for k, cnt in enumerate(counts):
        s = _phase(cnt)[:, None]
        out.append(waypoints[k] + s * (waypoints[k + 1] - waypoints[k]))
    return np.concatenate(out)


def cubic_bezier(ctrl: np.ndarray, t) -> np.ndarray:
    t = np.asarray(t, dtype=float)[:, None]
    s = 1.0 - t
    return s ** 3 * ctrl[0] + 3 * s ** 2 * t * ctrl[1] + 3 * s * t ** 2 * ctrl[2] + t ** 3 * ctrl[3]


def app_rng(seed: int, application: str) -> np.random.Generator:
    return np.random.default_rng([int(seed), _APP_STREAM[application]])


def sample_facing_angle(rng: np.random.Generator) -> float:
    return float(rng.uniform(0.0, math.pi / 2))


def _goals(positions, rotation, tolerances: ToleranceSpec, rate: float) -> list[GoalUpdate]:
    tol = tolerances.ranges()
    return [GoalUpdate(k / rate, Pose(p, rotation), tol) for k, p in enumerate(positions)]


def writing_positions(board: Whiteboard, rng: np.random.Generator, frames: int,
                      curves: int = 5) -> np.ndarray:
    """Five chained cubic Bezier curves with control points on the board."""
    uv = board.sample_uv(rng, 3 * curves + 1)
    counts = _split(frames - 1, np.ones(curves))
    out = [uv[:1]]
    for k in range(curves):
        ctrl = uv[3 * k: 3 * k + 4]
        out.append(cubic_bezier(ctrl, _phase(counts[k])))
    return board.point(*np.concatenate(out).T)


def spraying_positions(board: Whiteboard, rng: np.random.Generator, frames: int,
                       spots: int = 10) -> np.ndarray:
    uv = board.sample_uv(rng, spots)
    return board.point(*piecewise_linear(uv, frames).T)


def lawnmower_uv(board: Whiteboard, legs: int = 5) -> np.ndarray:
    """Boustrophedon waypoints: ``legs`` sweeps along u, stepping down in v."""
    hw, hh = board.width / 2, board.height / 2
    pts = []
    for k, v in enumerate(np.linspace(hh, -hh, legs)):
        us = (-hw, hw) if k % 2 == 0 else (hw, -hw)
        pts += [(us[0], v), (us[1], v)]
    return np.array(pts)


def wiping_positions(board: Whiteboard, frames: int, legs: int = 5) -> np.ndarray:
    return board.point(*piecewise_linear(lawnmower_uv(board, legs), frames).T)


@dataclass(frozen=True)
class FillingDomains:
    """Centres of the cup, faucet and drop-off cubes (edge ``size``)."""

    cup: np.ndarray
    faucet: np.ndarray
    final: np.ndarray
    size: float = 0.2

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        centers = np.stack([self.cup, self.faucet, self.final])
        return centers + rng.uniform(-self.size / 2, self.size / 2, size=(3, 3))


# cup upright: tool y along world z, tool z pointing away from the robot
FILLING_ROTATION = np.column_stack([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]])


def filling_positions(waypoints: np.ndarray, frames: int) -> np.ndarray:
    """Pick up, move under the faucet, wait while filling, place the cup."""
    cup, faucet, final = waypoints
    pts = np.stack([cup, cup, faucet, faucet, final, final])
    return piecewise_linear(pts, frames, weights=[0.05, 0.35, 0.2, 0.35, 0.05])


def generate_path(application: str, seed: int, frames: int = 2000, rate: float = 30.0, *,
                  board: Whiteboard | None = None, domains: FillingDomains | None = None,
                  board_scale: float = 1.0) -> list[GoalUpdate]:
    """Goal stream for one benchmark application.

    ``board`` supplies the whiteboard placement; its facing angle is
    replaced by one drawn from the seed.  ``board_scale`` shrinks the board
    about its centre (used to fit a robot's workspace).
    """
    if frames < 2:
        raise ValueError("a path needs at least two frames")
    if application not in APPLICATIONS:
        raise ValueError(f"unknown application {application!r}")
    rng = app_rng(seed, application)
    tol = TOLERANCES[application]
    if application == "filling":
        domains = domains or FillingDomains(np.array([0.45, -0.25, 0.15]), np.array([0.5, 0.0, 0.35]),
                                            np.array([0.45, 0.25, 0.15]))
        return _goals(filling_positions(domains.sample(rng), frames), FILLING_ROTATION, tol, rate)
    base = board or Whiteboard(np.array([0.5, 0.0, 0.3]), 0.0)
    wb = Whiteboard(base.center, sample_facing_angle(rng), base.width, base.height).scaled(board_scale)
    if application == "writing":
        pos = writing_positions(wb, rng, frames)
    elif application == "spraying":
        pos = spraying_positions(wb, rng, frames)
    else:
        pos = wiping_positions(wb, frames)
    return _goals(pos, wb.tool_rotation, tol, rate)


def board_for(application: str, seed: int, board: Whiteboard) -> Whiteboard:
    """The whiteboard (with its sampled facing angle) used by a path."""
    rng = app_rng(seed, application)
    return Whiteboard(board.center, sample_facing_angle(rng), board.width, board.height)


def gen_writing_path(seed, frames=2000, **kw):
    return generate_path("writing", seed, frames, **kw)


def gen_spraying_path(seed, frames=2000, **kw):
    return generate_path("spraying", seed, frames, **kw)


def gen_wiping_path(seed, frames=2000, **kw):
    return generate_path("wiping", seed, frames, **kw)


def gen_filling_path(seed, frames=2000, **kw):
    return generate_path("filling", seed, frames, **kw)


def trac_error_mapping(p_err: float, lo: float, hi: float) -> float:
    """Pose error seen by a dead-banded pose solver: 0 inside [lo, hi]."""
    return 0.0 if lo <= p_err <= hi else p_err
