"""Serial-chain robot model: forward kinematics, geometric Jacobian,
Yoshikawa manipulability and capsule collision geometry.

The heavy lifting happens in small numba kernels that operate on the flat
arrays cached on :class:`RobotModel`; the public functions wrap them with
argument checking and friendlier return types.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numba as nb
import numpy as np
import yaml

from .rotations import axis_angle_matrix, matrix_to_rotvec, rotvec_to_matrix

DEFAULT_VELOCITY_LIMIT = math.pi
DEFAULT_ACCELERATION_LIMIT = 10.0

BUNDLED_ROBOTS = ("ur5", "sawyer", "planar2r")


class RobotDescriptionError(ValueError):
    """Raised when a robot description file is malformed."""


def _vec3(value, what):
    arr = np.asarray(value, dtype=float)
    if arr.shape != (3,) or not np.all(np.isfinite(arr)):
        raise ValueError(f"{what} must be a finite 3-vector, got {value!r}")
    return arr


@dataclass(frozen=True, eq=False)
class JointSpec:
    name: str
    axis: np.ndarray
    origin_translation: np.ndarray
    origin_rotation: np.ndarray
    position_limits: tuple[float, float]
    velocity_limit: float = DEFAULT_VELOCITY_LIMIT
    acceleration_limit: float = DEFAULT_ACCELERATION_LIMIT
    link: str | None = None

    def __post_init__(self):
        axis = _vec3(self.axis, f"joint {self.name!r} axis")
        if abs(np.linalg.norm(axis) - 1.0) > 1e-9:
            raise ValueError(f"joint {self.name!r} axis must have unit norm")
        object.__setattr__(self, "axis", axis)
        object.__setattr__(self, "origin_translation",
                           _vec3(self.origin_translation, f"joint {self.name!r} origin_translation"))
        object.__setattr__(self, "origin_rotation",
                           _vec3(self.origin_rotation, f"joint {self.name!r} origin_rotation"))
        lo, hi = (float(v) for v in self.position_limits)
        if not lo < hi:
            raise ValueError(f"joint {self.name!r} needs lower < upper position limit")
        object.__setattr__(self, "position_limits", (lo, hi))
        if not self.velocity_limit > 0 or not self.acceleration_limit > 0:
            raise ValueError(f"joint {self.name!r} velocity/acceleration limits must be positive")

    @property
    def link_name(self) -> str:
        return self.link or self.name


@dataclass(frozen=True, eq=False)
class CapsuleShape:
    """A capsule given by a segment and a radius.

    Endpoints are expressed in the frame of ``parent_link``; after
    :func:`posed_capsules` they are in the world frame.
    """

    parent_link: str
    endpoint_a: np.ndarray
    endpoint_b: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "endpoint_a", _vec3(self.endpoint_a, "capsule endpoint_a"))
        object.__setattr__(self, "endpoint_b", _vec3(self.endpoint_b, "capsule endpoint_b"))
        if not self.radius > 0:
            raise ValueError("capsule radius must be positive")


@dataclass(frozen=True, eq=False)
class Pose:
    position: np.ndarray
    rotation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "position", _vec3(self.position, "pose position"))
        R = np.asarray(self.rotation, dtype=float)
        if R.shape != (3, 3):
            raise ValueError("pose rotation must be 3x3")
        if not np.allclose(R @ R.T, np.eye(3), atol=1e-8) or abs(np.linalg.det(R) - 1.0) > 1e-8:
            raise ValueError("pose rotation must be orthonormal with determinant +1")
        object.__setattr__(self, "rotation", R)

    @classmethod
    def from_rotvec(cls, position, rotvec=(0.0, 0.0, 0.0)) -> Pose:
        return cls(np.asarray(position, float), rotvec_to_matrix(np.asarray(rotvec, float)))

    @classmethod
    def from_matrix(cls, T) -> Pose:
        T = np.asarray(T, dtype=float)
        return cls(T[:3, 3].copy(), T[:3, :3].copy())

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.position
        return T

    def rotvec(self) -> np.ndarray:
        return matrix_to_rotvec(self.rotation)


def _transform(translation, rotvec):
    T = np.eye(4)
    T[:3, :3] = rotvec_to_matrix(np.asarray(rotvec, dtype=float))
    T[:3, 3] = translation
    return T


@dataclass(frozen=True, eq=False)
class RobotModel:
    """Immutable serial chain.

    Link 0 is the fixed base; link ``k`` (1-based) is the body moved by
    joint ``k``.  Capsules attach to links by name.
    """

    joints: tuple[JointSpec, ...]
    capsules: tuple[CapsuleShape, ...] = ()
    end_effector_offset: Pose = field(default_factory=lambda: Pose(np.zeros(3), np.eye(3)))
    name: str = "robot"
    base_link: str = "base"

    def __post_init__(self):
        joints = tuple(self.joints)
        if len(joints) < 1:
            raise ValueError("a robot needs at least one joint")
        object.__setattr__(self, "joints", joints)
        object.__setattr__(self, "capsules", tuple(self.capsules))
        link_names = (self.base_link,) + tuple(j.link_name for j in joints)
        if len(set(link_names)) != len(link_names):
            raise ValueError("link names must be unique")
        index = {nm: i for i, nm in enumerate(link_names)}
        for cap in self.capsules:
            if cap.parent_link not in index:
                raise ValueError(f"capsule parent_link {cap.parent_link!r} names no link")

        n = len(joints)
        origins = np.empty((n, 4, 4))
        for k, j in enumerate(joints):
            origins[k] = _transform(j.origin_translation, j.origin_rotation)
        k = len(self.capsules)
        cap_link = np.array([index[c.parent_link] for c in self.capsules], dtype=np.int64)
        pairs = [(a, b) for a in range(k) for b in range(a + 1, k)
                 if abs(cap_link[a] - cap_link[b]) >= 2]
        arrays = dict(
            link_names=link_names,
            origins=origins,
            axes=np.array([j.axis for j in joints]),
            ee=self.end_effector_offset.matrix(),
            lower=np.array([j.position_limits[0] for j in joints]),
            upper=np.array([j.position_limits[1] for j in joints]),
            velocity_limits=np.array([j.velocity_limit for j in joints]),
            acceleration_limits=np.array([j.acceleration_limit for j in joints]),
            cap_link=cap_link,
            cap_a=np.array([c.endpoint_a for c in self.capsules]).reshape(k, 3),
            cap_b=np.array([c.endpoint_b for c in self.capsules]).reshape(k, 3),
            cap_r=np.array([c.radius for c in self.capsules], dtype=float),
            collision_pairs=np.array(pairs, dtype=np.int64).reshape(len(pairs), 2),
        )
        for key, value in arrays.items():
            object.__setattr__(self, key, value)

    @property
    def n(self) -> int:
        return len(self.joints)

    @property
    def manipulability_rows(self) -> int:
        return 6 if self.n >= 6 else 3

    def link_index(self, name: str) -> int:
        return self.link_names.index(name)

    def rotated_base(self, R) -> RobotModel:
        """The same robot with its base frame rotated by ``R``."""
        first = self.joints[0]
        rot = np.asarray(R, float) @ rotvec_to_matrix(first.origin_rotation)
        moved = JointSpec(first.name, first.axis, np.asarray(R, float) @ first.origin_translation,
                          matrix_to_rotvec(rot), first.position_limits, first.velocity_limit,
                          first.acceleration_limit, first.link)
        return RobotModel((moved,) + self.joints[1:], self.capsules, self.end_effector_offset,
                          self.name, self.base_link)


# --------------------------------------------------------------------------
# loading

def _require(mapping, key, where):
    if not isinstance(mapping, dict) or key not in mapping:
        raise RobotDescriptionError(f"{where}: missing key {key!r}")
    return mapping[key]


def robot_from_dict(data: dict) -> RobotModel:
    if not isinstance(data, dict):
        raise RobotDescriptionError("robot description must be a mapping")
    name = _require(data, "name", "robot")
    raw_joints = _require(data, "joints", "robot")
    if not isinstance(raw_joints, list) or not raw_joints:
        raise RobotDescriptionError("'joints' must be a non-empty list")
    joints = []
    for i, jd in enumerate(raw_joints):
        where = f"joints[{i}]"
        jtype = jd.get("type", "revolute") if isinstance(jd, dict) else None
        if jtype != "revolute":
            raise RobotDescriptionError(f"{where}.type: only revolute joints are supported, got {jtype!r}")
        limits = _require(jd, "limits", where)
        try:
            joints.append(JointSpec(
                name=str(_require(jd, "name", where)),
                axis=_require(jd, "axis", where),
                origin_translation=jd.get("origin_translation", [0.0, 0.0, 0.0]),
                origin_rotation=jd.get("origin_rotation", [0.0, 0.0, 0.0]),
                position_limits=tuple(_require(limits, "position", f"{where}.limits")),
                velocity_limit=float(limits.get("velocity", DEFAULT_VELOCITY_LIMIT)),
                acceleration_limit=float(limits.get("acceleration", DEFAULT_ACCELERATION_LIMIT)),
                link=jd.get("link"),
            ))
        except (TypeError, ValueError) as exc:
            if isinstance(exc, RobotDescriptionError):
                raise
            raise RobotDescriptionError(f"{where}: {exc}") from exc
    capsules = []
    for i, cd in enumerate(data.get("capsules") or []):
        where = f"capsules[{i}]"
        try:
            capsules.append(CapsuleShape(str(_require(cd, "link", where)), _require(cd, "a", where),
                                         _require(cd, "b", where), float(_require(cd, "radius", where))))
        except (TypeError, ValueError) as exc:
            if isinstance(exc, RobotDescriptionError):
                raise
            raise RobotDescriptionError(f"{where}: {exc}") from exc
    ee = data.get("end_effector_offset") or {}
    try:
        ee_pose = Pose.from_rotvec(ee.get("translation", [0.0, 0.0, 0.0]),
                                   ee.get("rotation", [0.0, 0.0, 0.0]))
        return RobotModel(tuple(joints), tuple(capsules), ee_pose, str(name),
                          str(data.get("base_link", "base")))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, RobotDescriptionError):
            raise
        raise RobotDescriptionError(f"robot {name!r}: {exc}") from exc


def _robot_text(source: str | Path) -> str:
    if isinstance(source, str) and source in BUNDLED_ROBOTS:
        return resources.files("tolerant_ik.data.robots").joinpath(f"{source}.yaml").read_text()
    path = Path(source)
    if not path.is_file():
        raise FileNotFoundError(f"robot description not found: {path}")
    return path.read_text()


def _robot_data(source: str | Path) -> dict:
    try:
        return yaml.safe_load(_robot_text(source))
    except yaml.YAMLError as exc:
        raise RobotDescriptionError(f"cannot parse robot description: {exc}") from exc


def load_robot(source: str | Path) -> RobotModel:
    """Load a robot from a YAML file, or a bundled robot by name."""
    return robot_from_dict(_robot_data(source))


def home_configuration(source: str | Path) -> np.ndarray | None:
    """The optional ``home`` entry of a robot description."""
    data = _robot_data(source)
    home = data.get("home") if isinstance(data, dict) else None
    return None if home is None else np.array(home, dtype=float)


# --------------------------------------------------------------------------
# kernels

@nb.njit(cache=True)
def chain_kernel(origins, axes, ee, q):
    """Link frames (n+2, 4, 4): base, links 1..n, end-effector.

    Also returns the world position and axis of every joint.
    """
    n = q.shape[0]
    frames = np.zeros((n + 2, 4, 4))
    joint_pos = np.empty((n, 3))
    joint_axis = np.empty((n, 3))
    for i in range(4):
        frames[0, i, i] = 1.0
    M = np.empty((3, 3))
    for k in range(n):
        P = frames[k]
        O = origins[k]
        for r in range(3):
            for c in range(3):
                M[r, c] = P[r, 0] * O[0, c] + P[r, 1] * O[1, c] + P[r, 2] * O[2, c]
            joint_pos[k, r] = P[r, 0] * O[0, 3] + P[r, 1] * O[1, 3] + P[r, 2] * O[2, 3] + P[r, 3]
        for r in range(3):
            joint_axis[k, r] = M[r, 0] * axes[k, 0] + M[r, 1] * axes[k, 1] + M[r, 2] * axes[k, 2]
        Rq = axis_angle_matrix(axes[k], q[k])
        F = frames[k + 1]
        for r in range(3):
            for c in range(3):
                F[r, c] = M[r, 0] * Rq[0, c] + M[r, 1] * Rq[1, c] + M[r, 2] * Rq[2, c]
            F[r, 3] = joint_pos[k, r]
        F[3, 3] = 1.0
    P = frames[n]
    F = frames[n + 1]
    for r in range(4):
        for c in range(4):
            F[r, c] = P[r, 0] * ee[0, c] + P[r, 1] * ee[1, c] + P[r, 2] * ee[2, c] + P[r, 3] * ee[3, c]
    return frames, joint_pos, joint_axis


@nb.njit(cache=True)
def jacobian_kernel(frames, joint_pos, joint_axis):
    n = joint_pos.shape[0]
    J = np.empty((6, n))
    pe = frames[n + 1, :3, 3]
    for i in range(n):
        z = joint_axis[i]
        dx = pe[0] - joint_pos[i, 0]
        dy = pe[1] - joint_pos[i, 1]
        dz = pe[2] - joint_pos[i, 2]
        J[0, i] = z[1] * dz - z[2] * dy
        J[1, i] = z[2] * dx - z[0] * dz
        J[2, i] = z[0] * dy - z[1] * dx
        J[3, i] = z[0]
        J[4, i] = z[1]
        J[5, i] = z[2]
    return J


@nb.njit(cache=True)
def _qr_volume(A):
    """Product of |R_kk| from a Householder QR of the tall matrix A.

    Equals sqrt(det(A^T A)) without squaring the condition number.
    A is overwritten.
    """
    m, k = A.shape
    vol = 1.0
    for j in range(k):
        norm = 0.0
        for i in range(j, m):
            norm += A[i, j] * A[i, j]
        norm = math.sqrt(norm)
        if norm == 0.0:
            return 0.0
        alpha = -norm if A[j, j] >= 0.0 else norm
        vol *= norm
        # reflector v = x - alpha e1, applied to the remaining columns
        v0 = A[j, j] - alpha
        vnorm2 = v0 * v0
        for i in range(j + 1, m):
            vnorm2 += A[i, j] * A[i, j]
        if vnorm2 == 0.0:
            continue
        for c in range(j + 1, k):
            s = v0 * A[j, c]
            for i in range(j + 1, m):
                s += A[i, j] * A[i, c]
            f = 2.0 * s / vnorm2
            A[j, c] -= f * v0
            for i in range(j + 1, m):
                A[i, c] -= f * A[i, j]
    return vol


@nb.njit(cache=True)
def manipulability_kernel(J, rows):
    """sqrt(det(J J^T)) over the first ``rows`` rows of J.

    Computed as the volume spanned by the rows (or, for a tall block, the
    columns), which stays accurate close to singularities.
    """
    n = J.shape[1]
    if rows <= n:
        A = np.empty((n, rows))
        for a in range(rows):
            for i in range(n):
                A[i, a] = J[a, i]
    else:
        A = np.empty((rows, n))
        for r in range(rows):
            for i in range(n):
                A[r, i] = J[r, i]
    return _qr_volume(A)


@nb.njit(cache=True)
def _lex_less(p1, q1, p2, q2):
    for i in range(3):
        if p1[i] != p2[i]:
            return p1[i] < p2[i]
    for i in range(3):
        if q1[i] != q2[i]:
            return q1[i] < q2[i]
    return False


@nb.njit(cache=True)
def _clamp01(x):
    if x < 0.0:
        return 0.0
    if x > 1.0:
        return 1.0
    return x


@nb.njit(cache=True)
def _segment_distance_ordered(p1, q1, p2, q2):
    d1x, d1y, d1z = q1[0] - p1[0], q1[1] - p1[1], q1[2] - p1[2]
    d2x, d2y, d2z = q2[0] - p2[0], q2[1] - p2[1], q2[2] - p2[2]
    rx, ry, rz = p1[0] - p2[0], p1[1] - p2[1], p1[2] - p2[2]
    a = d1x * d1x + d1y * d1y + d1z * d1z
    e = d2x * d2x + d2y * d2y + d2z * d2z
    f = d2x * rx + d2y * ry + d2z * rz
    eps = 1e-18
    if a <= eps and e <= eps:
        s = 0.0
        t = 0.0
    elif a <= eps:
        s = 0.0
        t = _clamp01(f / e)
    else:
        c = d1x * rx + d1y * ry + d1z * rz
        if e <= eps:
            t = 0.0
            s = _clamp01(-c / a)
        else:
            b = d1x * d2x + d1y * d2y + d1z * d2z
            denom = a * e - b * b
            if denom > 1e-14 * a * e:
                s = _clamp01((b * f - c * e) / denom)
            else:
                s = 0.0
            t = (b * s + f) / e
            if t < 0.0:
                t = 0.0
                s = _clamp01(-c / a)
            elif t > 1.0:
                t = 1.0
                s = _clamp01((b - c) / a)
    dx = rx + d1x * s - d2x * t
    dy = ry + d1y * s - d2y * t
    dz = rz + d1z * s - d2z * t
    return math.sqrt(dx * dx + dy * dy + dz * dz)


@nb.njit(cache=True)
def segment_distance(p1, q1, p2, q2):
    """Shortest distance between segments [p1, q1] and [p2, q2].

    The arguments are put in a canonical order first so the result is
    bitwise symmetric in the two segments.
    """
    if _lex_less(p2, q2, p1, q1):
        return _segment_distance_ordered(p2, q2, p1, q1)
    return _segment_distance_ordered(p1, q1, p2, q2)


@nb.njit(cache=True)
def world_capsule_points(frames, cap_link, cap_a, cap_b):
    k = cap_link.shape[0]
    wa = np.empty((k, 3))
    wb = np.empty((k, 3))
    for c in range(k):
        T = frames[cap_link[c]]
        for r in range(3):
            wa[c, r] = T[r, 0] * cap_a[c, 0] + T[r, 1] * cap_a[c, 1] + T[r, 2] * cap_a[c, 2] + T[r, 3]
            wb[c, r] = T[r, 0] * cap_b[c, 0] + T[r, 1] * cap_b[c, 1] + T[r, 2] * cap_b[c, 2] + T[r, 3]
    return wa, wb


@nb.njit(cache=True)
def pair_distances_kernel(frames, cap_link, cap_a, cap_b, cap_r, pairs):
    wa, wb = world_capsule_points(frames, cap_link, cap_a, cap_b)
    out = np.empty(pairs.shape[0])
    for p in range(pairs.shape[0]):
        i = pairs[p, 0]
        j = pairs[p, 1]
        out[p] = segment_distance(wa[i], wb[i], wa[j], wb[j]) - (cap_r[i] + cap_r[j])
    return out


# --------------------------------------------------------------------------
# public operations

def _config(model: RobotModel, q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape != (model.n,):
        raise ValueError(f"expected a configuration of length {model.n}, got shape {q.shape}")
    return q


def link_transforms(model: RobotModel, q) -> np.ndarray:
    """Homogeneous transforms (n+2, 4, 4) of base, every link and the end-effector."""
    frames, _, _ = chain_kernel(model.origins, model.axes, model.ee, _config(model, q))
    return frames


def forward_kinematics(model: RobotModel, q) -> list[Pose]:
    """Poses of the base, each link and the end-effector, base to tip."""
    return [Pose(T[:3, 3].copy(), T[:3, :3].copy()) for T in link_transforms(model, q)]


def end_effector_pose(model: RobotModel, q) -> Pose:
    T = link_transforms(model, q)[-1]
    return Pose(T[:3, 3].copy(), T[:3, :3].copy())


def geometric_jacobian(model: RobotModel, q) -> np.ndarray:
    """6 x n Jacobian; rows are linear then angular velocity."""
    frames, jp, ja = chain_kernel(model.origins, model.axes, model.ee, _config(model, q))
    return jacobian_kernel(frames, jp, ja)


def manipulability(model: RobotModel, q) -> float:
    """Yoshikawa measure sqrt(det(J J^T)).

    Chains with fewer than six joints use only the linear-velocity rows,
    otherwise the Gram determinant would vanish identically.
    """
    return float(manipulability_kernel(geometric_jacobian(model, q), model.manipulability_rows))


def capsule_distance(a: CapsuleShape, b: CapsuleShape) -> float:
    """Signed clearance between two world-posed capsules (negative = overlap)."""
    seg = segment_distance(a.endpoint_a, a.endpoint_b, b.endpoint_a, b.endpoint_b)
    return float(seg - (a.radius + b.radius))


def posed_capsules(model: RobotModel, q) -> list[CapsuleShape]:
    frames = link_transforms(model, q)
    wa, wb = world_capsule_points(frames, model.cap_link, model.cap_a, model.cap_b)
    return [CapsuleShape(c.parent_link, wa[i], wb[i], c.radius) for i, c in enumerate(model.capsules)]


def collision_pair_distances(model: RobotModel, q) -> np.ndarray:
    frames = link_transforms(model, q)
    return pair_distances_kernel(frames, model.cap_link, model.cap_a, model.cap_b,
                                 model.cap_r, model.collision_pairs)
