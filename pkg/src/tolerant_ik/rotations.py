"""Rotation helpers shared by the kinematics and objective kernels.

Scaled-axis ("rotation vector") conversions are done through unit
quaternions, which stay well conditioned near both 0 and pi.
"""

import math

import numba as nb
import numpy as np


@nb.njit(cache=True)
def axis_angle_matrix(axis, angle):
    """Rotation matrix for a unit ``axis`` and ``angle`` (Rodrigues)."""
    x, y, z = axis[0], axis[1], axis[2]
    c = math.cos(angle)
    s = math.sin(angle)
    t = 1.0 - c
    R = np.empty((3, 3))
    R[0, 0] = c + x * x * t
    R[0, 1] = x * y * t - z * s
    R[0, 2] = x * z * t + y * s
    R[1, 0] = y * x * t + z * s
    R[1, 1] = c + y * y * t
    R[1, 2] = y * z * t - x * s
    R[2, 0] = z * x * t - y * s
    R[2, 1] = z * y * t + x * s
    R[2, 2] = c + z * z * t
    return R


@nb.njit(cache=True)
def rotvec_to_matrix(v):
    theta = math.sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
    if theta < 1e-300:
        return np.eye(3)
    axis = np.empty(3)
    axis[0] = v[0] / theta
    axis[1] = v[1] / theta
    axis[2] = v[2] / theta
    return axis_angle_matrix(axis, theta)


@nb.njit(cache=True)
def matrix_to_quaternion(R):
    """Shepperd's method; returns (w, x, y, z) with w >= 0."""
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    q = np.empty(4)
    if tr >= R[0, 0] and tr >= R[1, 1] and tr >= R[2, 2]:
        s = math.sqrt(1.0 + tr) * 2.0
        q[0] = 0.25 * s
        q[1] = (R[2, 1] - R[1, 2]) / s
        q[2] = (R[0, 2] - R[2, 0]) / s
        q[3] = (R[1, 0] - R[0, 1]) / s
    elif R[0, 0] >= R[1, 1] and R[0, 0] >= R[2, 2]:
        s = math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2.0
        q[0] = (R[2, 1] - R[1, 2]) / s
        q[1] = 0.25 * s
        q[2] = (R[0, 1] + R[1, 0]) / s
        q[3] = (R[0, 2] + R[2, 0]) / s
    elif R[1, 1] >= R[2, 2]:
        s = math.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2]) * 2.0
        q[0] = (R[0, 2] - R[2, 0]) / s
        q[1] = (R[0, 1] + R[1, 0]) / s
        q[2] = 0.25 * s
        q[3] = (R[1, 2] + R[2, 1]) / s
    else:
        s = math.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1]) * 2.0
        q[0] = (R[1, 0] - R[0, 1]) / s
        q[1] = (R[0, 2] + R[2, 0]) / s
        q[2] = (R[1, 2] + R[2, 1]) / s
        q[3] = 0.25 * s
    if q[0] < 0.0:
        for i in range(4):
            q[i] = -q[i]
    norm = math.sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3])
    for i in range(4):
        q[i] /= norm
    return q


@nb.njit(cache=True)
def matrix_to_rotvec(R):
    """Scaled-axis vector of ``R`` with angle in [0, pi].

    At pi (up to round-off in ``w``) the axis sign is fixed so that its
    largest-magnitude component is positive.
    """
    q = matrix_to_quaternion(R)
    vn = math.sqrt(q[1] * q[1] + q[2] * q[2] + q[3] * q[3])
    out = np.zeros(3)
    if vn < 1e-300:
        return out
    angle = 2.0 * math.atan2(vn, q[0])
    scale = angle / vn
    out[0] = q[1] * scale
    out[1] = q[2] * scale
    out[2] = q[3] * scale
    if q[0] < 1e-12:
        k = 0
        for i in range(1, 3):
            if abs(out[i]) > abs(out[k]):
                k = i
        if out[k] < 0.0:
            for i in range(3):
                out[i] = -out[i]
    return out


def rpy_to_matrix(roll, pitch, yaw):
    """Fixed-axis roll/pitch/yaw, ``Rz(yaw) @ Ry(pitch) @ Rx(roll)``."""
    cr, sr = math.cos(roll), math.sin(roll)
    cp, sp = math.cos(pitch), math.sin(pitch)
    cy, sy = math.cos(yaw), math.sin(yaw)
    return np.array([
        [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
        [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
        [-sp, cp * sr, cp * cr],
    ])


def rot_x(angle):
    return axis_angle_matrix(np.array([1.0, 0.0, 0.0]), float(angle))


def rot_y(angle):
    return axis_angle_matrix(np.array([0.0, 1.0, 0.0]), float(angle))


def rot_z(angle):
    return axis_angle_matrix(np.array([0.0, 0.0, 1.0]), float(angle))
