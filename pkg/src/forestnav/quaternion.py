"""Scalar-first unit quaternion helpers.

Quaternions are stored as ``(w, x, y, z)`` arrays and use the Hamilton
product. A quaternion ``q`` describing the attitude of the body maps body
vectors into the inertial frame: ``v_I = q * v_B * conj(q)``.
"""

import math

import numpy as np

IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])


def multiply(q1, q2):
    w1, x1, y1, z1 = q1
    w2, x2, y2, z2 = q2
    return np.array([
        w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
        w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
        w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
        w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
    ])


def conjugate(q):
    return np.array([q[0], -q[1], -q[2], -q[3]])


def normalize(q):
    q = np.asarray(q, dtype=float)
    return q / np.linalg.norm(q)


def to_matrix(q):
    """Rotation matrix of a unit quaternion (body -> inertial)."""
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def rotate(q, v):
    """Rotate ``v`` from the body frame to the inertial frame."""
    return to_matrix(q) @ np.asarray(v, dtype=float)


def rotate_inverse(q, v):
    """Express the inertial vector ``v`` in the body frame."""
    return to_matrix(q).T @ np.asarray(v, dtype=float)


def from_yaw(yaw_rad):
    half = 0.5 * yaw_rad
    return np.array([math.cos(half), 0.0, 0.0, math.sin(half)])


def from_axis_angle(axis, angle):
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    half = 0.5 * angle
    return np.concatenate(([math.cos(half)], math.sin(half) * axis))


def from_euler(roll, pitch, yaw):
    """ZYX (yaw-pitch-roll) Euler angles in radians."""
    cr, sr = math.cos(0.5 * roll), math.sin(0.5 * roll)
    cp, sp = math.cos(0.5 * pitch), math.sin(0.5 * pitch)
    cy, sy = math.cos(0.5 * yaw), math.sin(0.5 * yaw)
    return np.array([
        cr * cp * cy + sr * sp * sy,
        sr * cp * cy - cr * sp * sy,
        cr * sp * cy + sr * cp * sy,
        cr * cp * sy - sr * sp * cy,
    ])


def yaw_of(q):
    """Heading of the body x axis projected onto the horizontal plane, radians."""
    w, x, y, z = q
    return math.atan2(2.0 * (w * z + x * y), 1.0 - 2.0 * (y * y + z * z))


def tilt_of(q):
    """Angle between body z and inertial z, radians."""
    w, x, y, z = q
    cos_tilt = 1.0 - 2.0 * (x * x + y * y)
    return math.acos(min(1.0, max(-1.0, cos_tilt)))


def canonical(q):
    """Pick the representative of ``{q, -q}`` with non-negative scalar part."""
    q = np.asarray(q, dtype=float)
    return -q if q[0] < 0.0 else q


def random_unit(rng, size=None):
    """Uniformly distributed unit quaternions (Shoemake's method)."""
    shape = () if size is None else (size,)
    u1, u2, u3 = rng.random((3,) + shape)
    a, b = np.sqrt(1.0 - u1), np.sqrt(u1)
    q = np.stack([
        a * np.sin(2 * np.pi * u2),
        a * np.cos(2 * np.pi * u2),
        b * np.sin(2 * np.pi * u3),
        b * np.cos(2 * np.pi * u3),
    ], axis=-1)
    return q


def from_matrix(m):
    """Unit quaternion of a rotation matrix (Shepperd's method)."""
    m = np.asarray(m, dtype=float)
    tr = m[0, 0] + m[1, 1] + m[2, 2]
    if tr > 0:
        s = 2.0 * math.sqrt(tr + 1.0)
        q = [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
    elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
        s = 2.0 * math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2])
        q = [(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s]
    elif m[1, 1] > m[2, 2]:
        s = 2.0 * math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2])
        q = [(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s]
    else:
        s = 2.0 * math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1])
        q = [(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s]
    return canonical(normalize(q))


def rotation_vector(q):
    """Axis * angle of ``q`` taken on the short way (angle in [0, pi])."""
    w, x, y, z = canonical(q)
    s = math.sqrt(x * x + y * y + z * z)
    if s < 1e-12:
        return 2.0 * np.array([x, y, z])
    return (2.0 * math.atan2(s, w) / s) * np.array([x, y, z])
