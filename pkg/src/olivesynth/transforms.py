"""Quaternion helpers for instance transforms with bounded pose jitter.

Quaternions are stored as ``(w, x, y, z)`` arrays; every function accepts a
single quaternion of shape ``(4,)`` or a stack ``(..., 4)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .rng import CounterRNG

IDENTITY_QUAT = np.array([1.0, 0.0, 0.0, 0.0])


def quat_from_axis_angle(axis, angle) -> np.ndarray:
    axis = np.asarray(axis, dtype=np.float64)
    angle = np.asarray(angle, dtype=np.float64)
    norm = np.linalg.norm(axis, axis=-1, keepdims=True)
    axis = axis / np.where(norm == 0.0, 1.0, norm)
    half = 0.5 * angle
    return np.concatenate([np.cos(half)[..., None], np.sin(half)[..., None] * axis], axis=-1)


def quat_multiply(a, b) -> np.ndarray:
    """Hamilton product ``a * b`` (apply ``b`` first, then ``a``)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    aw, ax, ay, az = np.moveaxis(a, -1, 0)
    bw, bx, by, bz = np.moveaxis(b, -1, 0)
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def quat_conjugate(q) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def quat_normalize(q) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def quat_to_matrix(q) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    w, x, y, z = np.moveaxis(q, -1, 0)
    m = np.empty(q.shape[:-1] + (3, 3))
    m[..., 0, 0] = 1 - 2 * (y * y + z * z)
    m[..., 0, 1] = 2 * (x * y - w * z)
    m[..., 0, 2] = 2 * (x * z + w * y)
    m[..., 1, 0] = 2 * (x * y + w * z)
    m[..., 1, 1] = 1 - 2 * (x * x + z * z)
    m[..., 1, 2] = 2 * (y * z - w * x)
    m[..., 2, 0] = 2 * (x * z - w * y)
    m[..., 2, 1] = 2 * (y * z + w * x)
    m[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return m


def matrix_to_quat(m) -> np.ndarray:
    """Rotation matrix (..., 3, 3) to unit quaternion with ``w >= 0``.

    Branch-free Shepperd method: all four candidate pivots are computed and
    the numerically largest one is selected per matrix.
    """
    m = np.asarray(m, dtype=np.float64)
    r = m.reshape(-1, 3, 3)
    m00, m11, m22 = r[:, 0, 0], r[:, 1, 1], r[:, 2, 2]
    pivots = np.stack([m00 + m11 + m22, m00 - m11 - m22, m11 - m00 - m22, m22 - m00 - m11], axis=-1)
    choice = np.argmax(pivots, axis=-1)
    s = 2.0 * np.sqrt(np.maximum(1.0 + np.take_along_axis(pivots, choice[:, None], axis=-1)[:, 0], 1e-300))
    d21 = r[:, 2, 1] - r[:, 1, 2]
    d02 = r[:, 0, 2] - r[:, 2, 0]
    d10 = r[:, 1, 0] - r[:, 0, 1]
    s01 = r[:, 0, 1] + r[:, 1, 0]
    s02 = r[:, 0, 2] + r[:, 2, 0]
    s12 = r[:, 1, 2] + r[:, 2, 1]
    cands = np.stack(
        [
            np.stack([0.25 * s, d21 / s, d02 / s, d10 / s], axis=-1),
            np.stack([d21 / s, 0.25 * s, s01 / s, s02 / s], axis=-1),
            np.stack([d02 / s, s01 / s, 0.25 * s, s12 / s], axis=-1),
            np.stack([d10 / s, s02 / s, s12 / s, 0.25 * s], axis=-1),
        ],
        axis=1,
    )
    q = cands[np.arange(r.shape[0]), choice]
    q = np.where(q[:, :1] < 0, -q, q)
    return quat_normalize(q).reshape(m.shape[:-2] + (4,))


def frame_to_quat(x_axis, y_axis) -> np.ndarray:
    """Quaternion mapping local +x/+y onto the given orthonormal axes."""
    x_axis = np.asarray(x_axis, dtype=np.float64)
    y_axis = np.asarray(y_axis, dtype=np.float64)
    z_axis = np.cross(x_axis, y_axis)
    return matrix_to_quat(np.stack([x_axis, y_axis, z_axis], axis=-1))


def quat_rotate(q, v) -> np.ndarray:
    """Rotate vectors ``v`` by ``q`` via ``v' = v + 2w(u x v) + 2u x (u x v)``."""
    q = np.asarray(q, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    w = q[..., :1]
    u = q[..., 1:]
    t = 2.0 * np.cross(u, v)
    return v + w * t + np.cross(u, t)


def quat_angle_between(a, b) -> np.ndarray:
    """Rotation angle (radians) of ``a * conj(b)``, i.e. the geodesic distance."""
    a = quat_normalize(a)
    b = quat_normalize(b)
    d = np.abs(np.sum(a * b, axis=-1))
    return 2.0 * np.arccos(np.clip(d, 0.0, 1.0))


@dataclass(frozen=True)
class InstanceTransform:
    """Placement of one prototype mesh: ``p_world = t + s * R(q) p_local``."""

    translation: tuple[float, float, float]
    rotation: tuple[float, float, float, float] = (1.0, 0.0, 0.0, 0.0)
    scale: float = 1.0

    def __post_init__(self):
        if not self.scale > 0:
            raise ParameterError(f"scale must be positive, got {self.scale}")
        norm = float(np.linalg.norm(self.rotation))
        if abs(norm - 1.0) > 1e-9:
            raise ParameterError(f"rotation quaternion must be unit-norm, |q| = {norm!r}")

    def matrix(self) -> np.ndarray:
        """4x4 homogeneous matrix."""
        m = np.eye(4)
        m[:3, :3] = self.scale * quat_to_matrix(self.rotation)
        m[:3, 3] = self.translation
        return m

    def apply(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        return np.asarray(self.translation) + self.scale * points @ quat_to_matrix(self.rotation).T


def sample_jitter(
    rng: CounterRNG,
    index,
    orientation_jitter_deg: float,
    size_jitter: float,
    first_draw: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Bounded pose jitter, one per entry of ``index``.

    Rotations are axis-angle with a uniformly random axis on the sphere and
    an angle uniform in ``[0, orientation_jitter_deg]``; scales are uniform in
    ``[1 - size_jitter, 1 + size_jitter]``.  Both bounds are hard.

    Consumes draws ``first_draw .. first_draw + 3``.
    """
    if orientation_jitter_deg < 0 or size_jitter < 0:
        raise ParameterError("jitter bounds must be non-negative")
    if size_jitter >= 1:
        raise ParameterError("size_jitter must be < 1")
    index = np.asarray(index)
    cos_polar = rng.uniform(index, first_draw) * 2.0 - 1.0
    azimuth = rng.uniform(index, first_draw + 1) * (2.0 * np.pi)
    sin_polar = np.sqrt(np.maximum(0.0, 1.0 - cos_polar**2))
    axis = np.stack([sin_polar * np.cos(azimuth), sin_polar * np.sin(azimuth), cos_polar], axis=-1)
    angle = rng.uniform(index, first_draw + 2) * np.deg2rad(orientation_jitter_deg)
    quats = quat_from_axis_angle(axis, angle)
    lo, hi = 1.0 - size_jitter, 1.0 + size_jitter
    scales = np.clip(1.0 + size_jitter * (2.0 * rng.uniform(index, first_draw + 3) - 1.0), lo, hi)
    return quats, scales
