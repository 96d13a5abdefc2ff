"""Quaternions, rigid poses, and small vector helpers.

World frame is right-handed, z-up, in meters. Quaternions are (w, x, y, z)
and encode world-from-camera rotation; camera forward is +x, up is +z.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_CAMERA_HEIGHT = 1.5

_UNIT_TOL = 1e-9


def normalize(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v)
    if n == 0.0:
        raise ValueError("cannot normalize zero vector")
    return v / n


def quat_identity() -> np.ndarray:
    return np.array([1.0, 0.0, 0.0, 0.0])


def quat_from_yaw(yaw_rad: float) -> np.ndarray:
    """Rotation about +z by ``yaw_rad``."""
    h = 0.5 * yaw_rad
    return np.array([np.cos(h), 0.0, 0.0, np.sin(h)])


def quat_from_axis_angle(axis, angle_rad: float) -> np.ndarray:
    axis = normalize(np.asarray(axis, dtype=np.float64))
    h = 0.5 * angle_rad
    return np.concatenate([[np.cos(h)], np.sin(h) * axis])


def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_to_mat(q: np.ndarray) -> np.ndarray:
    """3x3 rotation matrix for a unit quaternion (w, x, y, z)."""
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


@dataclass(frozen=True)
class PanoPose:
    """Panorama camera pose: position in meters, world-from-camera rotation."""

    position: np.ndarray
    rotation: np.ndarray = field(default_factory=quat_identity)

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=np.float64).reshape(3)
        q = np.asarray(self.rotation, dtype=np.float64).reshape(4)
        if abs(np.linalg.norm(q) - 1.0) > _UNIT_TOL:
            raise ValueError(f"quaternion norm {np.linalg.norm(q):.3e} is not 1")
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "rotation", q)

    @property
    def matrix(self) -> np.ndarray:
        return quat_to_mat(self.rotation)

    def rotated(self, q: np.ndarray, pivot=None) -> "PanoPose":
        """Pose after rotating the whole world by ``q`` about ``pivot`` (default origin)."""
        pivot = np.zeros(3) if pivot is None else np.asarray(pivot, dtype=np.float64)
        R = quat_to_mat(q)
        pos = R @ (self.position - pivot) + pivot
        rot = quat_mul(q, self.rotation)
        rot = rot / np.linalg.norm(rot)
        return PanoPose(pos, rot)
