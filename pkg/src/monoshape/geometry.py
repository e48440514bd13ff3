"""Camera model, rigid transforms, and pinhole projection.

COORDINATE CONVENTIONS (KITTI camera frame throughout):
  - Camera frame:  x right, y down, z forward (optical axis).
  - Object frame:  attached to the vehicle, x along length l, y along
    height h (down), z along width w. Origin at the model origin.
  - Yaw r_y rotates about the camera/object y axis; at r_y = pi/2 the
    object x axis maps onto -z.
  - Image frame:   u right, v down, pixels.

All functions are pure; values are immutable after construction and safe
to share across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import PointBehindCamera

EPS_DEPTH = 1e-6  # metres; points with z <= EPS_DEPTH cannot be projected

TWO_PI = 2.0 * math.pi


def wrap_angle(theta: float) -> float:
    """Wrap an angle to [-pi, pi)."""
    return (theta + math.pi) % TWO_PI - math.pi


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole parameters (pixels)."""

    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        vals = (self.fx, self.fy, self.cx, self.cy)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("intrinsics must be finite")
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")

    @property
    def matrix(self) -> np.ndarray:
        """3x3 camera matrix K."""
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )


@dataclass(frozen=True)
class Pose:
    """Object-to-camera rigid transform.

    Detection-time poses are yaw-only; the auto-labeler additionally
    optimizes pitch and roll. ``t`` is the object origin in the camera
    frame, metres.
    """

    yaw: float = 0.0
    pitch: float = 0.0
    roll: float = 0.0
    t: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "t", tuple(float(v) for v in self.t))
        object.__setattr__(self, "yaw", wrap_angle(float(self.yaw)))

    def rotation(self) -> np.ndarray:
        return rotation_matrix_euler(self.yaw, self.pitch, self.roll)

    def translation(self) -> np.ndarray:
        return np.asarray(self.t, dtype=float)

    def matrix(self) -> np.ndarray:
        """4x4 homogeneous object-to-camera matrix."""
        m = np.eye(4)
        m[:3, :3] = self.rotation()
        m[:3, 3] = self.t
        return m


def rotation_matrix_yaw(r_y: float) -> np.ndarray:
    """Rotation about the (downward) y axis.

    Maps the object x axis to -z at r_y = pi/2, matching the KITTI yaw
    convention.
    """
    c, s = math.cos(r_y), math.sin(r_y)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rotation_matrix_euler(yaw: float, pitch: float, roll: float) -> np.ndarray:
    """Composed rotation R = R_yaw(y) @ R_pitch(x) @ R_roll(z).

    Reduces to rotation_matrix_yaw when pitch = roll = 0. The composition
    order is a fixed library convention; only the labeler uses the extra
    angles.
    """
    cp, sp = math.cos(pitch), math.sin(pitch)
    cr, sr = math.cos(roll), math.sin(roll)
    rx = np.array([[1.0, 0.0, 0.0], [0.0, cp, -sp], [0.0, sp, cp]])
    rz = np.array([[cr, -sr, 0.0], [sr, cr, 0.0], [0.0, 0.0, 1.0]])
    return rotation_matrix_yaw(yaw) @ rx @ rz


def transform_object_to_camera(p, pose: Pose) -> np.ndarray:
    """R @ p + T for a single point or an (n, 3) array of points."""
    p = np.asarray(p, dtype=float)
    return p @ pose.rotation().T + pose.translation()


def project(p_cam, k: CameraIntrinsics, eps_depth: float = EPS_DEPTH):
    """Pinhole projection of one camera-frame point.

    Returns ((u, v), depth) where depth is the projective scale z.
    Raises PointBehindCamera when z <= eps_depth.
    """
    x, y, z = (float(v) for v in p_cam)
    if z <= eps_depth:
        raise PointBehindCamera(f"point depth {z:.3g} m is at or behind the camera")
    u = k.fx * x / z + k.cx
    v = k.fy * y / z + k.cy
    return (u, v), z


def project_points(pts_cam, k: CameraIntrinsics, eps_depth: float = EPS_DEPTH):
    """Vectorized projection of an (n, 3) array.

    Returns (uv (n, 2), depth (n,)). Raises PointBehindCamera if any point
    fails the depth test; use a mask beforehand for partial sets.
    """
    pts = np.asarray(pts_cam, dtype=float)
    z = pts[:, 2]
    if np.any(z <= eps_depth):
        raise PointBehindCamera("one or more points at or behind the camera")
    uv = np.empty((pts.shape[0], 2))
    uv[:, 0] = k.fx * pts[:, 0] / z + k.cx
    uv[:, 1] = k.fy * pts[:, 1] / z + k.cy
    return uv, z.copy()


def normalize_pixel(k: CameraIntrinsics, p):
    """Remove the affine pixel map: returns ((u - cx)/fx, (v - cy)/fy)."""
    u, v = (float(c) for c in p)
    return (u - k.cx) / k.fx, (v - k.cy) / k.fy


def denormalize_pixel(k: CameraIntrinsics, p_norm):
    """Inverse of normalize_pixel."""
    un, vn = (float(c) for c in p_norm)
    return un * k.fx + k.cx, vn * k.fy + k.cy
