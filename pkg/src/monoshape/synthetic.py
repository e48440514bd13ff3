"""Seeded synthetic scene generation.

Stands in for real drive data: draws a shape and pose, renders the
instance mask, samples noisy surface points from camera-facing faces,
and projects keypoints into a record. Everything is a pure function of
the RNG state, so a fixed seed reproduces files bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .autolabel import Observation
from .box_metrics import Box3D
from .geometry import CameraIntrinsics, Pose
from .pose_solver import KeypointRecord, KeypointSet
from .shape_model import (
    ShapeBasis,
    ShapeCoeff,
    deform,
    mesh_dimensions,
    normalize_keypoints,
    sample_keypoints,
)
from .silhouette import MaskImage, render_silhouette

DEFAULT_INTRINSICS = CameraIntrinsics(fx=280.0, fy=280.0, cx=128.0, cy=128.0)
DEFAULT_SIZE = (256, 256)


@dataclass(frozen=True)
class SyntheticObject:
    """One generated object with its ground truth."""

    s_true: ShapeCoeff
    pose_true: Pose
    dims: tuple
    box: Box3D
    record: KeypointRecord
    mask: MaskImage
    points: np.ndarray

    def observation(self) -> Observation:
        return Observation(instance_mask=self.mask, gt_box=self.box, points=self.points)


def sample_surface_points(mesh, pose: Pose, rng, n_points=300, noise=0.01,
                          visible_only=False) -> np.ndarray:
    """Noisy camera-frame points drawn from the mesh surface.

    With visible_only, only faces whose outward normal points toward the
    camera contribute, mimicking a one-sided scan.
    """
    rot = pose.rotation()
    t = pose.translation()
    v = mesh.vertices[mesh.faces]  # (F, 3, 3) object frame
    normals = np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])
    areas = 0.5 * np.linalg.norm(normals, axis=1)
    cam_centroid = v.mean(axis=1) @ rot.T + t
    cam_normal = normals @ rot.T
    if visible_only:
        facing = np.einsum("ij,ij->i", cam_normal, cam_centroid) < 0.0
        if not np.any(facing):
            facing = np.ones(len(v), dtype=bool)
    else:
        facing = np.ones(len(v), dtype=bool)
    weights = areas * facing
    weights = weights / weights.sum()
    choice = rng.choice(len(v), size=n_points, p=weights)
    r1 = rng.random(n_points)
    r2 = rng.random(n_points)
    swap = r1 + r2 > 1.0
    r1[swap], r2[swap] = 1.0 - r1[swap], 1.0 - r2[swap]
    tri = v[choice]
    pts_obj = tri[:, 0] + r1[:, None] * (tri[:, 1] - tri[:, 0]) + r2[:, None] * (
        tri[:, 2] - tri[:, 0]
    )
    pts_cam = pts_obj @ rot.T + t
    if noise > 0:
        pts_cam = pts_cam + rng.normal(scale=noise, size=pts_cam.shape)
    return pts_cam


def true_box(basis: ShapeBasis, s: ShapeCoeff, pose: Pose) -> Box3D:
    """Yaw-only ground-truth box of the deformed mesh under its pose."""
    dims, offset = mesh_dimensions(deform(basis, s))
    center = pose.rotation() @ offset + pose.translation()
    return Box3D(center=tuple(center), dims=dims, yaw=pose.yaw)


def make_object(
    rng,
    basis: ShapeBasis,
    k: CameraIntrinsics = DEFAULT_INTRINSICS,
    size=DEFAULT_SIZE,
    noise_px: float = 0.0,
    n_points: int = 300,
    point_noise: float = 0.01,
    depth_range=(9.0, 22.0),
    pitch: float = 0.0,
    roll: float = 0.0,
    coeff_range: float = 0.35,
) -> SyntheticObject:
    """Draw one object: shape, pose, mask, surface points, keypoints."""
    s = ShapeCoeff(rng.uniform(-coeff_range, coeff_range, basis.rank))
    yaw = rng.uniform(-math.pi, math.pi)
    z = rng.uniform(*depth_range)
    # keep the projection inside the frame: pick a pixel near the center
    u = rng.uniform(0.35, 0.65) * size[0]
    v = rng.uniform(0.45, 0.62) * size[1]
    t = ((u - k.cx) / k.fx * z, (v - k.cy) / k.fy * z, z)
    pose = Pose(yaw=yaw, pitch=pitch, roll=roll, t=t)

    mesh = deform(basis, s)
    dims, _ = mesh_dimensions(mesh)
    box = true_box(basis, s, pose)
    mask = render_silhouette(mesh, pose, k, size, softness=0.0)
    points = sample_surface_points(mesh, pose, rng, n_points, point_noise)

    kps_local = sample_keypoints(mesh, basis.keypoint_spec)
    cam = kps_local @ pose.rotation().T + pose.translation()
    uv = np.empty((len(cam), 2))
    uv[:, 0] = k.fx * cam[:, 0] / cam[:, 2] + k.cx
    uv[:, 1] = k.fy * cam[:, 1] / cam[:, 2] + k.cy
    if noise_px > 0:
        uv = uv + rng.normal(scale=noise_px, size=uv.shape)
    record = KeypointRecord(
        yaw=yaw,
        intrinsics=k,
        keypoints=KeypointSet.from_arrays(uv, normalize_keypoints(kps_local, dims)),
        dims=dims,
    )
    return SyntheticObject(
        s_true=s, pose_true=pose, dims=dims, box=box,
        record=record, mask=mask, points=points,
    )


def make_tilted_ground_object(seed: int, basis: ShapeBasis,
                              tilt_deg: float = 5.0) -> SyntheticObject:
    """Fixture for the 3-angle-vs-yaw-only comparison: the car sits on a
    ground plane tilted by tilt_deg, so its true pitch is nonzero while
    the ground-truth box (and thus the fit initialization) is yaw-only."""
    rng = np.random.default_rng(seed)
    return make_object(rng, basis, pitch=math.radians(tilt_deg))


def random_solver_scene(rng, k: CameraIntrinsics, n_keypoints=17,
                        depth_range=(4.0, 80.0), dims=(4.2, 1.76, 1.48)):
    """Random noiseless 2D/3D correspondences with known yaw and T.

    Keypoints are drawn inside the object's dimension box and projected
    exactly; returns (KeypointSet, yaw, t). Used by recovery tests and
    the synthetic solver benchmarks.
    """
    from .geometry import rotation_matrix_yaw

    yaw = rng.uniform(-math.pi, math.pi)
    z = rng.uniform(*depth_range)
    t = np.array([rng.uniform(-0.15, 0.15) * z, rng.uniform(-0.05, 0.12) * z, z])
    l, w, h = dims
    p3d = rng.uniform(-0.5, 0.5, size=(n_keypoints, 3)) * np.array([l, h, w])
    cam = p3d @ rotation_matrix_yaw(yaw).T + t
    uv = np.empty((n_keypoints, 2))
    uv[:, 0] = k.fx * cam[:, 0] / cam[:, 2] + k.cx
    uv[:, 1] = k.fy * cam[:, 1] / cam[:, 2] + k.cy
    return KeypointSet.from_arrays(uv, p3d), yaw, t
