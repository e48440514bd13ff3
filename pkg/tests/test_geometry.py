import math

import numpy as np
import pytest

from monoshape.errors import PointBehindCamera
from monoshape.geometry import (
    CameraIntrinsics,
    Pose,
    denormalize_pixel,
    normalize_pixel,
    project,
    project_points,
    rotation_matrix_euler,
    rotation_matrix_yaw,
    transform_object_to_camera,
    wrap_angle,
)

K = CameraIntrinsics(fx=700.0, fy=700.0, cx=640.0, cy=192.0)


def test_transform_origin_is_translation():
    pose = Pose(yaw=0.0, t=(1.0, 2.0, 3.0))
    assert np.allclose(transform_object_to_camera((0, 0, 0), pose), (1, 2, 3))


def test_transform_yaw_quarter_turn_maps_x_to_minus_z():
    pose = Pose(yaw=math.pi / 2, t=(0.0, 0.0, 0.0))
    out = transform_object_to_camera((1, 0, 0), pose)
    assert np.allclose(out, (0, 0, -1), atol=1e-15)


def test_transform_matches_homogeneous_oracle(rng):
    # independent oracle: 4x4 homogeneous matrix applied to [p; 1]
    for _ in range(200):
        pose = Pose(
            yaw=rng.uniform(-math.pi, math.pi),
            pitch=rng.uniform(-0.5, 0.5),
            roll=rng.uniform(-0.5, 0.5),
            t=tuple(rng.uniform(-10, 10, 3)),
        )
        p = rng.uniform(-5, 5, 3)
        hom = pose.matrix() @ np.append(p, 1.0)
        assert np.allclose(transform_object_to_camera(p, pose), hom[:3], atol=1e-12)


def test_project_principal_point():
    (u, v), depth = project((0, 0, 10), K)
    assert (u, v) == (640.0, 192.0)
    assert depth == 10.0


def test_project_offset_point():
    (u, v), depth = project((1, 0, 10), K)
    assert math.isclose(u, 710.0)
    assert v == 192.0 and depth == 10.0


def test_project_rejects_zero_depth():
    with pytest.raises(PointBehindCamera):
        project((0, 0, 0), K)
    with pytest.raises(PointBehindCamera):
        project((1, 1, -3), K)
    with pytest.raises(PointBehindCamera):
        project_points([[0, 0, 5], [0, 0, 1e-9]], K)


def test_normalize_pixel_values():
    assert normalize_pixel(K, (640, 192)) == (0.0, 0.0)
    un, vn = normalize_pixel(K, (710, 192))
    assert math.isclose(un, 0.1) and vn == 0.0


def test_normalize_pixel_roundtrip_and_projection_identity(rng):
    # normalize(project(p)) must equal (x/z, y/z) algebraically
    for _ in range(100):
        p = rng.uniform(-4, 4, 3)
        p[2] = rng.uniform(2.0, 60.0)
        (u, v), _ = project(p, K)
        un, vn = normalize_pixel(K, (u, v))
        assert math.isclose(un, p[0] / p[2], abs_tol=1e-9)
        assert math.isclose(vn, p[1] / p[2], abs_tol=1e-9)
        ud, vd = denormalize_pixel(K, (un, vn))
        assert math.isclose(ud, u, abs_tol=1e-9) and math.isclose(vd, v, abs_tol=1e-9)


def test_yaw_matrix_special_angles():
    assert np.allclose(rotation_matrix_yaw(0.0), np.eye(3))
    r = rotation_matrix_yaw(math.pi)
    assert np.allclose(r, np.diag([-1.0, 1.0, -1.0]), atol=1e-15)


def test_yaw_matrix_orthonormality(rng):
    for _ in range(300):
        r = rotation_matrix_yaw(rng.uniform(-10, 10))
        assert np.abs(r.T @ r - np.eye(3)).max() < 1e-12
        assert abs(np.linalg.det(r) - 1.0) < 1e-12


def test_euler_reduces_to_yaw(rng):
    for theta in rng.uniform(-math.pi, math.pi, 20):
        assert np.allclose(
            rotation_matrix_euler(theta, 0.0, 0.0), rotation_matrix_yaw(theta)
        )
    assert np.allclose(rotation_matrix_euler(0, 0, 0), np.eye(3))


def test_euler_orthonormal(rng):
    for _ in range(300):
        y, p, r = rng.uniform(-math.pi, math.pi, 3)
        m = rotation_matrix_euler(y, p, r)
        assert np.abs(m.T @ m - np.eye(3)).max() < 1e-10
        assert abs(np.linalg.det(m) - 1.0) < 1e-10


def test_projection_composition_matches_full_equation(rng):
    # project(transform(p)) vs the single 3x4 matrix K [R|T]
    for _ in range(100):
        pose = Pose(yaw=rng.uniform(-math.pi, math.pi), t=(0.5, 1.0, rng.uniform(5, 50)))
        p = rng.uniform(-2, 2, 3)
        cam = transform_object_to_camera(p, pose)
        if cam[2] < 1e-3:
            continue
        (u, v), _ = project(cam, K)
        krt = K.matrix @ np.hstack([pose.rotation(), pose.translation()[:, None]])
        proj = krt @ np.append(p, 1.0)
        assert abs(u - proj[0] / proj[2]) < 1e-9
        assert abs(v - proj[1] / proj[2]) < 1e-9


def test_wrap_angle_range(rng):
    for theta in rng.uniform(-50, 50, 1000):
        w = wrap_angle(theta)
        assert -math.pi <= w < math.pi
        assert math.isclose(math.sin(w), math.sin(theta), abs_tol=1e-9)
        assert math.isclose(math.cos(w), math.cos(theta), abs_tol=1e-9)


def test_intrinsics_validation():
    with pytest.raises(ValueError):
        CameraIntrinsics(fx=-1, fy=700, cx=0, cy=0)
    with pytest.raises(ValueError):
        CameraIntrinsics(fx=float("nan"), fy=700, cx=0, cy=0)
