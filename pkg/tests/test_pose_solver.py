import math

import numpy as np
import pytest

from monoshape.errors import (
    AllWeightsZero,
    MalformedLine,
    NonFiniteInput,
    NonPositiveDimension,
    RankDeficient,
    SingularNormalMatrix,
    TooFewKeypoints,
)
from monoshape.geometry import CameraIntrinsics, Pose, project, transform_object_to_camera
from monoshape.pose_solver import (
    ConstraintSystem,
    KeypointPair,
    KeypointRecord,
    KeypointSet,
    assemble_system,
    denormalize_keypoints3d,
    format_keypoint_records,
    parse_keypoint_records,
    solve_record,
    solve_translation,
    solve_translation_normal_equations,
)
from monoshape.synthetic import random_solver_scene

K = CameraIntrinsics(fx=700.0, fy=700.0, cx=640.0, cy=192.0)


def project_keypoints(p3d, yaw, t, k, conf=None):
    """Forward-generate exact 2D/3D correspondences from a known pose."""
    pose = Pose(yaw=yaw, t=t)
    uv = []
    for p in p3d:
        cam = transform_object_to_camera(p, pose)
        (u, v), _ = project(cam, k)
        uv.append((u, v))
    return KeypointSet.from_arrays(np.array(uv), np.array(p3d, dtype=float), conf)


def test_assemble_row_pattern():
    # normalized coords (0.1, 0) for the first keypoint, (0, 0.05) second
    kps = KeypointSet(
        [
            KeypointPair((K.cx + 0.1 * K.fx, K.cy), (1.0, 0.0, 0.0)),
            KeypointPair((K.cx, K.cy + 0.05 * K.fy), (0.0, 1.0, 0.0)),
        ]
    )
    sys = assemble_system(kps, 0.0, K)
    assert sys.A.shape == (4, 3)
    assert np.allclose(sys.A[0], [-1.0, 0.0, 0.1])
    assert np.allclose(sys.A[1], [0.0, -1.0, 0.0])
    assert np.allclose(sys.A[2], [-1.0, 0.0, 0.0])
    assert np.allclose(sys.A[3], [0.0, -1.0, 0.05])
    assert np.allclose(sys.w, 1.0)


def test_constraint_identity_symbolic():
    # derive the two-row constraint from the projection equations with
    # sympy and check our assembled rows satisfy it exactly
    import sympy as sp

    x, y, z, ry, tx, ty, tz = sp.symbols("x y z r_y T_x T_y T_z", real=True)
    xc = x * sp.cos(ry) + z * sp.sin(ry) + tx
    yc = y + ty
    zc = -x * sp.sin(ry) + z * sp.cos(ry) + tz
    un = xc / zc
    vn = yc / zc
    cross = x * sp.sin(ry) - z * sp.cos(ry)
    b_u = x * sp.cos(ry) + z * sp.sin(ry) + un * cross
    b_v = y + vn * cross
    lhs_u = -tx + un * tz
    lhs_v = -ty + vn * tz
    assert sp.simplify(lhs_u - b_u) == 0
    assert sp.simplify(lhs_v - b_v) == 0


def test_assemble_b_matches_symbolic_expression(rng):
    # numeric spot-check of the B rows against the closed-form expression
    for _ in range(50):
        yaw = rng.uniform(-math.pi, math.pi)
        p3d = rng.uniform(-2, 2, (3, 3))
        t = (0.4, 0.9, rng.uniform(6, 40))
        kps = project_keypoints(p3d, yaw, t, K)
        sys = assemble_system(kps, yaw, K)
        c, s = math.cos(yaw), math.sin(yaw)
        for i, p in enumerate(p3d):
            un = (kps.p2d[i, 0] - K.cx) / K.fx
            vn = (kps.p2d[i, 1] - K.cy) / K.fy
            cross = p[0] * s - p[2] * c
            assert math.isclose(sys.B[2 * i], p[0] * c + p[2] * s + un * cross, rel_tol=1e-12)
            assert math.isclose(sys.B[2 * i + 1], p[1] + vn * cross, rel_tol=1e-12)


def test_forward_generated_scene_satisfies_system(rng):
    for _ in range(50):
        yaw = rng.uniform(-math.pi, math.pi)
        t = np.array([1.2, 0.8, rng.uniform(5, 60)])
        p3d = rng.uniform(-2, 2, (9, 3))
        kps = project_keypoints(p3d, yaw, tuple(t), K)
        sys = assemble_system(kps, yaw, K)
        assert np.abs(sys.A @ t - sys.B).max() < 1e-9


def test_assemble_rejects_too_few_and_nonfinite():
    with pytest.raises(TooFewKeypoints):
        KeypointSet([KeypointPair((0, 0), (0, 0, 0))])
    kps = KeypointSet(
        [KeypointPair((1, 2), (0, 0, 0)), KeypointPair((3, 4), (1, 1, 1))]
    )
    with pytest.raises(NonFiniteInput):
        assemble_system(kps, float("nan"), K)
    bad = KeypointSet.from_arrays([[np.inf, 0], [0, 0]], np.zeros((2, 3)))
    with pytest.raises(NonFiniteInput):
        assemble_system(bad, 0.0, K)


def test_noiseless_recovery_17_keypoints(rng):
    t_true = np.array([1.5, 1.2, 20.0])
    p3d = rng.uniform(-0.5, 0.5, (17, 3)) * np.array([4.2, 1.5, 1.8])
    kps = project_keypoints(p3d, 0.3, tuple(t_true), K)
    sol = solve_translation(assemble_system(kps, 0.3, K))
    assert np.linalg.norm(sol.t - t_true) < 1e-6
    assert sol.effective_rank == 3
    assert sol.weighted_rms_residual < 1e-9


def test_zero_weight_outliers_do_not_matter(rng):
    t_true = np.array([1.5, 1.2, 20.0])
    p3d = rng.uniform(-0.5, 0.5, (17, 3)) * np.array([4.2, 1.5, 1.8])
    kps = project_keypoints(p3d, 0.3, tuple(t_true), K)
    p2d = kps.p2d.copy()
    conf = np.ones((17, 2))
    for idx in (2, 8, 14):
        p2d[idx] += 50.0  # gross corruption
        conf[idx] = 0.0
    corrupted = KeypointSet.from_arrays(p2d, kps.p3d, conf)
    sol = solve_translation(assemble_system(corrupted, 0.3, K))
    assert np.linalg.norm(sol.t - t_true) < 1e-6


def test_rank_deficient_same_ray():
    # two keypoints on the same normalized ray span only rank 2
    kps = KeypointSet(
        [
            KeypointPair((700.0, 200.0), (1.0, 0.0, 0.0)),
            KeypointPair((700.0, 200.0), (0.0, 1.0, 0.5)),
        ]
    )
    with pytest.raises(RankDeficient) as exc_info:
        solve_translation(assemble_system(kps, 0.2, K))
    assert len(exc_info.value.unobservable) == 1


def test_all_weights_zero():
    kps = KeypointSet.from_arrays(
        [[640, 192], [700, 200]], np.zeros((2, 3)), np.zeros((2, 2))
    )
    with pytest.raises(AllWeightsZero):
        solve_translation(assemble_system(kps, 0.0, K))


def test_weight_scaling_invariance(rng):
    yaw = 0.7
    t = np.array([0.5, 1.0, 15.0])
    p3d = rng.uniform(-1.5, 1.5, (8, 3))
    conf = rng.uniform(0.2, 1.0, (8, 2))
    kps = project_keypoints(p3d, yaw, tuple(t), K, conf)
    kps.p2d[:] += rng.normal(scale=1.0, size=kps.p2d.shape)
    sys = assemble_system(kps, yaw, K)
    sol1 = solve_translation(sys)
    scaled = ConstraintSystem(sys.A, sys.B, sys.w * 0.37)
    sol2 = solve_translation(scaled)
    assert np.linalg.norm(sol1.t - sol2.t) < 1e-12


def test_outlier_weight_monotonicity(rng):
    # raising an outlier's weight must not bring the solution closer to truth
    yaw = -0.4
    t_true = np.array([1.0, 1.4, 18.0])
    p3d = rng.uniform(-0.5, 0.5, (10, 3)) * np.array([4.2, 1.5, 1.8])
    kps = project_keypoints(p3d, yaw, tuple(t_true), K)
    p2d = kps.p2d.copy()
    p2d[0] += np.array([40.0, -25.0])
    errs = []
    for w_out in (0.0, 0.5, 1.0):
        conf = np.ones((10, 2))
        conf[0] = w_out
        sys = assemble_system(KeypointSet.from_arrays(p2d, kps.p3d, conf), yaw, K)
        errs.append(np.linalg.norm(solve_translation(sys).t - t_true))
    assert errs[0] <= errs[1] <= errs[2]
    assert errs[0] < 1e-6


def test_svd_and_normal_equations_agree(rng):
    for _ in range(100):
        kps, yaw, t = random_solver_scene(rng, K, n_keypoints=10)
        noisy = KeypointSet.from_arrays(
            kps.p2d + rng.normal(scale=0.5, size=kps.p2d.shape), kps.p3d
        )
        sys = assemble_system(noisy, yaw, K)
        s1 = solve_translation(sys)
        s2 = solve_translation_normal_equations(sys)
        assert np.linalg.norm(s1.t - s2.t) < 1e-9


def test_normal_equations_identity_like():
    sys = ConstraintSystem(
        np.array([[-1.0, 0, 0], [0, -1.0, 0], [0, 0, 1.0]]),
        np.array([1.0, 2.0, 3.0]),
        np.ones(3),
    )
    sol = solve_translation_normal_equations(sys)
    assert np.allclose(sol.t, [-1.0, -2.0, 3.0])


def test_normal_equations_singular():
    sys = ConstraintSystem(
        np.array([[-1.0, 0, 0], [-1.0, 0, 0], [0, -1.0, 0], [0, -1.0, 0]]),
        np.zeros(4),
        np.ones(4),
    )
    with pytest.raises(SingularNormalMatrix):
        solve_translation_normal_equations(sys)


def test_denormalize_keypoints():
    kps = KeypointSet.from_arrays(
        [[0, 0], [1, 1], [2, 2]],
        [[0.0, 0.0, 0.0], [0.5, 0.0, 0.0], [0.1, -0.2, 0.3]],
    )
    out = denormalize_keypoints3d(kps, (4.0, 1.8, 1.5))
    assert np.allclose(out.p3d[0], [0, 0, 0])
    assert np.allclose(out.p3d[1], [2.0, 0, 0])
    # x scales by l, y by h, z by w
    assert np.allclose(out.p3d[2], [0.4, -0.3, 0.54])
    with pytest.raises(NonPositiveDimension):
        denormalize_keypoints3d(kps, (0.0, 1.0, 1.0))


def test_normalize_denormalize_roundtrip(rng):
    from monoshape.shape_model import normalize_keypoints

    dims = (4.2, 1.76, 1.48)
    pts = rng.uniform(-2, 2, (12, 3))
    kps = KeypointSet.from_arrays(rng.uniform(0, 100, (12, 2)), normalize_keypoints(pts, dims))
    back = denormalize_keypoints3d(kps, dims)
    assert np.abs(back.p3d - pts).max() < 1e-12


def test_record_file_roundtrip(rng):
    kps, yaw, _ = random_solver_scene(rng, K, n_keypoints=5)
    recs = [
        KeypointRecord(yaw, K, kps, None),
        KeypointRecord(-0.3, K, kps, (4.1, 1.7, 1.5)),
    ]
    text = format_keypoint_records(recs)
    back = parse_keypoint_records(text)
    assert len(back) == 2
    assert back[0].yaw == yaw and back[0].dims is None
    assert back[1].dims == (4.1, 1.7, 1.5)
    for orig, parsed in zip(recs, back):
        assert np.array_equal(orig.keypoints.p2d, parsed.keypoints.p2d)
        assert np.array_equal(orig.keypoints.p3d, parsed.keypoints.p3d)
        assert np.array_equal(orig.keypoints.conf, parsed.keypoints.conf)


def test_record_parse_errors():
    with pytest.raises(MalformedLine):
        parse_keypoint_records("yaw 0.1\nintrinsics 1 1 0 0\nn 2\n1 2 3 4 5 1 1\n")
    with pytest.raises(MalformedLine):
        parse_keypoint_records("intrinsics 1 1 0 0\n")
    with pytest.raises(MalformedLine):
        parse_keypoint_records("yaw 0.1\nintrinsics 1 1 0 0\nn 1\n1 2 3 4 5 1\n")


def test_comments_and_blank_lines_ignored(rng):
    kps, yaw, _ = random_solver_scene(rng, K, n_keypoints=3)
    text = format_keypoint_records([KeypointRecord(yaw, K, kps, None)])
    commented = "# header comment\n\n" + text.replace("\n", "  # inline\n", 1)
    assert len(parse_keypoint_records(commented)) == 1


def test_solve_record_with_dims(rng):
    # normalized 3D keypoints plus dims solve to the same translation
    from monoshape.shape_model import normalize_keypoints

    kps, yaw, t = random_solver_scene(rng, K, n_keypoints=12)
    dims = (4.2, 1.76, 1.48)
    norm = KeypointSet.from_arrays(kps.p2d, normalize_keypoints(kps.p3d, dims))
    sol = solve_record(KeypointRecord(yaw, K, norm, dims))
    assert np.linalg.norm(sol.t - t) < 1e-6
