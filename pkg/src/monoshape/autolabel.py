"""Fit shape coefficients and 6-DoF pose to one vehicle's mask and points.

The objective is a weighted sum of a rendered-silhouette L1 against the
instance mask and a one-directional chamfer from the LiDAR points to the
posed mesh vertices:

    L = alpha * L2D + beta * L3D

minimized with Adam-style updates. The silhouette term is differentiated
by central finite differences (the rasterizer is not autodiff-capable);
the chamfer term has analytic gradients with nearest neighbours frozen at
the current iterate. The best-loss iterate is returned, which makes the
fixed step budget robust to late oscillation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial import cKDTree

from .box_metrics import Box3D
from .errors import (
    DivergedLoss,
    EmptyInput,
    InsufficientPoints,
    ProjectionFailure,
    TooFewPoints,
)
from .geometry import (
    EPS_DEPTH,
    CameraIntrinsics,
    Pose,
    rotation_matrix_euler,
    rotation_matrix_yaw,
)
from .pose_solver import KeypointRecord, KeypointSet
from .shape_model import (
    ShapeBasis,
    ShapeCoeff,
    TriangleMesh,
    deform,
    mesh_dimensions,
    normalize_keypoints,
    sample_keypoints,
)
from .silhouette import MaskImage, mask_iou, mask_l1, render_silhouette


@dataclass(frozen=True)
class Observation:
    """Inputs for one vehicle: amodal instance mask, ground-truth box,
    and segmented LiDAR points in the camera frame."""

    instance_mask: MaskImage
    gt_box: Box3D
    points: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "points", np.asarray(self.points, dtype=float).reshape(-1, 3)
        )


@dataclass(frozen=True)
class AutolabelConfig:
    alpha: float = 1.0
    beta: float = 5.0
    learning_rate: float = 0.002
    max_steps: int = 200
    s_dim: int = 4
    s_clamp: float = 3.0
    ransac_iters: int = 200
    ransac_inlier_threshold: float = 0.1
    ground_min_inlier_frac: float = 0.2
    ground_max_normal_angle_deg: float = 30.0
    softness: float = 1.5
    angle_mode: str = "ypr"  # "ypr" optimizes all three angles, "yaw" only r_y
    fd_step_coeff: float = 1e-2
    fd_step_angle: float = 1e-3
    fd_step_trans: float = 1e-3
    seg_margin: float = 0.1
    min_points: int = 10
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    convergence_rtol: float = 1e-4
    convergence_window: int = 10

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("loss weights must be nonnegative")
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")
        if self.angle_mode not in ("ypr", "yaw"):
            raise ValueError(f"unknown angle_mode {self.angle_mode!r}")


_CONFIG_FLOAT_FIELDS = {
    f: float
    for f in (
        "alpha", "beta", "learning_rate", "s_clamp", "ransac_inlier_threshold",
        "ground_min_inlier_frac", "ground_max_normal_angle_deg", "softness",
        "fd_step_coeff", "fd_step_angle", "fd_step_trans", "seg_margin",
        "adam_beta1", "adam_beta2", "convergence_rtol",
    )
}
_CONFIG_INT_FIELDS = {
    f: int
    for f in ("max_steps", "s_dim", "ransac_iters", "min_points", "convergence_window")
}


def parse_config(text: str, base: AutolabelConfig | None = None) -> AutolabelConfig:
    """key=value lines, '#' comments; unknown keys rejected."""
    cfg = base or AutolabelConfig()
    updates = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected key=value")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key in _CONFIG_FLOAT_FIELDS:
            updates[key] = float(value)
        elif key in _CONFIG_INT_FIELDS:
            updates[key] = int(value)
        elif key == "angle_mode":
            updates[key] = value
        else:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
    return replace(cfg, **updates)


def load_config(path, base: AutolabelConfig | None = None) -> AutolabelConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read(), base)


@dataclass(frozen=True)
class FitResult:
    s: ShapeCoeff
    pose: Pose
    final_l2d: float
    final_l3d: float
    mask_iou: float
    box_iou: float
    converged: bool
    loss_curve: tuple = field(default=(), repr=False)


def segment_points_in_box(cloud, box: Box3D, margin: float = 0.1) -> np.ndarray:
    """Points whose box-frame coordinates lie within dims/2 + margin."""
    pts = np.asarray(cloud, dtype=float).reshape(-1, 3)
    if pts.shape[0] == 0:
        return pts
    q = (pts - np.asarray(box.center)) @ rotation_matrix_yaw(box.yaw)
    l, w, h = box.dims
    half = np.array([l / 2.0 + margin, h / 2.0 + margin, w / 2.0 + margin])
    keep = np.all(np.abs(q) <= half, axis=1)
    return pts[keep]


def remove_ground_ransac(points, cfg: AutolabelConfig, seed: int = 0):
    """Drop the dominant ground plane from a point set.

    Fits planes to random 3-point samples; the best plane's inliers are
    removed only when they cover at least cfg.ground_min_inlier_frac of
    the points AND the plane normal lies within
    cfg.ground_max_normal_angle_deg of the camera -y axis (a
    ground-likeness gate so car panels survive). Returns
    (remaining_points, (unit_normal, d)) with the plane as n.p + d = 0,
    or (points, None) when no plane qualifies. Deterministic given seed.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    n = pts.shape[0]
    if n < 3:
        raise TooFewPoints(f"plane fitting needs >= 3 points, got {n}")
    rng = np.random.default_rng(seed)

    best_count = -1
    best_normal = None
    best_d = 0.0
    for _ in range(cfg.ransac_iters):
        i, j, k = rng.choice(n, size=3, replace=False)
        normal = np.cross(pts[j] - pts[i], pts[k] - pts[i])
        norm = np.linalg.norm(normal)
        if norm < 1e-12:
            continue
        normal = normal / norm
        d = -float(normal @ pts[i])
        dist = np.abs(pts @ normal + d)
        count = int(np.sum(dist <= cfg.ransac_inlier_threshold))
        if count > best_count:
            best_count, best_normal, best_d = count, normal, d

    if best_normal is None or best_count < cfg.ground_min_inlier_frac * n:
        return pts, None
    # ground-likeness: normal close to the camera up direction (-y)
    cos_limit = math.cos(math.radians(cfg.ground_max_normal_angle_deg))
    if abs(best_normal[1]) < cos_limit:
        return pts, None
    if best_normal[1] > 0:  # orient the normal upward (-y)
        best_normal, best_d = -best_normal, -best_d
    dist = np.abs(pts @ best_normal + best_d)
    keep = dist > cfg.ransac_inlier_threshold
    return pts[keep], (best_normal, best_d)


def _nearest_vertices(points, posed_vertices):
    """Distances and indices of each point's nearest posed vertex.

    Exact ties resolve to the lowest vertex index.
    """
    tree = cKDTree(posed_vertices)
    kq = min(4, posed_vertices.shape[0])
    dist, idx = tree.query(points, k=kq)
    if kq == 1:
        return dist, idx
    tie = dist == dist[:, [0]]
    best = np.where(tie, idx, posed_vertices.shape[0])
    return dist[:, 0], best.min(axis=1)


def chamfer_l3d(points, mesh: TriangleMesh, pose: Pose) -> float:
    """Sum over points of the distance to the nearest posed mesh vertex."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if pts.shape[0] == 0 or len(mesh.vertices) == 0:
        raise EmptyInput("chamfer needs nonempty points and mesh")
    posed = mesh.vertices @ pose.rotation().T + pose.translation()
    dist, _ = _nearest_vertices(pts, posed)
    return float(np.sum(dist))


def total_loss(s, pose: Pose, basis: ShapeBasis, obs: Observation,
               k: CameraIntrinsics, cfg: AutolabelConfig):
    """(L, l2d, l3d) of the joint objective at (s, pose)."""
    mesh = deform(basis, s if isinstance(s, ShapeCoeff) else ShapeCoeff(s))
    size = (obs.instance_mask.width, obs.instance_mask.height)
    rendered = render_silhouette(mesh, pose, k, size, softness=cfg.softness)
    l2d = mask_l1(rendered, obs.instance_mask)
    l3d = chamfer_l3d(obs.points, mesh, pose)
    return cfg.alpha * l2d + cfg.beta * l3d, l2d, l3d


# --- fit internals ---------------------------------------------------------


def _rotation_derivatives(yaw, pitch, roll):
    """R and dR/dyaw, dR/dpitch, dR/droll for R = Ry @ Rx @ Rz."""
    cy, sy = math.cos(yaw), math.sin(yaw)
    cp, sp = math.cos(pitch), math.sin(pitch)
    cr, sr = math.cos(roll), math.sin(roll)
    ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    rx = np.array([[1, 0, 0], [0, cp, -sp], [0, sp, cp]])
    rz = np.array([[cr, -sr, 0], [sr, cr, 0], [0, 0, 1]])
    dry = np.array([[-sy, 0, cy], [0, 0, 0], [-cy, 0, -sy]])
    drx = np.array([[0, 0, 0], [0, -sp, -cp], [0, cp, -sp]])
    drz = np.array([[-sr, -cr, 0], [cr, -sr, 0], [0, 0, 0]])
    return ry @ rx @ rz, dry @ rx @ rz, ry @ drx @ rz, ry @ rx @ drz


class _Params:
    """Flat parameter vector [s_0..s_{r-1}, yaw, pitch, roll, tx, ty, tz]."""

    def __init__(self, rank):
        self.rank = rank

    def pose(self, theta) -> Pose:
        r = self.rank
        return Pose(yaw=theta[r], pitch=theta[r + 1], roll=theta[r + 2],
                    t=tuple(theta[r + 3 : r + 6]))

    def coeff(self, theta) -> ShapeCoeff:
        return ShapeCoeff(theta[: self.rank])


def _render_l2d(theta, p: _Params, basis, obs, k, softness):
    mesh = deform(basis, p.coeff(theta))
    size = (obs.instance_mask.width, obs.instance_mask.height)
    rendered = render_silhouette(mesh, p.pose(theta), k, size, softness=softness)
    return mask_l1(rendered, obs.instance_mask)


def _chamfer_grad(theta, p: _Params, basis, obs):
    """(l3d, dl3d/dtheta) with nearest neighbours frozen at theta."""
    r = p.rank
    s = theta[:r]
    yaw, pitch, roll = theta[r], theta[r + 1], theta[r + 2]
    t = theta[r + 3 : r + 6]
    rot, dry, drx, drz = _rotation_derivatives(yaw, pitch, roll)
    verts = basis.mean.vertices + np.tensordot(s * basis.sigmas, basis.components, axes=1)
    posed = verts @ rot.T + t
    dist, idx = _nearest_vertices(obs.points, posed)
    l3d = float(np.sum(dist))

    diff = posed[idx] - obs.points  # (n, 3)
    safe = dist > 1e-12
    u = np.zeros_like(diff)
    u[safe] = diff[safe] / dist[safe, None]

    grad = np.zeros(r + 6)
    grad[r + 3 : r + 6] = u.sum(axis=0)
    v_sel = verts[idx]
    grad[r] = float(np.einsum("ij,ij->", u, v_sel @ dry.T))
    grad[r + 1] = float(np.einsum("ij,ij->", u, v_sel @ drx.T))
    grad[r + 2] = float(np.einsum("ij,ij->", u, v_sel @ drz.T))
    if r:
        comp_sel = basis.components[:, idx, :]  # (r, n, 3)
        rotated = np.einsum("ab,knb->kna", rot, comp_sel)
        grad[:r] = basis.sigmas * np.einsum("nj,knj->k", u, rotated)
    return l3d, grad


def chamfer_l3d_grad_t(points, mesh: TriangleMesh, pose: Pose) -> np.ndarray:
    """Analytic gradient of chamfer_l3d with respect to the translation."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if pts.shape[0] == 0 or len(mesh.vertices) == 0:
        raise EmptyInput("chamfer needs nonempty points and mesh")
    posed = mesh.vertices @ pose.rotation().T + pose.translation()
    dist, idx = _nearest_vertices(pts, posed)
    diff = posed[idx] - pts
    safe = dist > 1e-12
    u = np.zeros_like(diff)
    u[safe] = diff[safe] / dist[safe, None]
    return u.sum(axis=0)


def fit(obs: Observation, basis: ShapeBasis, k: CameraIntrinsics,
        cfg: AutolabelConfig | None = None, seed: int = 0) -> FitResult:
    """Optimize (s, yaw, pitch, roll, t) against mask and points.

    Translation and yaw initialize from the ground-truth box; pitch,
    roll, and the shape coefficients start at zero. Deterministic given
    (inputs, seed); the returned parameters are the best-loss iterate.
    """
    cfg = cfg or AutolabelConfig()
    if obs.points.shape[0] < cfg.min_points:
        raise InsufficientPoints(
            f"{obs.points.shape[0]} points < required {cfg.min_points}"
        )
    if not np.any(obs.instance_mask.values >= 0.5):
        raise EmptyInput("instance mask is empty")
    del seed  # no stochastic steps; kept for interface stability

    r = basis.rank
    if cfg.s_dim != r:
        raise ValueError(f"config s_dim {cfg.s_dim} != basis rank {r}")
    p = _Params(r)
    theta = np.zeros(r + 6)
    theta[r] = obs.gt_box.yaw
    theta[r + 3 : r + 6] = obs.gt_box.center

    fd_steps = np.concatenate([
        np.full(r, cfg.fd_step_coeff),
        np.full(3, cfg.fd_step_angle),
        np.full(3, cfg.fd_step_trans),
    ])
    active_2d = list(range(r + 6))
    if cfg.angle_mode == "yaw":
        active_2d = [i for i in active_2d if i not in (r + 1, r + 2)]

    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    b1, b2, eps = cfg.adam_beta1, cfg.adam_beta2, 1e-8

    losses = []
    best_loss = math.inf
    best_theta = theta.copy()
    converged = False

    for step in range(cfg.max_steps + 1):
        l3d, g3d = _chamfer_grad(theta, p, basis, obs) if cfg.beta > 0 else (0.0, 0.0)
        if cfg.alpha > 0:
            l2d = _render_l2d(theta, p, basis, obs, k, cfg.softness)
        else:
            l2d = 0.0
        loss = cfg.alpha * l2d + cfg.beta * l3d
        if not math.isfinite(loss):
            raise DivergedLoss(f"loss became non-finite at step {step}")
        losses.append(loss)
        if loss < best_loss:
            best_loss = loss
            best_theta = theta.copy()

        if loss == 0.0:
            converged = True
            break
        w = cfg.convergence_window
        if step >= w and abs(losses[step - w] - losses[step]) < (
            cfg.convergence_rtol * max(abs(losses[step - w]), 1e-12)
        ):
            converged = True
            break
        if step == cfg.max_steps:
            break

        grad = np.zeros_like(theta)
        if cfg.beta > 0:
            grad += cfg.beta * g3d
        if cfg.alpha > 0:
            for i in active_2d:
                h = fd_steps[i]
                t_hi = theta.copy()
                t_hi[i] += h
                t_lo = theta.copy()
                t_lo[i] -= h
                hi = _render_l2d(t_hi, p, basis, obs, k, cfg.softness)
                lo = _render_l2d(t_lo, p, basis, obs, k, cfg.softness)
                grad[i] += cfg.alpha * (hi - lo) / (2.0 * h)
        if cfg.angle_mode == "yaw":
            grad[r + 1] = 0.0
            grad[r + 2] = 0.0

        m = b1 * m + (1.0 - b1) * grad
        v = b2 * v + (1.0 - b2) * grad * grad
        t_ad = step + 1
        m_hat = m / (1.0 - b1**t_ad)
        v_hat = v / (1.0 - b2**t_ad)
        theta = theta - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + eps)
        theta[:r] = np.clip(theta[:r], -cfg.s_clamp, cfg.s_clamp)

    theta = best_theta
    s_fit = p.coeff(theta)
    pose_fit = p.pose(theta)
    _, l2d, l3d = total_loss(s_fit, pose_fit, basis, obs, k, cfg)

    mesh = deform(basis, s_fit)
    size = (obs.instance_mask.width, obs.instance_mask.height)
    hard = render_silhouette(mesh, pose_fit, k, size, softness=0.0)
    miou = mask_iou(hard, obs.instance_mask)
    biou = iou_of_fitted_box(basis, s_fit, pose_fit, obs.gt_box)

    return FitResult(
        s=s_fit, pose=pose_fit, final_l2d=l2d, final_l3d=l3d,
        mask_iou=miou, box_iou=biou, converged=converged,
        loss_curve=tuple(losses),
    )


def fitted_box(basis: ShapeBasis, s: ShapeCoeff, pose: Pose) -> Box3D:
    """Labeled 3D box: deformed-mesh dimensions under the fitted pose."""
    dims, offset = mesh_dimensions(deform(basis, s))
    center = pose.rotation() @ offset + pose.translation()
    return Box3D(center=tuple(center), dims=dims, yaw=pose.yaw)


def iou_of_fitted_box(basis, s, pose, gt_box: Box3D) -> float:
    from .box_metrics import iou_3d

    return iou_3d(fitted_box(basis, s, pose), gt_box)


def export_keypoint_labels(result: FitResult, basis: ShapeBasis, spec,
                           k: CameraIntrinsics) -> KeypointRecord:
    """Keypoint ground truth from a fit.

    3D keypoints are object-local and dimension-normalized (the record
    carries the dims to undo it); 2D keypoints are their projections
    under the fitted pose; confidences start at 1.
    """
    if len(spec) == 0:
        raise EmptyInput("keypoint spec has no vertices")
    mesh = deform(basis, result.s)
    kps_local = sample_keypoints(mesh, spec)
    dims, _ = mesh_dimensions(mesh)

    cam = kps_local @ result.pose.rotation().T + result.pose.translation()
    if np.any(cam[:, 2] <= EPS_DEPTH):
        raise ProjectionFailure("fitted keypoint behind the camera")
    uv = np.empty((len(cam), 2))
    uv[:, 0] = k.fx * cam[:, 0] / cam[:, 2] + k.cx
    uv[:, 1] = k.fy * cam[:, 1] / cam[:, 2] + k.cy

    normalized = normalize_keypoints(kps_local, dims)
    kps = KeypointSet.from_arrays(uv, normalized)
    return KeypointRecord(
        yaw=result.pose.yaw, intrinsics=k, keypoints=kps, dims=dims
    )
