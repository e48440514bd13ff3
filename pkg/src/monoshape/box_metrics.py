"""Rotated 3D bounding boxes and IoU metrics for labeling evaluation.

BEV overlap comes from Sutherland-Hodgman clipping of the two yaw-rotated
rectangles (exact for convex polygons); 3D IoU extends it by the vertical
(y) extent overlap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import LengthMismatch, NonPositiveDimension
from .silhouette import MaskImage, mask_iou

_AREA_TOL = 1e-12


@dataclass(frozen=True)
class Box3D:
    """Geometric-center box: center (x, y, z) m, dims (l, w, h) m, yaw rad."""

    center: tuple
    dims: tuple
    yaw: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))
        object.__setattr__(self, "dims", tuple(float(v) for v in self.dims))
        if any(d <= 0 for d in self.dims):
            raise NonPositiveDimension(f"box dims must be positive, got {self.dims}")

    @property
    def volume(self) -> float:
        l, w, h = self.dims
        return l * w * h


def box_corners(box: Box3D) -> np.ndarray:
    """8 corners: bottom face (larger y) counterclockwise viewed from
    above (the -y side), then the top face in the same x/z order."""
    l, w, h = box.dims
    xz = np.array([[l, w], [-l, w], [-l, -w], [l, -w]]) / 2.0
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    # yaw about y: x' = x cos + z sin, z' = -x sin + z cos
    rx = xz[:, 0] * c + xz[:, 1] * s
    rz = -xz[:, 0] * s + xz[:, 1] * c
    cx, cy, cz = box.center
    out = np.empty((8, 3))
    out[:4, 0] = rx + cx
    out[:4, 1] = cy + h / 2.0
    out[:4, 2] = rz + cz
    out[4:, 0] = rx + cx
    out[4:, 1] = cy - h / 2.0
    out[4:, 2] = rz + cz
    return out


def _bev_rect(box: Box3D) -> np.ndarray:
    """Bottom-face footprint in the (x, z) plane, CCW."""
    return box_corners(box)[:4][:, [0, 2]]


def _shoelace(poly) -> float:
    if len(poly) < 3:
        return 0.0
    p = np.asarray(poly)
    x, z = p[:, 0], p[:, 1]
    return 0.5 * float(np.sum(x * np.roll(z, -1) - np.roll(x, -1) * z))


def _clip_polygon(subject, clip):
    """Sutherland-Hodgman: subject clipped by a convex CCW polygon."""

    def side(a, b, p):
        return (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])

    def intersect(a, b, p, q):
        dc = (a[0] - b[0], a[1] - b[1])
        dp = (p[0] - q[0], p[1] - q[1])
        n1 = a[0] * b[1] - a[1] * b[0]
        n2 = p[0] * q[1] - p[1] * q[0]
        den = dc[0] * dp[1] - dc[1] * dp[0]
        return ((n1 * dp[0] - n2 * dc[0]) / den, (n1 * dp[1] - n2 * dc[1]) / den)

    output = [tuple(p) for p in subject]
    n = len(clip)
    for i in range(n):
        if not output:
            return []
        a, b = tuple(clip[i]), tuple(clip[(i + 1) % n])
        polygon = output
        output = []
        m = len(polygon)
        for j in range(m):
            p, q = polygon[j], polygon[(j + 1) % m]
            p_in = side(a, b, p) >= 0.0
            q_in = side(a, b, q) >= 0.0
            if p_in and q_in:
                output.append(q)
            elif p_in:
                output.append(intersect(a, b, p, q))
            elif q_in:
                output.append(intersect(a, b, p, q))
                output.append(q)
    return output


def _bev_intersection_area(a: Box3D, b: Box3D) -> float:
    inter = _clip_polygon(_bev_rect(a), _bev_rect(b))
    area = _shoelace(inter)
    return area if area > _AREA_TOL else 0.0


def iou_bev(a: Box3D, b: Box3D) -> float:
    """Bird's-eye-view IoU of the yaw-rotated footprints."""
    inter = _bev_intersection_area(a, b)
    area_a = a.dims[0] * a.dims[1]
    area_b = b.dims[0] * b.dims[1]
    union = area_a + area_b - inter
    if union <= 0.0:
        return 0.0
    return min(max(inter / union, 0.0), 1.0)


def iou_3d(a: Box3D, b: Box3D) -> float:
    """3D IoU: BEV intersection area times y-overlap over volume union."""
    inter_area = _bev_intersection_area(a, b)
    ya0, ya1 = a.center[1] - a.dims[2] / 2.0, a.center[1] + a.dims[2] / 2.0
    yb0, yb1 = b.center[1] - b.dims[2] / 2.0, b.center[1] + b.dims[2] / 2.0
    y_overlap = max(0.0, min(ya1, yb1) - max(ya0, yb0))
    inter = inter_area * y_overlap
    union = a.volume + b.volume - inter
    if union <= 0.0:
        return 0.0
    return min(max(inter / union, 0.0), 1.0)


def labeling_quality(fits, gts):
    """Mean mask IoU and mean 3D box IoU over aligned object lists.

    fits and gts are sequences of (Box3D, MaskImage).
    """
    fits, gts = list(fits), list(gts)
    if len(fits) != len(gts):
        raise LengthMismatch(f"{len(fits)} fits vs {len(gts)} ground truths")
    if not fits:
        raise LengthMismatch("cannot evaluate an empty list")
    mask_scores = []
    box_scores = []
    for (fb, fm), (gb, gm) in zip(fits, gts):
        mask_scores.append(mask_iou(fm, gm))
        box_scores.append(iou_3d(fb, gb))
    return float(np.mean(mask_scores)), float(np.mean(box_scores))
