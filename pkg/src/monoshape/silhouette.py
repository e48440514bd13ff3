"""Silhouette rasterization of a posed mesh and 2D mask losses.

Hard masks use the pixel-center rule: pixel (i, j) samples the continuous
image point (j + 0.5, i + 0.5) and is set when that point lies inside (or
on the edge of) any projected triangle.

Soft masks map the signed pixel distance d to the projected silhouette
outline through a clamped cubic smoothstep of d / (3 * softness), so the
occupancy equals the hard value beyond +-3*softness and crosses 0.5 at the
outline. Distances are measured against the mesh's candidate contour
edges (open edges plus projected-orientation folds); they are exact
outside the silhouette and near the outer contour, and may be
underestimated deep inside next to self-occlusion folds, where the
occupancy is saturated anyway for meshes without large interior folds.
The soft value varies continuously with vertex positions, which is what
the auto-labeler's finite-difference loss probes rely on.

Meshes are expected to be consistently wound (outward normals) when
closed; triangle soups work because unshared edges always count as
contour candidates. No z-buffer: silhouettes need coverage only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import AllVerticesClipped, EmptyMesh, SizeMismatch, UnsupportedFormat
from .geometry import EPS_DEPTH, CameraIntrinsics, Pose
from .shape_model import TriangleMesh


@dataclass(frozen=True)
class MaskImage:
    """Per-pixel occupancy in [0, 1]; values array is (height, width)."""

    width: int
    height: int
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", vals)
        if self.width <= 0 or self.height <= 0:
            raise ValueError("mask dimensions must be positive")
        if vals.shape != (self.height, self.width):
            raise ValueError("values shape does not match width/height")
        if vals.size and (vals.min() < 0.0 or vals.max() > 1.0):
            raise ValueError("mask values must lie in [0, 1]")

    @classmethod
    def from_values(cls, values) -> "MaskImage":
        values = np.asarray(values, dtype=float)
        return cls(values.shape[1], values.shape[0], values)


@njit(cache=True)
def _raster_kernel(tri, h, w, out):
    """Set pixels whose centers fall inside any triangle (inclusive)."""
    for f in range(tri.shape[0]):
        x0, y0 = tri[f, 0, 0], tri[f, 0, 1]
        x1, y1 = tri[f, 1, 0], tri[f, 1, 1]
        x2, y2 = tri[f, 2, 0], tri[f, 2, 1]
        area = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
        if area == 0.0:
            continue
        jmin = max(int(math.floor(min(x0, x1, x2) - 0.5)), 0)
        jmax = min(int(math.ceil(max(x0, x1, x2) - 0.5)), w - 1)
        imin = max(int(math.floor(min(y0, y1, y2) - 0.5)), 0)
        imax = min(int(math.ceil(max(y0, y1, y2) - 0.5)), h - 1)
        for i in range(imin, imax + 1):
            py = i + 0.5
            for j in range(jmin, jmax + 1):
                px = j + 0.5
                e0 = (x1 - x0) * (py - y0) - (px - x0) * (y1 - y0)
                e1 = (x2 - x1) * (py - y1) - (px - x1) * (y2 - y1)
                e2 = (x0 - x2) * (py - y2) - (px - x2) * (y0 - y2)
                if area > 0.0:
                    if e0 >= 0.0 and e1 >= 0.0 and e2 >= 0.0:
                        out[i, j] = 1.0
                else:
                    if e0 <= 0.0 and e1 <= 0.0 and e2 <= 0.0:
                        out[i, j] = 1.0


@njit(cache=True)
def _boundary_pixels(hard, out):
    """Mark pixels adjacent to a horizontal or vertical value change."""
    h, w = hard.shape
    for i in range(h):
        for j in range(w - 1):
            if hard[i, j] != hard[i, j + 1]:
                out[i, j] = 1
                out[i, j + 1] = 1
    for i in range(h - 1):
        for j in range(w):
            if hard[i, j] != hard[i + 1, j]:
                out[i, j] = 1
                out[i + 1, j] = 1


@njit(cache=True)
def _dilate_chebyshev(mask, rad, out):
    """Separable max filter: out = mask dilated by a (2rad+1) square."""
    h, w = mask.shape
    tmp = np.zeros((h, w), dtype=np.uint8)
    for i in range(h):
        for j in range(w):
            lo = max(j - rad, 0)
            hi = min(j + rad, w - 1)
            m = 0
            for jj in range(lo, hi + 1):
                if mask[i, jj]:
                    m = 1
                    break
            tmp[i, j] = m
    for j in range(w):
        for i in range(h):
            lo = max(i - rad, 0)
            hi = min(i + rad, h - 1)
            m = 0
            for ii in range(lo, hi + 1):
                if tmp[ii, j]:
                    m = 1
                    break
            out[i, j] = m


@njit(cache=True)
def _band_distances(seg, ii, jj, out):
    """Exact min distance from pixel centers to contour segments."""
    for k in range(ii.shape[0]):
        px = jj[k] + 0.5
        py = ii[k] + 0.5
        best = 1.0e300
        for m in range(seg.shape[0]):
            ax, ay, bx, by = seg[m, 0], seg[m, 1], seg[m, 2], seg[m, 3]
            dx, dy = bx - ax, by - ay
            l2 = dx * dx + dy * dy
            if l2 == 0.0:
                cx, cy = ax, ay
            else:
                t = ((px - ax) * dx + (py - ay) * dy) / l2
                if t < 0.0:
                    t = 0.0
                elif t > 1.0:
                    t = 1.0
                cx, cy = ax + t * dx, ay + t * dy
            ddx, ddy = px - cx, py - cy
            d2 = ddx * ddx + ddy * ddy
            if d2 < best:
                best = d2
        out[k] = math.sqrt(best)


_ADJACENCY_CACHE: dict = {}


def _edge_adjacency(faces: np.ndarray):
    """Unique undirected edges (E, 2) and their adjacent faces (E, 2),
    -1 where an edge has a single face. Cached per face array content."""
    key = (faces.shape[0], faces.tobytes())
    hit = _ADJACENCY_CACHE.get(key)
    if hit is not None:
        return hit
    edge_map = {}
    for fi, (a, b, c) in enumerate(faces):
        for u, v in ((a, b), (b, c), (c, a)):
            e = (u, v) if u < v else (v, u)
            slot = edge_map.setdefault(e, [-1, -1])
            if slot[0] == -1:
                slot[0] = fi
            else:
                slot[1] = fi
    edges = np.array(list(edge_map.keys()), dtype=np.int64).reshape(-1, 2)
    adj = np.array(list(edge_map.values()), dtype=np.int64).reshape(-1, 2)
    if len(_ADJACENCY_CACHE) > 8:
        _ADJACENCY_CACHE.clear()
    _ADJACENCY_CACHE[key] = (edges, adj)
    return edges, adj


def _smoothstep(x):
    """0 below -1, 1 above +1, cubic in between."""
    t = np.clip((x + 1.0) * 0.5, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def render_silhouette(
    mesh: TriangleMesh,
    pose: Pose,
    k: CameraIntrinsics,
    size,
    softness: float = 0.0,
    eps_depth: float = EPS_DEPTH,
) -> MaskImage:
    """Render the occupancy mask of a posed mesh.

    size is (width, height) pixels. softness = 0 gives the hard mask;
    softness > 0 blends across the outline over +-3*softness pixels.
    Triangles with any vertex at z <= eps_depth are dropped.
    """
    if len(mesh.vertices) == 0 or len(mesh.faces) == 0:
        raise EmptyMesh("cannot render an empty mesh")
    w, h = int(size[0]), int(size[1])

    cam = mesh.vertices @ pose.rotation().T + pose.translation()
    z = cam[:, 2]
    vertex_ok = z > eps_depth
    if not np.any(vertex_ok):
        raise AllVerticesClipped("entire mesh at or behind the camera")

    uv = np.zeros((len(cam), 2))
    np.divide(cam[:, 0], z, out=uv[:, 0], where=vertex_ok)
    np.divide(cam[:, 1], z, out=uv[:, 1], where=vertex_ok)
    uv[:, 0] = uv[:, 0] * k.fx + k.cx
    uv[:, 1] = uv[:, 1] * k.fy + k.cy

    face_ok = vertex_ok[mesh.faces].all(axis=1)
    hard = np.zeros((h, w))
    if np.any(face_ok):
        tri = uv[mesh.faces[face_ok]]
        _raster_kernel(np.ascontiguousarray(tri), h, w, hard)

    if softness <= 0.0 or not np.any(face_ok):
        return MaskImage(w, h, hard)

    # candidate contour edges: open edges, clipped neighbours, and
    # projected-orientation folds
    edges, adj = _edge_adjacency(mesh.faces)
    tri_all = uv[mesh.faces]
    d1 = tri_all[:, 1] - tri_all[:, 0]
    d2 = tri_all[:, 2] - tri_all[:, 0]
    signed2 = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    f0, f1 = adj[:, 0], adj[:, 1]
    ok0 = face_ok[f0]
    ok1 = np.where(f1 >= 0, face_ok[np.maximum(f1, 0)], False)
    s0 = np.where(ok0, signed2[f0], 0.0)
    s1 = np.where(ok1, signed2[np.maximum(f1, 0)], 0.0)
    candidate = (ok0 | ok1) & ((~(ok0 & ok1)) | (s0 * s1 <= 0.0))
    seg_idx = edges[candidate]
    seg = np.concatenate([uv[seg_idx[:, 0]], uv[seg_idx[:, 1]]], axis=1)

    # work on a crop around the projected geometry; everything outside is
    # farther than 3*softness from the contour and keeps its hard value
    rad = int(math.ceil(3.0 * softness)) + 2
    su = seg.reshape(-1, 2, 2)
    jlo = max(int(su[:, :, 0].min() - rad), 0)
    jhi = min(int(su[:, :, 0].max() + rad) + 1, w)
    ilo = max(int(su[:, :, 1].min() - rad), 0)
    ihi = min(int(su[:, :, 1].max() + rad) + 1, h)
    values = hard.copy()
    if jlo >= jhi or ilo >= ihi:
        return MaskImage(w, h, values)

    hard_c = np.ascontiguousarray(hard[ilo:ihi, jlo:jhi])
    boundary = np.zeros_like(hard_c, dtype=np.uint8)
    _boundary_pixels(hard_c, boundary)
    # silhouette may cross the frame edge: image-border pixels near the
    # projected geometry count as boundary too
    if ilo == 0:
        boundary[0, :] = 1
    if ihi == h:
        boundary[-1, :] = 1
    if jlo == 0:
        boundary[:, 0] = 1
    if jhi == w:
        boundary[:, -1] = 1

    band = np.zeros_like(boundary)
    _dilate_chebyshev(boundary, rad, band)
    ii, jj = np.nonzero(band)
    if ii.size:
        ii = ii.astype(np.int64) + ilo
        jj = jj.astype(np.int64) + jlo
        dist = np.empty(ii.size)
        _band_distances(np.ascontiguousarray(seg), ii, jj, dist)
        sign = np.where(hard[ii, jj] > 0.5, 1.0, -1.0)
        values[ii, jj] = _smoothstep(sign * dist / (3.0 * softness))
    return MaskImage(w, h, values)


def mask_l1(rendered: MaskImage, target: MaskImage) -> float:
    """Sum of absolute per-pixel occupancy differences."""
    if (rendered.width, rendered.height) != (target.width, target.height):
        raise SizeMismatch("mask dimensions differ")
    return float(np.abs(rendered.values - target.values).sum())


def mask_iou(a: MaskImage, b: MaskImage) -> float:
    """Intersection over union of masks thresholded at 0.5.

    Defined as 1 when both masks are empty.
    """
    if (a.width, a.height) != (b.width, b.height):
        raise SizeMismatch("mask dimensions differ")
    am = a.values >= 0.5
    bm = b.values >= 0.5
    union = np.logical_or(am, bm).sum()
    if union == 0:
        return 1.0
    inter = np.logical_and(am, bm).sum()
    return float(inter) / float(union)


# ---------------------------------------------------------------------------
# 8-bit binary PGM (P5) serialization
# ---------------------------------------------------------------------------


def _read_pgm_tokens(data: bytes, count: int):
    """First `count` whitespace tokens after the magic, '#' comments
    skipped, plus the offset one byte past the last token."""
    tokens = []
    i = 0
    while len(tokens) < count and i < len(data):
        c = data[i : i + 1]
        if c == b"#":
            while i < len(data) and data[i : i + 1] not in (b"\n", b"\r"):
                i += 1
        elif c.isspace():
            i += 1
        else:
            j = i
            while j < len(data) and not data[j : j + 1].isspace() and data[j : j + 1] != b"#":
                j += 1
            tokens.append(data[i:j])
            i = j
    return tokens, i


def read_pgm(path) -> MaskImage:
    """Read a binary PGM; values are thresholded at 128 to {0, 1}."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:2] != b"P5":
        raise UnsupportedFormat("not a binary PGM (P5) file")
    tokens, offset = _read_pgm_tokens(data[2:], 3)
    if len(tokens) < 3:
        raise UnsupportedFormat("truncated PGM header")
    try:
        w, h, maxval = (int(t) for t in tokens)
    except ValueError as exc:
        raise UnsupportedFormat("bad PGM header") from exc
    if maxval <= 0 or maxval > 255:
        raise UnsupportedFormat(f"unsupported PGM maxval {maxval}")
    start = 2 + offset + 1  # single whitespace byte after maxval
    raw = data[start : start + w * h]
    if len(raw) != w * h:
        raise UnsupportedFormat("PGM pixel data truncated")
    img = np.frombuffer(raw, dtype=np.uint8).reshape(h, w)
    return MaskImage(w, h, (img >= 128).astype(float))


def write_pgm(path, mask: MaskImage) -> None:
    """Write 8-bit binary PGM; occupancy scales to 0..255."""
    img = np.clip(np.rint(mask.values * 255.0), 0, 255).astype(np.uint8)
    header = f"P5\n{mask.width} {mask.height}\n255\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header + img.tobytes())
