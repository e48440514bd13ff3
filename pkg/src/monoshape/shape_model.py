"""PCA-deformable vehicle template and keypoint sampling.

A shape basis is a mean triangle mesh plus r per-vertex displacement
components with standard deviations; a coefficient vector s picks a
vehicle shape:

    vertices(s) = mean + sum_k s_k * sigma_k * component_k

Object frame: x along length, y down (ground at +h/2), z along width.

Basis file format ("PCA-SHAPE v1", plain text, '#' comments allowed):

    PCA-SHAPE v1
    <V> <F> <r>
    V lines:  x y z            mean vertices (metres)
    F lines:  i j k            triangle vertex indices
    r blocks:
        sigma <sigma_k>
        V lines:  dx dy dz     unit-scale displacement field
    keypoints <m>
    <m vertex indices, whitespace separated, any line breaks>
"""

from __future__ import annotations

import functools
import importlib.resources
from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyMesh,
    IndexOutOfRange,
    MalformedLine,
    NonPositiveDimension,
    UnsupportedFormat,
)
from .pose_solver import dims_scale


@dataclass(frozen=True)
class TriangleMesh:
    """Vertices (V, 3) in metres, faces (F, 3) vertex indices."""

    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "vertices", np.asarray(self.vertices, dtype=float))
        object.__setattr__(self, "faces", np.asarray(self.faces, dtype=np.int64))
        if self.faces.size and self.faces.max() >= len(self.vertices):
            raise IndexOutOfRange("face index exceeds vertex count")


@dataclass(frozen=True)
class ShapeBasis:
    """Mean mesh, r displacement components, and their deviations."""

    mean: TriangleMesh
    components: np.ndarray  # (r, V, 3)
    sigmas: np.ndarray  # (r,)
    keypoint_spec: "KeypointSpec"

    def __post_init__(self):
        object.__setattr__(self, "components", np.asarray(self.components, dtype=float))
        object.__setattr__(self, "sigmas", np.asarray(self.sigmas, dtype=float))
        v = len(self.mean.vertices)
        if self.components.shape[1:] != (v, 3):
            raise DimensionMismatch("component vertex count differs from mean")
        if np.any(self.sigmas <= 0):
            raise NonPositiveDimension("component deviations must be positive")

    @property
    def rank(self) -> int:
        return self.components.shape[0]


@dataclass(frozen=True)
class ShapeCoeff:
    """Unitless PCA coefficients."""

    s: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "s", np.asarray(self.s, dtype=float).reshape(-1))

    @classmethod
    def zeros(cls, rank: int) -> "ShapeCoeff":
        return cls(np.zeros(rank))


@dataclass(frozen=True)
class KeypointSpec:
    """Ordered semantic vertex indices; corners and center are appended
    synthetically by sample_keypoints."""

    vertex_indices: tuple

    def __len__(self):
        return len(self.vertex_indices)


def deform(basis: ShapeBasis, s: ShapeCoeff) -> TriangleMesh:
    """Mean mesh plus the coefficient-weighted displacement components."""
    coeff = s.s if isinstance(s, ShapeCoeff) else np.asarray(s, dtype=float).reshape(-1)
    if coeff.shape[0] != basis.rank:
        raise DimensionMismatch(
            f"coefficient length {coeff.shape[0]} != basis rank {basis.rank}"
        )
    scaled = coeff * basis.sigmas
    verts = basis.mean.vertices + np.tensordot(scaled, basis.components, axes=1)
    return TriangleMesh(verts, basis.mean.faces)


def mesh_dimensions(mesh: TriangleMesh):
    """Axis-aligned extents (l, w, h) and the AABB center offset.

    l spans x, h spans y, w spans z.
    """
    if len(mesh.vertices) == 0:
        raise EmptyMesh("mesh has no vertices")
    lo = mesh.vertices.min(axis=0)
    hi = mesh.vertices.max(axis=0)
    l, h, w = (hi - lo)
    center = (hi + lo) / 2.0
    return (float(l), float(w), float(h)), center


def aabb_corners(lo, hi) -> np.ndarray:
    """8 box corners: bottom face (max y) counterclockwise seen from
    above (-y side), then the top face in the same x/z order."""
    x0, y0, z0 = lo
    x1, y1, z1 = hi
    xz = [(x1, z1), (x0, z1), (x0, z0), (x1, z0)]
    bottom = [(x, y1, z) for x, z in xz]
    top = [(x, y0, z) for x, z in xz]
    return np.array(bottom + top, dtype=float)


def sample_keypoints(mesh: TriangleMesh, spec: KeypointSpec) -> np.ndarray:
    """Semantic vertices in spec order, then 8 AABB corners, then the
    AABB center: (len(spec) + 9, 3)."""
    if len(mesh.vertices) == 0:
        raise EmptyMesh("mesh has no vertices")
    idx = np.asarray(spec.vertex_indices, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= len(mesh.vertices)):
        raise IndexOutOfRange("keypoint index outside mesh")
    semantic = mesh.vertices[idx]
    lo = mesh.vertices.min(axis=0)
    hi = mesh.vertices.max(axis=0)
    corners = aabb_corners(lo, hi)
    center = ((hi + lo) / 2.0)[None, :]
    return np.concatenate([semantic, corners, center], axis=0)


def normalize_keypoints(kps, dims) -> np.ndarray:
    """Divide object-local keypoints by (l, h, w) per axis."""
    return np.asarray(kps, dtype=float) / dims_scale(dims)


def denormalize_keypoints(kps, dims) -> np.ndarray:
    """Inverse of normalize_keypoints."""
    return np.asarray(kps, dtype=float) * dims_scale(dims)


def transfer_keypoints(kps, src_dims, dst_dims) -> np.ndarray:
    """Re-scale keypoints from one object size to another by normalizing
    with the source dims and de-normalizing with the destination dims."""
    return denormalize_keypoints(normalize_keypoints(kps, src_dims), dst_dims)


def decode_dimension_residual(residual, class_mean):
    """dims = class_mean * exp(residual); keeps dimensions positive."""
    mean = np.asarray(class_mean, dtype=float)
    if np.any(mean <= 0):
        raise NonPositiveDimension("class mean dims must be positive")
    return tuple(mean * np.exp(np.asarray(residual, dtype=float)))


def encode_dimension_residual(dims, class_mean):
    """Inverse of decode_dimension_residual."""
    mean = np.asarray(class_mean, dtype=float)
    d = np.asarray(dims, dtype=float)
    if np.any(mean <= 0) or np.any(d <= 0):
        raise NonPositiveDimension("dims and class mean must be positive")
    return tuple(np.log(d / mean))


# ---------------------------------------------------------------------------
# basis file I/O
# ---------------------------------------------------------------------------

_HEADER = "PCA-SHAPE v1"


def parse_basis(text: str) -> ShapeBasis:
    lines = [ln.split("#", 1)[0] for ln in text.splitlines()]
    first = next((ln.strip() for ln in lines if ln.strip()), "")
    if first != _HEADER:
        raise UnsupportedFormat(f"expected '{_HEADER}' header, got {first!r}")
    tokens = " ".join(lines).split()
    tokens = tokens[2:]  # consume the two header words

    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(tokens):
            raise MalformedLine("basis file truncated")
        chunk = tokens[pos : pos + n]
        pos += n
        return chunk

    def take_floats(n):
        try:
            return np.array([float(t) for t in take(n)])
        except ValueError as exc:
            raise MalformedLine("non-numeric value in basis file") from exc

    try:
        nv, nf, rank = (int(t) for t in take(3))
    except ValueError as exc:
        raise MalformedLine("bad count line in basis file") from exc

    verts = take_floats(3 * nv).reshape(nv, 3)
    try:
        faces = np.array([int(t) for t in take(3 * nf)]).reshape(nf, 3)
    except ValueError as exc:
        raise MalformedLine("non-integer face index") from exc

    sigmas = np.empty(rank)
    comps = np.empty((rank, nv, 3))
    for k in range(rank):
        tag = take(1)[0]
        if tag != "sigma":
            raise MalformedLine(f"expected 'sigma' for component {k}, got {tag!r}")
        sigmas[k] = take_floats(1)[0]
        comps[k] = take_floats(3 * nv).reshape(nv, 3)

    tag = take(1)[0]
    if tag != "keypoints":
        raise MalformedLine(f"expected 'keypoints', got {tag!r}")
    m = int(take(1)[0])
    idx = tuple(int(t) for t in take(m))
    if pos != len(tokens):
        raise MalformedLine("trailing data in basis file")

    return ShapeBasis(TriangleMesh(verts, faces), comps, sigmas, KeypointSpec(idx))


def _r(x) -> str:
    """Shortest round-trip decimal of a float."""
    return repr(float(x))


def format_basis(basis: ShapeBasis) -> str:
    mesh = basis.mean
    out = [_HEADER, f"{len(mesh.vertices)} {len(mesh.faces)} {basis.rank}"]
    out += [f"{_r(v[0])} {_r(v[1])} {_r(v[2])}" for v in mesh.vertices]
    out += [f"{f[0]} {f[1]} {f[2]}" for f in mesh.faces]
    for k in range(basis.rank):
        out.append(f"sigma {_r(basis.sigmas[k])}")
        out += [f"{_r(d[0])} {_r(d[1])} {_r(d[2])}" for d in basis.components[k]]
    out.append(f"keypoints {len(basis.keypoint_spec)}")
    out.append(" ".join(str(i) for i in basis.keypoint_spec.vertex_indices))
    return "\n".join(out) + "\n"


def load_basis(path) -> ShapeBasis:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_basis(fh.read())


def save_basis(path, basis: ShapeBasis) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_basis(basis))


@functools.lru_cache(maxsize=1)
def default_basis() -> ShapeBasis:
    """The bundled synthetic car basis."""
    ref = importlib.resources.files("monoshape").joinpath("data/car_basis.txt")
    return parse_basis(ref.read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# synthetic car-like basis
#
# A lofted sedan profile: rectangular cross-sections swept along x, closed
# by end caps. Stands in for a real PCA template, which is not
# redistributable; any basis in the file format above can replace it.
# ---------------------------------------------------------------------------

# (x fraction rear->front, roof height fraction of h)
_PROFILE = [
    (0.00, 0.42),
    (0.10, 0.52),
    (0.22, 0.58),
    (0.36, 0.97),
    (0.58, 1.00),
    (0.72, 0.55),
    (0.92, 0.47),
    (1.00, 0.38),
]

# (x fraction, width fraction of w)
_WIDTH = [(0.00, 0.84), (0.15, 1.00), (0.85, 1.00), (1.00, 0.84)]


def _interp(table, x):
    xs = [p[0] for p in table]
    ys = [p[1] for p in table]
    return float(np.interp(x, xs, ys))


def synthetic_car_basis(
    length: float = 4.2,
    width: float = 1.76,
    height: float = 1.48,
    sections: int = 20,
    bottom_points: int = 4,
    side_points: int = 2,
) -> ShapeBasis:
    """Procedural box-and-cabin car mesh with 4 deformation components.

    Components: overall length, roof height, width, and a cabin
    fore/aft shift. Deterministic; used for the bundled basis file and
    test fixtures.
    """
    h2 = height / 2.0
    ring_xs = np.linspace(0.0, 1.0, sections)

    def ring(xf):
        x = (xf - 0.5) * length
        hw = _interp(_WIDTH, xf) * width / 2.0
        y_top = h2 - _interp(_PROFILE, xf) * height
        y_bot = h2
        pts = []
        # bottom edge, z -hw -> +hw
        for t in np.linspace(0.0, 1.0, bottom_points, endpoint=False):
            pts.append((x, y_bot, -hw + 2 * hw * t))
        # right side, y bottom -> top
        for t in np.linspace(0.0, 1.0, side_points, endpoint=False):
            pts.append((x, y_bot + (y_top - y_bot) * t, hw))
        # top edge, z +hw -> -hw
        for t in np.linspace(0.0, 1.0, bottom_points, endpoint=False):
            pts.append((x, y_top, hw - 2 * hw * t))
        # left side, y top -> bottom
        for t in np.linspace(0.0, 1.0, side_points, endpoint=False):
            pts.append((x, y_top + (y_bot - y_top) * t, -hw))
        return pts

    ring_size = 2 * (bottom_points + side_points)
    verts = []
    for xf in ring_xs:
        verts.extend(ring(xf))

    faces = []
    for i in range(sections - 1):
        base0 = i * ring_size
        base1 = (i + 1) * ring_size
        for j in range(ring_size):
            j1 = (j + 1) % ring_size
            a, b = base0 + j, base0 + j1
            c, d = base1 + j1, base1 + j
            faces.append((a, b, c))
            faces.append((a, c, d))

    # end caps fan around a centroid vertex each
    rear_center = len(verts)
    verts.append(tuple(np.mean(verts[:ring_size], axis=0)))
    front_center = len(verts)
    first_front = (sections - 1) * ring_size
    verts.append(tuple(np.mean(verts[first_front : first_front + ring_size], axis=0)))
    for j in range(ring_size):
        j1 = (j + 1) % ring_size
        faces.append((rear_center, j1, j))
        faces.append((front_center, first_front + j, first_front + j1))

    v = np.array(verts, dtype=float)
    mean_mesh = TriangleMesh(v, np.array(faces, dtype=np.int64))

    # deformation fields, unit scale per vertex
    upness = (h2 - v[:, 1]) / height  # 0 at ground, ~1 at max roof
    comp_length = np.zeros_like(v)
    comp_length[:, 0] = v[:, 0] / (length / 2.0)
    comp_roof = np.zeros_like(v)
    comp_roof[:, 1] = -(upness)  # positive coeff raises the top
    comp_width = np.zeros_like(v)
    comp_width[:, 2] = v[:, 2] / (width / 2.0)
    comp_cabin = np.zeros_like(v)
    comp_cabin[:, 0] = np.clip(2.0 * (upness - 0.5), 0.0, 1.0)

    comps = np.stack([comp_length, comp_roof, comp_width, comp_cabin])
    sigmas = np.array([0.45, 0.22, 0.22, 0.25])

    # 16 semantic keypoints: nearest mesh vertices to characteristic spots
    l2, w2 = length / 2.0, width / 2.0
    targets = [
        (-l2, h2, -w2 * 0.84), (-l2, h2, w2 * 0.84),        # rear bumper corners
        (l2, h2, -w2 * 0.84), (l2, h2, w2 * 0.84),          # front bumper corners
        (-0.14 * length, -h2, -w2), (-0.14 * length, -h2, w2),  # roof rear corners
        (0.08 * length, -h2, -w2), (0.08 * length, -h2, w2),    # roof front corners
        (0.22 * length, h2 - 0.55 * height, -w2),           # windshield base L
        (0.22 * length, h2 - 0.55 * height, w2),            # windshield base R
        (-0.28 * length, h2 - 0.58 * height, -w2),          # rear window base L
        (-0.28 * length, h2 - 0.58 * height, w2),           # rear window base R
        (0.42 * length, h2 - 0.47 * height, 0.0),           # hood front center
        (-0.40 * length, h2 - 0.52 * height, 0.0),          # trunk center
        (l2, h2 - 0.19 * height, 0.0),                      # front bumper center
        (-l2, h2 - 0.21 * height, 0.0),                     # rear bumper center
    ]
    chosen = []
    for t in targets:
        d = np.linalg.norm(v - np.asarray(t), axis=1)
        for idx in np.argsort(d):
            if int(idx) not in chosen:
                chosen.append(int(idx))
                break

    return ShapeBasis(mean_mesh, comps, sigmas, KeypointSpec(tuple(chosen)))
