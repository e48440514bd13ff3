"""Confidence-weighted linear solve for object translation.

Each 2D/3D keypoint correspondence yields two linear constraints on the
translation T once the yaw r_y is known:

    [-1  0  u~] T = x_o cos(r_y) + z_o sin(r_y) + u~ (x_o sin(r_y) - z_o cos(r_y))
    [ 0 -1  v~] T = y_o           +              v~ (x_o sin(r_y) - z_o cos(r_y))

with (u~, v~) the normalized pixel coordinates. Stacking n keypoints gives
a 2n x 3 system A T = B; per-constraint confidences c enter as diagonal
weights and the solve minimizes sum_i c_i (A_i T - B_i)^2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    AllWeightsZero,
    MalformedLine,
    NonFiniteInput,
    NonPositiveDimension,
    RankDeficient,
    SingularNormalMatrix,
    TooFewKeypoints,
)
from .geometry import CameraIntrinsics

EPS_WEIGHT = 1e-6
RANK_TOL = 1e-9  # singular values below sigma_max * RANK_TOL count as zero


def dims_scale(dims) -> np.ndarray:
    """Per-axis scale (l, h, w) for object dims (l, w, h).

    Object frame: x spans the length, y the height, z the width.
    """
    l, w, h = (float(d) for d in dims)
    if l <= 0 or w <= 0 or h <= 0:
        raise NonPositiveDimension(f"dims must be positive, got {(l, w, h)}")
    return np.array([l, h, w])


@dataclass(frozen=True)
class KeypointPair:
    """One 2D pixel / 3D object-local correspondence with two confidences.

    conf_u weights the u (horizontal) constraint row, conf_v the v row.
    """

    p2d: tuple[float, float]
    p3d: tuple[float, float, float]
    conf_u: float = 1.0
    conf_v: float = 1.0

    def __post_init__(self):
        if not (0.0 <= self.conf_u <= 1.0 and 0.0 <= self.conf_v <= 1.0):
            raise ValueError("confidences must lie in [0, 1]")


class KeypointSet:
    """Ordered 2D/3D keypoint correspondences for one object.

    The ordering is meaningful (keypoint k always names the same semantic
    point) and preserved end to end. Internally stored as arrays:
    p2d (n, 2), p3d (n, 3), conf (n, 2).
    """

    def __init__(self, pairs):
        pairs = list(pairs)
        if len(pairs) < 2:
            raise TooFewKeypoints(f"need at least 2 keypoints, got {len(pairs)}")
        self.p2d = np.array([p.p2d for p in pairs], dtype=float)
        self.p3d = np.array([p.p3d for p in pairs], dtype=float)
        self.conf = np.array([(p.conf_u, p.conf_v) for p in pairs], dtype=float)

    @classmethod
    def from_arrays(cls, p2d, p3d, conf=None) -> "KeypointSet":
        p2d = np.asarray(p2d, dtype=float)
        p3d = np.asarray(p3d, dtype=float)
        if conf is None:
            conf = np.ones((p2d.shape[0], 2))
        conf = np.asarray(conf, dtype=float)
        pairs = [
            KeypointPair(tuple(p2d[i]), tuple(p3d[i]), conf[i, 0], conf[i, 1])
            for i in range(p2d.shape[0])
        ]
        return cls(pairs)

    def __len__(self):
        return self.p2d.shape[0]

    def __iter__(self):
        for i in range(len(self)):
            yield KeypointPair(
                tuple(self.p2d[i]), tuple(self.p3d[i]),
                self.conf[i, 0], self.conf[i, 1],
            )


@dataclass(frozen=True)
class ConstraintSystem:
    """Stacked 2n x 3 linear system with per-row weights.

    Row 2i is the u-constraint of keypoint i, row 2i+1 its v-constraint.
    """

    A: np.ndarray
    B: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "A", np.asarray(self.A, dtype=float))
        object.__setattr__(self, "B", np.asarray(self.B, dtype=float).reshape(-1))
        object.__setattr__(self, "w", np.asarray(self.w, dtype=float).reshape(-1))
        if self.A.shape != (self.B.shape[0], 3) or self.w.shape != self.B.shape:
            raise ValueError("inconsistent system shapes")


@dataclass(frozen=True)
class PoseSolution:
    t: np.ndarray
    weighted_rms_residual: float
    effective_rank: int


def assemble_system(kps: KeypointSet, r_y: float, k: CameraIntrinsics) -> ConstraintSystem:
    """Build the 2n x 3 constraint system for a keypoint set at yaw r_y."""
    n = len(kps)
    if n < 2:
        raise TooFewKeypoints(f"need at least 2 keypoints, got {n}")
    if not (
        np.all(np.isfinite(kps.p2d))
        and np.all(np.isfinite(kps.p3d))
        and math.isfinite(r_y)
    ):
        raise NonFiniteInput("keypoints and yaw must be finite")

    un = (kps.p2d[:, 0] - k.cx) / k.fx
    vn = (kps.p2d[:, 1] - k.cy) / k.fy
    x, y, z = kps.p3d[:, 0], kps.p3d[:, 1], kps.p3d[:, 2]
    c, s = math.cos(r_y), math.sin(r_y)
    cross = x * s - z * c  # shared term of both rows

    a = np.zeros((2 * n, 3))
    a[0::2, 0] = -1.0
    a[0::2, 2] = un
    a[1::2, 1] = -1.0
    a[1::2, 2] = vn

    b = np.empty(2 * n)
    b[0::2] = x * c + z * s + un * cross
    b[1::2] = y + vn * cross

    w = kps.conf.reshape(-1)  # interleaved (conf_u, conf_v) per keypoint
    return ConstraintSystem(a, b, w)


def solve_translation(sys: ConstraintSystem, eps_w: float = EPS_WEIGHT) -> PoseSolution:
    """Weighted least-squares translation via SVD.

    Minimizes || diag(sqrt(w)) (A t - B) ||_2, i.e. the sum of weighted
    squared constraint residuals. Singular values below sigma_max * 1e-9
    are treated as zero; rank below 3 raises RankDeficient with the
    unobservable directions.
    """
    w = sys.w
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise NonFiniteInput("weights must be finite and nonnegative")
    if not np.any(w > eps_w):
        raise AllWeightsZero("every constraint weight is zero")

    sw = np.sqrt(w)
    aw = sys.A * sw[:, None]
    bw = sys.B * sw

    u, sig, vt = np.linalg.svd(aw, full_matrices=False)
    tol = sig[0] * RANK_TOL if sig.size else 0.0
    rank = int(np.sum(sig > tol))
    if rank < 3:
        null_dirs = [vt[i] for i in range(rank, 3)]
        raise RankDeficient(
            f"weighted system has rank {rank}; translation not fully observable "
            f"along {['[' + ', '.join(f'{c:+.3f}' for c in d) + ']' for d in null_dirs]}",
            unobservable=null_dirs,
        )
    t = vt.T @ ((u.T @ bw) / sig)

    res = aw @ t - bw
    rms = math.sqrt(float(res @ res) / float(np.sum(w)))
    return PoseSolution(t=t, weighted_rms_residual=rms, effective_rank=rank)


def solve_translation_normal_equations(
    sys: ConstraintSystem, eps_w: float = EPS_WEIGHT
) -> PoseSolution:
    """Solve (A^T W A) t = A^T W B by direct 3x3 inversion.

    Exists as an independent cross-check of the SVD path; prefer
    solve_translation in production code.
    """
    w = sys.w
    if not np.any(w > eps_w):
        raise AllWeightsZero("every constraint weight is zero")
    m = sys.A.T @ (sys.A * w[:, None])
    rhs = sys.A.T @ (w * sys.B)
    if np.linalg.cond(m) > 1e12:
        raise SingularNormalMatrix("normal matrix is singular or near-singular")
    t = np.linalg.inv(m) @ rhs
    res = (sys.A @ t - sys.B) * np.sqrt(w)
    rms = math.sqrt(float(res @ res) / float(np.sum(w)))
    return PoseSolution(t=t, weighted_rms_residual=rms, effective_rank=3)


def denormalize_keypoints3d(kps: KeypointSet, dims) -> KeypointSet:
    """Scale dimension-normalized 3D keypoints back to metres.

    dims is (l, w, h); x scales by l, y by h, z by w.
    """
    scale = dims_scale(dims)
    out = KeypointSet.__new__(KeypointSet)
    out.p2d = kps.p2d.copy()
    out.p3d = kps.p3d * scale
    out.conf = kps.conf.copy()
    return out


# ---------------------------------------------------------------------------
# keypoint-set record files
#
# Plain text, whitespace-delimited, '#' starts a comment. One record per
# object:
#
#     yaw <r_y>
#     intrinsics <fx> <fy> <cx> <cy>
#     dims <l> <w> <h>                          (optional)
#     n <count>
#     <u> <v> <x> <y> <z> <conf_u> <conf_v>     (count lines)
#
# When the dims header is present the record's 3D keypoints are
# dimension-normalized and must be de-normalized before solving;
# solve_record handles that.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KeypointRecord:
    yaw: float
    intrinsics: CameraIntrinsics
    keypoints: KeypointSet
    dims: tuple | None = None


def _clean_lines(text: str):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line


def parse_keypoint_records(text: str) -> list[KeypointRecord]:
    """Parse keypoint-set records from file contents."""
    records = []
    lines = list(_clean_lines(text))
    i = 0

    def expect(tag, lineno, parts, count):
        if parts[0] != tag or len(parts) != count + 1:
            raise MalformedLine(f"line {lineno}: expected '{tag}' with {count} values")
        try:
            return [float(p) for p in parts[1:]]
        except ValueError as exc:
            raise MalformedLine(f"line {lineno}: non-numeric field") from exc

    while i < len(lines):
        lineno, line = lines[i]
        (yaw,) = expect("yaw", lineno, line.split(), 1)
        i += 1
        if i >= len(lines):
            raise MalformedLine(f"line {lineno}: record truncated after yaw")
        lineno, line = lines[i]
        fx, fy, cx, cy = expect("intrinsics", lineno, line.split(), 4)
        i += 1
        if i >= len(lines):
            raise MalformedLine(f"line {lineno}: record truncated before n")
        dims = None
        lineno, line = lines[i]
        if line.split()[0] == "dims":
            dims = tuple(expect("dims", lineno, line.split(), 3))
            i += 1
            if i >= len(lines):
                raise MalformedLine(f"line {lineno}: record truncated before n")
            lineno, line = lines[i]
        (nf,) = expect("n", lineno, line.split(), 1)
        n = int(nf)
        i += 1
        pairs = []
        for j in range(n):
            if i >= len(lines):
                raise MalformedLine(f"record ends after {j} of {n} keypoint lines")
            lineno, line = lines[i]
            parts = line.split()
            if len(parts) != 7:
                raise MalformedLine(f"line {lineno}: expected 7 fields, got {len(parts)}")
            try:
                u, v, x, y, z, cu, cv = (float(p) for p in parts)
            except ValueError as exc:
                raise MalformedLine(f"line {lineno}: non-numeric field") from exc
            pairs.append(KeypointPair((u, v), (x, y, z), cu, cv))
            i += 1
        records.append(
            KeypointRecord(
                yaw, CameraIntrinsics(fx, fy, cx, cy), KeypointSet(pairs), dims
            )
        )
    return records


def _r(x) -> str:
    """Shortest round-trip decimal of a float."""
    return repr(float(x))


def format_keypoint_records(records) -> str:
    """Serialize records; parse_keypoint_records inverts this exactly."""
    out = []
    for rec in records:
        k = rec.intrinsics
        out.append(f"yaw {_r(rec.yaw)}")
        out.append(f"intrinsics {_r(k.fx)} {_r(k.fy)} {_r(k.cx)} {_r(k.cy)}")
        if rec.dims is not None:
            out.append(f"dims {_r(rec.dims[0])} {_r(rec.dims[1])} {_r(rec.dims[2])}")
        out.append(f"n {len(rec.keypoints)}")
        for p in rec.keypoints:
            out.append(
                f"{_r(p.p2d[0])} {_r(p.p2d[1])} "
                f"{_r(p.p3d[0])} {_r(p.p3d[1])} {_r(p.p3d[2])} "
                f"{_r(p.conf_u)} {_r(p.conf_v)}"
            )
    return "\n".join(out) + "\n"


def solve_record(record: KeypointRecord) -> PoseSolution:
    """Assemble and solve one record; de-normalizes 3D keypoints first
    when the record carries object dims."""
    kps = record.keypoints
    if record.dims is not None:
        kps = denormalize_keypoints3d(kps, record.dims)
    return solve_translation(assemble_system(kps, record.yaw, record.intrinsics))


def read_keypoint_file(path) -> list[KeypointRecord]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_keypoint_records(fh.read())


def write_keypoint_file(path, records) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_keypoint_records(records))
