"""KITTI-format parsers and writers.

Covers object labels (devkit field order), calibration files, velodyne
binary scans, and binary-PGM instance masks. Parsers are pure per file;
writers are exact inverses of the parsers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .box_metrics import Box3D
from .errors import MalformedLine, MissingKey, TruncatedFile
from .geometry import CameraIntrinsics
from .pose_solver import read_keypoint_file, write_keypoint_file  # noqa: F401
from .silhouette import MaskImage, read_pgm, write_pgm


@dataclass(frozen=True)
class KittiLabel:
    """One object row of a KITTI label file.

    dims_hwl keeps the file's (h, w, l) order; location is the
    bottom-face center in camera coordinates.
    """

    name: str
    truncation: float
    occlusion: int
    alpha: float
    bbox: tuple  # (left, top, right, bottom) pixels
    dims_hwl: tuple  # (h, w, l) metres
    location: tuple  # (x, y, z) metres
    yaw: float
    score: float | None = None

    def to_box3d(self) -> Box3D:
        """Geometric-center box; KITTI locations sit on the bottom face."""
        h, w, l = self.dims_hwl
        x, y, z = self.location
        return Box3D(center=(x, y - h / 2.0, z), dims=(l, w, h), yaw=self.yaw)


def parse_label_line(line: str) -> KittiLabel:
    """Parse one label row; raises MalformedLine on bad field counts."""
    parts = line.split()
    if len(parts) not in (15, 16):
        raise MalformedLine(f"expected 15 or 16 fields, got {len(parts)}")
    try:
        vals = [float(p) for p in parts[1:]]
    except ValueError as exc:
        raise MalformedLine(f"non-numeric field in label line: {line!r}") from exc
    return KittiLabel(
        name=parts[0],
        truncation=vals[0],
        occlusion=int(vals[1]),
        alpha=vals[2],
        bbox=tuple(vals[3:7]),
        dims_hwl=tuple(vals[7:10]),
        location=tuple(vals[10:13]),
        yaw=vals[13],
        score=vals[14] if len(parts) == 16 else None,
    )


def _r(x) -> str:
    """Shortest round-trip decimal of a float."""
    return repr(float(x))


def format_label_line(label: KittiLabel) -> str:
    fields = [
        label.name,
        _r(label.truncation),
        str(int(label.occlusion)),
        _r(label.alpha),
        *(_r(v) for v in label.bbox),
        *(_r(v) for v in label.dims_hwl),
        *(_r(v) for v in label.location),
        _r(label.yaw),
    ]
    if label.score is not None:
        fields.append(_r(label.score))
    return " ".join(fields)


def read_label_file(path) -> list[KittiLabel]:
    labels = []
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if line:
                labels.append(parse_label_line(line))
    return labels


def write_label_file(path, labels) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for label in labels:
            fh.write(format_label_line(label) + "\n")


@dataclass(frozen=True)
class CalibSet:
    """Projection and rectification matrices from a KITTI calib file."""

    p2: np.ndarray  # 3x4
    r0_rect: np.ndarray  # 3x3
    tr_velo_to_cam: np.ndarray  # 3x4

    def __post_init__(self):
        object.__setattr__(self, "p2", np.asarray(self.p2, dtype=float).reshape(3, 4))
        object.__setattr__(
            self, "r0_rect", np.asarray(self.r0_rect, dtype=float).reshape(3, 3)
        )
        object.__setattr__(
            self,
            "tr_velo_to_cam",
            np.asarray(self.tr_velo_to_cam, dtype=float).reshape(3, 4),
        )
        if self.p2[0, 0] <= 0:
            raise ValueError("P2 focal length must be positive")
        err = np.abs(self.r0_rect @ self.r0_rect.T - np.eye(3)).max()
        if err > 1e-3:
            raise ValueError(f"R0_rect not orthonormal (deviation {err:.2e})")


def parse_calib(text: str) -> CalibSet:
    """Parse 'KEY: values...' lines; requires P2, R0_rect, Tr_velo_to_cam."""
    entries = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line or ":" not in line:
            continue
        key, _, rest = line.partition(":")
        try:
            entries[key.strip()] = np.array([float(t) for t in rest.split()])
        except ValueError as exc:
            raise MalformedLine(f"non-numeric calib entry for {key!r}") from exc
    for key, n in (("P2", 12), ("R0_rect", 9), ("Tr_velo_to_cam", 12)):
        if key not in entries:
            raise MissingKey(f"calib file lacks {key}")
        if entries[key].size != n:
            raise MalformedLine(f"{key} must have {n} values")
    return CalibSet(
        p2=entries["P2"].reshape(3, 4),
        r0_rect=entries["R0_rect"].reshape(3, 3),
        tr_velo_to_cam=entries["Tr_velo_to_cam"].reshape(3, 4),
    )


def format_calib(calib: CalibSet) -> str:
    def row(name, arr):
        return name + ": " + " ".join(_r(v) for v in np.asarray(arr).ravel())

    return "\n".join(
        [
            row("P2", calib.p2),
            row("R0_rect", calib.r0_rect),
            row("Tr_velo_to_cam", calib.tr_velo_to_cam),
        ]
    ) + "\n"


def read_calib_file(path) -> CalibSet:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_calib(fh.read())


def write_calib_file(path, calib: CalibSet) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_calib(calib))


def intrinsics_from_p2(calib: CalibSet) -> CameraIntrinsics:
    """Mono intrinsics from P2. The fourth column (stereo baseline term)
    is ignored, the standard approximation for cam-2 monocular work."""
    p = calib.p2
    return CameraIntrinsics(fx=p[0, 0], fy=p[1, 1], cx=p[0, 2], cy=p[1, 2])


@dataclass(frozen=True)
class PointCloud:
    """(n, 4) float32 rows of x, y, z, reflectance in the sensor frame."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float32).reshape(-1, 4)
        object.__setattr__(self, "points", pts)

    @property
    def xyz(self) -> np.ndarray:
        return self.points[:, :3].astype(float)

    def __len__(self):
        return self.points.shape[0]


def read_velodyne(path) -> PointCloud:
    """Little-endian float32 quadruples."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) % 16 != 0:
        raise TruncatedFile(f"{len(data)} bytes is not a multiple of 16")
    pts = np.frombuffer(data, dtype="<f4").reshape(-1, 4)
    return PointCloud(pts.copy())


def write_velodyne(path, cloud: PointCloud) -> None:
    with open(path, "wb") as fh:
        fh.write(cloud.points.astype("<f4").tobytes())


def velo_to_camera(cloud: PointCloud, calib: CalibSet) -> np.ndarray:
    """Rectified-camera coordinates: R0_rect @ (Tr_velo_to_cam @ [p; 1])."""
    xyz = cloud.xyz
    cam = xyz @ calib.tr_velo_to_cam[:, :3].T + calib.tr_velo_to_cam[:, 3]
    return cam @ calib.r0_rect.T


def read_mask(path) -> MaskImage:
    return read_pgm(path)


def write_mask(path, mask: MaskImage) -> None:
    write_pgm(path, mask)
