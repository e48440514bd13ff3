"""Geometric core for shape-aware monocular 3D vehicle detection.

Two halves:
  - detection-side geometry: confidence-weighted linear solve of object
    translation from ordered 2D/3D keypoint correspondences, multi-bin
    orientation codec, dimension-residual decoding;
  - labeling-side fitting: a PCA-deformable vehicle mesh optimized
    against an instance mask and LiDAR points to produce 2D/3D keypoint
    ground truth.
"""

from .autolabel import (
    AutolabelConfig,
    FitResult,
    Observation,
    chamfer_l3d,
    export_keypoint_labels,
    fit,
    fitted_box,
    remove_ground_ransac,
    segment_points_in_box,
    total_loss,
)
from .box_metrics import Box3D, box_corners, iou_3d, iou_bev, labeling_quality
from .errors import MonoshapeError
from .geometry import (
    CameraIntrinsics,
    Pose,
    normalize_pixel,
    project,
    rotation_matrix_euler,
    rotation_matrix_yaw,
    transform_object_to_camera,
)
from .orientation import (
    MultiBinCode,
    alpha_to_yaw,
    decode_alpha,
    encode_alpha,
    yaw_to_alpha,
)
from .pose_solver import (
    ConstraintSystem,
    KeypointPair,
    KeypointRecord,
    KeypointSet,
    PoseSolution,
    assemble_system,
    denormalize_keypoints3d,
    solve_record,
    solve_translation,
    solve_translation_normal_equations,
)
from .shape_model import (
    KeypointSpec,
    ShapeBasis,
    ShapeCoeff,
    TriangleMesh,
    decode_dimension_residual,
    default_basis,
    deform,
    load_basis,
    mesh_dimensions,
    normalize_keypoints,
    sample_keypoints,
    save_basis,
    synthetic_car_basis,
    transfer_keypoints,
)
from .silhouette import MaskImage, mask_iou, mask_l1, read_pgm, render_silhouette, write_pgm

__version__ = "0.1.0"

__all__ = [
    "AutolabelConfig",
    "Box3D",
    "CameraIntrinsics",
    "ConstraintSystem",
    "FitResult",
    "KeypointPair",
    "KeypointRecord",
    "KeypointSet",
    "KeypointSpec",
    "MaskImage",
    "MonoshapeError",
    "MultiBinCode",
    "Observation",
    "Pose",
    "PoseSolution",
    "ShapeBasis",
    "ShapeCoeff",
    "TriangleMesh",
    "alpha_to_yaw",
    "assemble_system",
    "box_corners",
    "chamfer_l3d",
    "decode_alpha",
    "decode_dimension_residual",
    "default_basis",
    "deform",
    "denormalize_keypoints3d",
    "encode_alpha",
    "export_keypoint_labels",
    "fit",
    "fitted_box",
    "iou_3d",
    "iou_bev",
    "labeling_quality",
    "load_basis",
    "mask_iou",
    "mask_l1",
    "mesh_dimensions",
    "normalize_keypoints",
    "normalize_pixel",
    "project",
    "read_pgm",
    "remove_ground_ransac",
    "render_silhouette",
    "rotation_matrix_euler",
    "rotation_matrix_yaw",
    "sample_keypoints",
    "save_basis",
    "segment_points_in_box",
    "solve_record",
    "solve_translation",
    "solve_translation_normal_equations",
    "synthetic_car_basis",
    "total_loss",
    "transfer_keypoints",
    "transform_object_to_camera",
    "write_pgm",
    "yaw_to_alpha",
]
