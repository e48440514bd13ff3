"""Exception types shared across the package.

Every failure mode raised by library code derives from MonoshapeError so
callers (and the CLI) can distinguish domain errors from programming bugs.
"""


class MonoshapeError(Exception):
    """Base class for all library errors."""


# geometry
class PointBehindCamera(MonoshapeError):
    """Projection requested for a point at or behind the camera plane."""


# pose solver
class TooFewKeypoints(MonoshapeError):
    """A keypoint set needs at least 2 correspondences."""


class NonFiniteInput(MonoshapeError):
    """NaN or infinity encountered where finite values are required."""


class RankDeficient(MonoshapeError):
    """The weighted constraint matrix does not determine all of T.

    Carries ``unobservable`` — unit direction vectors (rows) spanning the
    null space that the data cannot constrain.
    """

    def __init__(self, msg, unobservable=None):
        super().__init__(msg)
        self.unobservable = unobservable if unobservable is not None else []


class AllWeightsZero(MonoshapeError):
    """Every constraint weight is (numerically) zero."""


class SingularNormalMatrix(MonoshapeError):
    """Normal-equations matrix is singular; the system is degenerate."""


# shape model
class DimensionMismatch(MonoshapeError):
    """Coefficient vector length does not match the basis rank."""


class IndexOutOfRange(MonoshapeError):
    """A keypoint vertex index exceeds the mesh vertex count."""


class EmptyMesh(MonoshapeError):
    """Operation requires a mesh with at least one vertex/face."""


class NonPositiveDimension(MonoshapeError):
    """Object dimensions must be strictly positive."""


# orientation
class InvalidBin(MonoshapeError):
    """Bin index outside the configured bin count."""


class DegenerateRay(MonoshapeError):
    """Viewing ray undefined: object sits on the camera's vertical axis."""


# silhouette
class AllVerticesClipped(MonoshapeError):
    """Every mesh vertex lies at or behind the near plane."""


class SizeMismatch(MonoshapeError):
    """Mask operands have different dimensions."""


# autolabeler
class EmptyInput(MonoshapeError):
    """An operand (point list, mesh) is empty."""


class TooFewPoints(MonoshapeError):
    """Not enough points for plane estimation."""


class InsufficientPoints(MonoshapeError):
    """Observation has too few LiDAR points for a meaningful fit."""


class DivergedLoss(MonoshapeError):
    """Optimization produced a non-finite loss value."""


class ProjectionFailure(MonoshapeError):
    """A keypoint to be exported projects behind the camera."""


# metrics
class LengthMismatch(MonoshapeError):
    """Paired lists for evaluation have different lengths."""


# file formats
class MalformedLine(MonoshapeError):
    """A text record does not match the expected field layout."""


class MissingKey(MonoshapeError):
    """A required key is absent from a calibration file."""


class TruncatedFile(MonoshapeError):
    """Binary file length is not a whole number of records."""


class UnsupportedFormat(MonoshapeError):
    """File header does not identify a supported format."""
