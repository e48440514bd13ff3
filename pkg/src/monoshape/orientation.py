"""Multi-bin codec for the local observation angle and alpha/yaw conversion.

The observation (allocentric) angle alpha is the object heading relative
to the camera ray through the object; the global yaw r_y is recovered as
alpha + atan2(T_x, T_z). Alpha is coded as one of 8 bins plus an in-bin
residual, the representation regression heads train against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DegenerateRay, InvalidBin
from .geometry import wrap_angle

BIN_COUNT = 8
_BIN_WIDTH = 2.0 * math.pi / BIN_COUNT  # pi/4
_HALF_WIDTH = _BIN_WIDTH / 2.0  # pi/8


@dataclass(frozen=True)
class MultiBinCode:
    """Discrete bin index plus residual, residual in (-pi/8, pi/8]."""

    bin_index: int
    residual: float
    bin_count: int = BIN_COUNT


def bin_center(bin_index: int, bin_count: int = BIN_COUNT) -> float:
    """Center angle of a bin, wrapped to [-pi, pi)."""
    if not 0 <= bin_index < bin_count:
        raise InvalidBin(f"bin {bin_index} outside 0..{bin_count - 1}")
    return wrap_angle(2.0 * math.pi * bin_index / bin_count)


def encode_alpha(alpha: float) -> MultiBinCode:
    """Assign alpha to its nearest bin center.

    Boundary ties go to the lower-index bin, so the residual lands in
    (-pi/8, pi/8].
    """
    best_k, best_d = 0, float("inf")
    for k in range(BIN_COUNT):
        d = abs(wrap_angle(alpha - bin_center(k)))
        if d < best_d - 1e-15:  # strict improvement keeps ties on the lower k
            best_k, best_d = k, d
    residual = wrap_angle(alpha - bin_center(best_k))
    return MultiBinCode(best_k, residual)


def decode_alpha(code: MultiBinCode) -> float:
    """Reconstruct alpha in [-pi, pi) from a bin code."""
    return wrap_angle(bin_center(code.bin_index, code.bin_count) + code.residual)


def ray_angle(t) -> float:
    """Azimuth of the camera ray through translation t (x, y, z)."""
    tx, tz = float(t[0]), float(t[2])
    if math.hypot(tx, tz) == 0.0:
        raise DegenerateRay("object on the camera vertical axis; ray undefined")
    return math.atan2(tx, tz)


def alpha_to_yaw(alpha: float, t) -> float:
    """Global yaw from local angle: r_y = alpha + atan2(T_x, T_z)."""
    return wrap_angle(alpha + ray_angle(t))


def yaw_to_alpha(r_y: float, t) -> float:
    """Local angle from global yaw; exact inverse of alpha_to_yaw."""
    return wrap_angle(r_y - ray_angle(t))
