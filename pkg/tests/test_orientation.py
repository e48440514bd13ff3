import math

import numpy as np
import pytest

from monoshape.errors import DegenerateRay, InvalidBin
from monoshape.geometry import wrap_angle
from monoshape.orientation import (
    BIN_COUNT,
    MultiBinCode,
    alpha_to_yaw,
    bin_center,
    decode_alpha,
    encode_alpha,
    yaw_to_alpha,
)


def test_encode_zero():
    code = encode_alpha(0.0)
    assert code.bin_index == 0 and code.residual == 0.0


def test_encode_just_past_boundary_goes_to_next_bin():
    alpha = math.pi / 8 + 1e-3
    code = encode_alpha(alpha)
    assert code.bin_index == 1
    assert math.isclose(code.residual, -math.pi / 8 + 1e-3, abs_tol=1e-12)


def test_boundary_tie_goes_to_lower_bin():
    code = encode_alpha(math.pi / 8)
    assert code.bin_index == 0
    assert math.isclose(code.residual, math.pi / 8, abs_tol=1e-12)


def test_encode_minus_pi():
    code = encode_alpha(-math.pi)
    assert code.bin_index == 4 and abs(code.residual) < 1e-15


def test_encode_picks_nearest_center_exhaustively():
    # independent oracle: brute-force nearest wrapped center
    for alpha in np.linspace(-math.pi, math.pi, 4001, endpoint=False):
        code = encode_alpha(alpha)
        dists = [abs(wrap_angle(alpha - bin_center(k))) for k in range(BIN_COUNT)]
        assert dists[code.bin_index] <= min(dists) + 1e-12
        assert abs(code.residual) <= math.pi / 8 + 1e-12


def test_decode_trivials():
    assert decode_alpha(MultiBinCode(0, 0.0)) == 0.0
    assert decode_alpha(MultiBinCode(4, 0.0)) == -math.pi


def test_decode_rejects_bad_bin():
    with pytest.raises(InvalidBin):
        decode_alpha(MultiBinCode(8, 0.0))
    with pytest.raises(InvalidBin):
        decode_alpha(MultiBinCode(-1, 0.0))


def test_roundtrip_dense(rng):
    for alpha in rng.uniform(-math.pi, math.pi, 20000):
        back = decode_alpha(encode_alpha(alpha))
        assert abs(wrap_angle(back - alpha)) < 1e-12


def test_alpha_to_yaw_on_axis():
    assert math.isclose(alpha_to_yaw(0.5, (0.0, 1.6, 10.0)), 0.5)


def test_alpha_to_yaw_diagonal():
    assert math.isclose(alpha_to_yaw(0.0, (10.0, 1.6, 10.0)), math.pi / 4)


def test_alpha_yaw_inverse_pair(rng):
    for _ in range(500):
        t = rng.uniform(-40, 40, 3)
        t[2] = rng.uniform(2, 80)
        alpha = rng.uniform(-math.pi, math.pi)
        yaw = alpha_to_yaw(alpha, t)
        assert abs(wrap_angle(yaw_to_alpha(yaw, t) - alpha)) < 1e-12
        r_y = rng.uniform(-math.pi, math.pi)
        assert abs(wrap_angle(alpha_to_yaw(yaw_to_alpha(r_y, t), t) - r_y)) < 1e-12


def test_degenerate_ray():
    with pytest.raises(DegenerateRay):
        alpha_to_yaw(0.3, (0.0, 1.0, 0.0))
    with pytest.raises(DegenerateRay):
        yaw_to_alpha(0.3, (0.0, -2.0, 0.0))
