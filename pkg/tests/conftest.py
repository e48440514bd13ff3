import numpy as np
import pytest

from monoshape.geometry import CameraIntrinsics
from monoshape.shape_model import synthetic_car_basis


@pytest.fixture(scope="session")
def basis():
    return synthetic_car_basis()


@pytest.fixture(scope="session")
def kitti_intrinsics():
    # typical KITTI cam-2 values
    return CameraIntrinsics(fx=721.5377, fy=721.5377, cx=609.5593, cy=172.854)


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
