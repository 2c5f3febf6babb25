import numpy as np
import pytest

from crosscc.colorimetry import CameraCalibration


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def identity_calibration(camera_id: str = "ident") -> CameraCalibration:
    eye = np.eye(3)
    return CameraCalibration(cm_low=eye, cm_high=eye, fm_low=eye, fm_high=eye,
                             camera_id=camera_id)


def random_calibration(rng: np.random.Generator,
                       camera_id: str = "rand") -> CameraCalibration:
    from crosscc.dataio import random_camera_spec
    return random_camera_spec(rng, camera_id).to_calibration()


@pytest.fixture
def ident_cal():
    return identity_calibration()
