import math

import pytest

from camrad import CameraModel, GroundPlane


@pytest.fixture
def cam():
    """Canonical intrinsics used across the suite, radar at the camera."""
    return CameraModel(1000.0, 1000.0, 720.0, 540.0)


@pytest.fixture
def flat_plane():
    return GroundPlane(0.0, 0.0, 1.65)


@pytest.fixture
def pitched_plane():
    return GroundPlane(math.radians(4.0), 0.0, 1.65)
