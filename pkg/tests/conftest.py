import math

import pytest

from ionmirror.radiometry import ApertureGeometry


@pytest.fixture(scope="session")
def paper_aperture():
    """80 x 127 um rectangle, 59.6 um above the ion, axis at 45 deg in plane."""
    return ApertureGeometry()


@pytest.fixture(scope="session")
def paper_aperture_iris():
    return ApertureGeometry(iris_na=0.48)


@pytest.fixture(scope="session")
def axis_45():
    return (math.sin(math.pi / 4), math.cos(math.pi / 4), 0.0)
