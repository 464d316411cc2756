import pytest

from dipolemirror import ApertureSpec, RadialMode, optimize_waist, plane_to_sphere


@pytest.fixture(scope="session")
def aperture():
    return ApertureSpec()


@pytest.fixture(scope="session")
def dipole_field(aperture):
    return plane_to_sphere(RadialMode.dipole(), aperture)


@pytest.fixture(scope="session")
def waist_optimum(aperture):
    return optimize_waist(aperture)


@pytest.fixture(scope="session")
def doughnut_field(aperture, waist_optimum):
    return plane_to_sphere(RadialMode.doughnut(waist_optimum.waist), aperture)
