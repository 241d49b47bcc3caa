import math

import pytest

import singular_geodesics as sg


@pytest.fixture(scope="session")
def flat_circle():
    return sg.circle_section(2.0 * math.pi)


@pytest.fixture(scope="session")
def cone_warp():
    return sg.make_power_warp(1.0)


@pytest.fixture(scope="session")
def cusp_warp():
    return sg.make_power_warp(2.0)


@pytest.fixture(scope="session")
def round_sphere():
    return sg.sphere_section()
