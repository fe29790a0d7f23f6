import math

import pytest

from capminmax.domain import ConvexDomain
from capminmax.surface import build_disk_cap

THETA60 = math.pi / 3


@pytest.fixture(scope="session")
def ball():
    return ConvexDomain.ball(1.0)


@pytest.fixture(scope="session")
def cap64(ball):
    """Stationary disk-cap in the unit ball, theta = 60 degrees."""
    return build_disk_cap(ball, (0, 0, 1), 0.5, THETA60, 64)


@pytest.fixture(scope="session")
def cap16(ball):
    return build_disk_cap(ball, (0, 0, 1), 0.5, THETA60, 16)
