import math

import numpy as np
import pytest

from rdfront.models.speed import Variant
from rdfront.services.front_family import ClosedFormFamily
from rdfront.services.fronts_service import build_assembly
from rdfront.services.geometry_service import polytope_from_angles
from rdfront.services.medium_service import preset_medium
from rdfront.services.speedmap_service import (
    check_theorem_conditions,
    closed_form_speed_map,
)

THETA = 0.25
PLANAR_SPEED = (1.0 - 2.0 * THETA) / math.sqrt(2.0)


@pytest.fixture
def homogeneous():
    return preset_medium("cubic-homogeneous", dim=2, theta=THETA)


@pytest.fixture
def striped():
    return preset_medium("cubic-striped", dim=2, theta=THETA, contrast=0.1)


@pytest.fixture
def poly45():
    return polytope_from_angles([0.0, 1.0], [45.0, 135.0])


@pytest.fixture
def closed_map():
    return closed_form_speed_map(THETA, np.eye(2), [0.0, 1.0])


@pytest.fixture
def v_assembly(homogeneous, poly45, closed_map):
    conditions = check_theorem_conditions(closed_map, poly45, Variant.V)
    return build_assembly(
        homogeneous,
        poly45,
        closed_map,
        ClosedFormFamily(THETA, np.eye(2)),
        variant=Variant.V,
        conditions=conditions,
    )
