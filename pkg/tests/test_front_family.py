import math

import numpy as np
import pytest

from rdfront.core.errors import ExtrapolationError, PreconditionError
from rdfront.services.front_family import ClosedFormFamily, InterpolatedFamily
from rdfront.services.pulsating_service import closed_form_front, closed_form_profile

PLANAR_SPEED = 0.5 / math.sqrt(2.0)


def unit(deg):
    return np.array([math.cos(math.radians(deg)), math.sin(math.radians(deg))])


@pytest.fixture
def interpolated():
    fronts = [
        closed_form_front(0.25, np.eye(2), unit(b), normalize=False)
        for b in (30.0, 60.0, 90.0, 120.0, 150.0)
    ]
    return InterpolatedFamily(fronts, [0.0, 1.0])


def test_closed_form_family():
    family = ClosedFormFamily(0.25, np.diag([4.0, 1.0]))
    speeds = family.speed(np.array([[1.0, 0.0], [0.0, 1.0]]))
    assert np.allclose(speeds, [2 * PLANAR_SPEED, PLANAR_SPEED])
    assert family.value([0.0, 1.0], [0.0])[0] == pytest.approx(0.5)
    assert np.allclose(family.value([0.0, 1.0], [-800.0, 800.0]), [1.0, 0.0])
    assert family.half_level([0.0, 1.0]) == 0.0


def test_interpolated_family_matches_closed_form(interpolated):
    directions = np.stack([unit(b) for b in (35.0, 90.0, 140.0)])
    assert np.allclose(interpolated.speed(directions), PLANAR_SPEED)
    xi = np.linspace(-4.0, 4.0, 9)
    values = interpolated.value(unit(75.0), xi, np.zeros((xi.size, 2)))
    exact = closed_form_profile(xi, np.eye(2), unit(75.0))
    assert np.allclose(values, exact, atol=1e-6)
    assert interpolated.half_level(unit(90.0)) == pytest.approx(0.0, abs=1e-9)
    assert max(interpolated.midpoint_disagreement) < 1e-6


def test_interpolated_family_refuses_extrapolation(interpolated):
    with pytest.raises(ExtrapolationError, match="outside computed fronts"):
        interpolated.speed(unit(10.0))


def test_interpolated_family_preconditions():
    with pytest.raises(PreconditionError):
        InterpolatedFamily([], [0.0, 1.0])
    front = closed_form_front(0.25, np.eye(3), [0.0, 0.0, 1.0], normalize=False)
    with pytest.raises(PreconditionError, match="two-dimensional"):
        InterpolatedFamily([front], [0.0, 0.0, 1.0])


def test_half_level_blends_between_neighbouring_fronts():
    A = np.diag([4.0, 1.0])
    family = InterpolatedFamily(
        [closed_form_front(0.25, A, unit(b)) for b in (30.0, 60.0, 90.0)],
        [0.0, 1.0],
    )
    at_60, at_90 = family.half_level(unit(60.0)), family.half_level(unit(90.0))
    assert at_60 != pytest.approx(at_90, abs=1e-3)
    # a third of the way from 60 to 90 degrees
    expected = at_60 + (at_90 - at_60) / 3.0
    assert family.half_level(unit(70.0)) == pytest.approx(expected, abs=1e-9)
    with pytest.raises(ExtrapolationError):
        family.half_level(unit(10.0))
