import math

import numpy as np
import pytest

from rdfront.models.front import FrontConfig, FrontOutcome
from rdfront.services.pulsating_service import (
    ProfileEvaluator,
    closed_form_front,
    closed_form_profile,
    closed_form_speed,
    commensurate_directions,
    compute_front,
    lattice_vector,
)

PLANAR_SPEED = 0.5 / math.sqrt(2.0)


def test_closed_form_speed_and_profile():
    assert closed_form_speed(0.25, np.eye(2), [0.0, 1.0]) == pytest.approx(PLANAR_SPEED)
    assert closed_form_speed(0.5, np.eye(2), [1.0, 0.0]) == 0.0
    A = np.diag([4.0, 1.0])
    assert closed_form_speed(0.25, A, [1.0, 0.0]) == pytest.approx(2 * PLANAR_SPEED)
    assert closed_form_profile(0.0, np.eye(2), [1.0, 0.0]) == pytest.approx(0.5)


def test_lattice_vectors():
    v, miss = lattice_vector([1.0, 0.0], (1.0, 1.0))
    assert v.tolist() == [0.0, 1.0]
    assert miss == 0.0
    diagonal = np.array([1.0, 1.0]) / math.sqrt(2.0)
    v, miss = lattice_vector(diagonal, (1.0, 1.0))
    assert abs(v @ diagonal) < 1e-12
    assert miss == pytest.approx(0.0, abs=1e-12)


def test_commensurate_directions_include_the_axes():
    directions = commensurate_directions((1.0, 1.0), max_denominator=2)
    for axis in ([1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]):
        assert np.any(np.all(np.isclose(directions, axis), axis=1))


def test_profile_evaluator_reproduces_the_table():
    front = closed_form_front(0.25, np.eye(2), [0.0, 1.0], normalize=False)
    evaluator = ProfileEvaluator(front)
    xi = np.linspace(-5.0, 5.0, 41)
    exact = closed_form_profile(xi, np.eye(2), [0.0, 1.0])
    assert np.allclose(evaluator(xi), exact, atol=1e-6)
    assert evaluator(np.array([-100.0, 100.0])).tolist() == [1.0, 0.0]
    assert evaluator.tail_extensions == 2


def test_normalized_profile_carries_unit_tail_mass():
    front = closed_form_front(0.25, np.eye(2), [0.0, 1.0])
    # the table is the analytic profile moved by the shift
    eta = np.linspace(front.shift, 60.0, 400001)
    mass = np.trapezoid(closed_form_profile(eta, np.eye(2), [0.0, 1.0]) ** 2, eta)
    assert mass == pytest.approx(1.0, abs=1e-3)
    assert front.shift != 0.0


@pytest.mark.slow
def test_homogeneous_front_matches_closed_form_speed(homogeneous):
    front = compute_front(homogeneous, [0.0, 1.0], FrontConfig(h=0.05))
    assert front.outcome in (FrontOutcome.CONVERGED, FrontOutcome.SPEED_ONLY)
    assert front.speed == pytest.approx(PLANAR_SPEED, rel=0.02)
