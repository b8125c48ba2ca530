import math

import numpy as np
import pytest

from rdfront.core.errors import (
    ExtrapolationError,
    PartialMapError,
    PreconditionError,
    SamplingError,
)
from rdfront.models.speed import SpeedMap, Variant, Verdict
from rdfront.services.geometry_service import polytope_from_angles
from rdfront.services.speedmap_service import (
    build_speed_map,
    check_theorem_conditions,
    closed_form_speed_map,
    condition_frame,
    condition_text,
    equiangular_directions,
    eval_g,
    grad_g,
    reversed_speed_map,
    speed_at,
    speed_map_frame,
)

PLANAR_SPEED = 0.5 / math.sqrt(2.0)


def test_closed_form_map_is_isotropic(closed_map):
    directions = equiangular_directions(2, 7)
    assert np.allclose(speed_at(closed_map, directions), PLANAR_SPEED)


def test_anisotropic_closed_form_map():
    speed_map = closed_form_speed_map(0.25, np.diag([4.0, 1.0]), [0.0, 1.0])
    assert speed_at(speed_map, [[1.0, 0.0]])[0] == pytest.approx(2 * PLANAR_SPEED)
    assert speed_at(speed_map, [[0.0, 1.0]])[0] == pytest.approx(PLANAR_SPEED)


def test_g_on_the_cap(closed_map):
    e = np.array([1.0, 1.0]) / math.sqrt(2.0)
    assert eval_g(closed_map, e) == pytest.approx(0.5)
    # degree-zero homogeneity
    assert eval_g(closed_map, 3.0 * e) == pytest.approx(0.5)
    with pytest.raises(ExtrapolationError):
        eval_g(closed_map, [1.0, 0.01])
    with pytest.raises(PreconditionError):
        eval_g(closed_map, [0.0, 0.0])


def test_linear_interpolation_is_exact_at_samples():
    directions = equiangular_directions(2, 16)
    beta = np.arctan2(directions[:, 1], directions[:, 0])
    speeds = 1.0 + 0.1 * np.cos(beta)
    speed_map = SpeedMap(
        e0=np.array([0.0, 1.0]),
        directions=directions,
        speeds=speeds,
        stderrs=np.full(16, 1e-4),
        resolution=2 * math.pi / 16,
    )
    assert np.allclose(speed_at(speed_map, directions), speeds)
    middle = np.array([[math.cos(math.pi / 16), math.sin(math.pi / 16)]])
    assert speed_at(speed_map, middle)[0] == pytest.approx(
        0.5 * (speeds[0] + speeds[1])
    )


def test_v_conditions_hold_for_the_homogeneous_pair(closed_map, poly45):
    report = check_theorem_conditions(closed_map, poly45, Variant.V)
    assert report.c_hat == pytest.approx(0.5)
    assert report.passed and report.admissible
    assert report.verdict("ii") == Verdict.PASS
    table = np.array(report.sign_table)
    assert table[0, 1] < 0 and table[1, 0] < 0


def test_variants_are_exclusive(closed_map, poly45):
    mirror = check_theorem_conditions(closed_map, poly45, Variant.W)
    assert mirror.verdict("iii") == Verdict.FAIL
    assert not mirror.admissible


def test_reversed_map_favours_the_mirror_family(poly45):
    speed_map = reversed_speed_map([0.0, 1.0])
    e = np.array([1.0, 1.0]) / math.sqrt(2.0)
    assert eval_g(speed_map, e) == pytest.approx(0.5)
    assert eval_g(speed_map, [0.0, 1.0]) == pytest.approx(0.6)
    mirror = check_theorem_conditions(speed_map, poly45, Variant.W)
    assert mirror.passed
    direct = check_theorem_conditions(speed_map, poly45, Variant.V)
    assert direct.verdict("iii") == Verdict.FAIL
    assert direct.verdict("iv") == Verdict.FAIL


def test_single_facet_is_vacuous(closed_map):
    poly = polytope_from_angles([0.0, 1.0], [70.0])
    report = check_theorem_conditions(closed_map, poly, Variant.V)
    assert report.passed
    assert report.c_hat == pytest.approx(PLANAR_SPEED / math.sin(math.radians(70.0)))


def test_noisy_equal_speeds_are_indeterminate(poly45):
    directions = equiangular_directions(2, 32)
    tilt = directions[:, 1]
    speeds = np.where(tilt > 0, 0.5 * np.abs(tilt), 0.3)
    speeds[4] += 1e-4  # the 45 degree sample
    speed_map = SpeedMap(
        e0=np.array([0.0, 1.0]),
        directions=directions,
        speeds=speeds,
        stderrs=np.full(32, 1e-3),
        resolution=2 * math.pi / 32,
    )
    report = check_theorem_conditions(speed_map, poly45, Variant.V)
    assert report.verdict("ii") == Verdict.INDETERMINATE


def test_partial_map_is_refused(closed_map, poly45):
    closed_map.partial = True
    closed_map.failures = [{"direction": [1.0, 0.0], "outcome": "near-stationary"}]
    with pytest.raises(PartialMapError, match="partial"):
        check_theorem_conditions(closed_map, poly45, Variant.V)


def test_gradient_step_must_resolve_the_samples(closed_map):
    with pytest.raises(SamplingError):
        grad_g(closed_map, [0.0, 1.0], delta=1.0)


def test_speed_map_needs_enough_directions(homogeneous):
    with pytest.raises(PreconditionError, match="8 directions"):
        build_speed_map(homogeneous, [0.0, 1.0], direction_count=4)


def test_report_frames(closed_map, poly45):
    frame = speed_map_frame(closed_map)
    assert {"e0", "e1", "speed", "stderr", "g"} <= set(frame.columns)
    assert frame["g"].isna().sum() > 0
    report = check_theorem_conditions(closed_map, poly45, Variant.V)
    assert set(condition_frame(report)["condition"]) == {"i", "ii", "iii", "iv"}
    assert condition_text(report)[-1] == "admissible: True"


def test_gradient_of_the_homogeneous_extension(closed_map):
    # isotropic speed c gives g(x) = c |x| / x.e0
    grad = grad_g(closed_map, [3.0, 4.0])
    expected = PLANAR_SPEED * np.array([0.75, -0.5625])
    assert np.allclose(grad, expected, atol=1e-5)
    # Euler's relation for degree zero, not built into the differencing
    assert abs(grad @ np.array([0.6, 0.8])) <= 1e-5
