import math

import numpy as np
import pytest

from rdfront.core.errors import MediumError
from rdfront.services.medium_service import (
    constant_diffusion,
    constant_theta,
    cubic_reaction,
    cubic_reaction_du,
    make_cubic_medium,
    preset_medium,
    validate_medium,
)


def test_cubic_reaction_zeros_and_linear_continuation():
    u = np.array([0.0, 0.25, 1.0])
    assert np.allclose(cubic_reaction(u, 0.25), 0.0)
    # slopes at the stable states carry over outside [0, 1]
    assert cubic_reaction(-0.1, 0.25) == pytest.approx(0.025)
    assert cubic_reaction(1.1, 0.25) == pytest.approx(-0.075)
    assert cubic_reaction_du(np.array([-0.5, 1.5]), 0.25) == pytest.approx(
        [-0.25, -0.75]
    )


def test_fringe_width_and_slope_bound(homogeneous):
    root = math.sqrt(1.0 - 0.25 + 0.25**2)
    low, high = (1.25 - root) / 3.0, (1.25 + root) / 3.0
    assert homogeneous.sigma == pytest.approx(0.9 * min(low, 1.0 - high), rel=1e-12)
    assert homogeneous.kappa > 0
    u = np.linspace(-0.5, homogeneous.sigma, 50)
    slopes = cubic_reaction_du(u, 0.25)
    assert np.all(-slopes >= homogeneous.kappa - 1e-12)


def test_homogeneous_medium_validates(homogeneous):
    report = validate_medium(homogeneous, sampling_density=8)
    assert report.passed
    assert report.check("A2-periodicity").passed
    # integral of u(1-u)(u-theta) over [0,1] is 1/12 - theta/6
    assert report.h1_integral == pytest.approx(1.0 / 24.0, rel=1e-10)
    assert report.h1_sign == 1
    assert not report.h1_boundary_case
    assert np.allclose(report.theta_samples, 0.25, atol=1e-9)


def test_balanced_medium_is_boundary_case():
    medium = preset_medium("cubic-homogeneous", dim=2, theta=0.5)
    report = validate_medium(medium, sampling_density=8)
    assert report.h1_boundary_case
    assert report.h1_sign == 0


def test_striped_thresholds_follow_the_stripes(striped):
    report = validate_medium(striped, sampling_density=8)
    assert report.passed
    assert min(report.theta_samples) >= 0.15 - 1e-9
    assert max(report.theta_samples) <= 0.35 + 1e-9
    assert constant_theta(striped) is None
    assert np.allclose(constant_diffusion(striped), np.eye(2))


def test_constant_coefficients(homogeneous):
    assert constant_theta(homogeneous) == pytest.approx(0.25)
    assert np.allclose(constant_diffusion(homogeneous), np.eye(2))


def test_checkerboard_diffusion_is_heterogeneous():
    medium = preset_medium("checkerboard-diffusion", dim=2, contrast=0.5)
    assert constant_diffusion(medium) is None
    assert medium.lambda_bounds[0] == pytest.approx(0.5, abs=0.05)
    assert validate_medium(medium, sampling_density=8).passed


def test_threshold_outside_unit_interval_is_rejected():
    with pytest.raises(MediumError, match="theta"):
        make_cubic_medium(
            lambda x: np.full(len(x), 1.2),
            lambda x: np.broadcast_to(np.eye(2), (len(x), 2, 2)),
            (1.0, 1.0),
        )


def test_asymmetric_diffusion_is_rejected():
    skew = np.array([[1.0, 0.2], [0.0, 1.0]])
    with pytest.raises(MediumError, match="symmetric"):
        make_cubic_medium(
            lambda x: np.full(len(x), 0.25),
            lambda x: np.broadcast_to(skew, (len(x), 2, 2)),
            (1.0, 1.0),
        )


def test_indefinite_diffusion_is_rejected():
    with pytest.raises(MediumError, match="positive definite"):
        preset_medium("anisotropic-constant", a11=1.0, a22=1.0, a12=1.5)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"preset": "no-such-medium"},
        {"preset": "checkerboard-diffusion", "contrast": 1.0},
        {"preset": "anisotropic-constant", "dim": 3},
    ],
)
def test_bad_presets(kwargs):
    with pytest.raises(MediumError):
        preset_medium(**kwargs)


def test_sampling_density_floor(homogeneous):
    with pytest.raises(MediumError, match="sampling_density"):
        validate_medium(homogeneous, sampling_density=4)
