import math

import numpy as np
import pytest

from rdfront.core.errors import PolytopeError, SurfaceError
from rdfront.services.geometry_service import (
    build_polytope,
    contains,
    default_lambda,
    facet_distance,
    hessian_eigenvalues,
    moving_coordinate,
    polytope_from_angles,
    ridge_distance,
    sample_cap,
    shifted_polytope,
    surface_height,
    surface_table,
)

SQRT2 = math.sqrt(2.0)


def symmetric_height(x, alpha=1.0):
    """sqrt(2) ln(2 cosh(alpha x / sqrt(2))) / alpha for the 45 degree pair."""
    return SQRT2 * np.log(2.0 * np.cosh(alpha * x / SQRT2)) / alpha


def test_frame_decomposition(poly45):
    assert poly45.n == 2
    assert np.allclose(poly45.frame[:, 0], [1.0, 0.0])
    assert np.allclose(poly45.s, [1 / SQRT2, 1 / SQRT2])
    assert np.allclose(poly45.a, [[1 / SQRT2], [-1 / SQRT2]])


@pytest.mark.parametrize("alpha", [1.0, 0.5, 0.1])
def test_symmetric_surface_closed_form(poly45, alpha):
    x = np.linspace(-20.0, 20.0, 81)
    ev = surface_height(poly45, x, alpha)
    assert np.allclose(ev.height, symmetric_height(x, alpha), atol=1e-10)
    assert np.allclose(np.exp(-ev.q_hat).sum(axis=1), 1.0, atol=1e-12)


def test_interaction_term(poly45):
    ev = surface_height(poly45, np.array([0.0, 60.0]))
    assert ev.h[0] == pytest.approx(0.5)
    assert ev.h[1] < 1e-12


def test_gradient_and_convexity(poly45):
    x = np.linspace(-5.0, 5.0, 21)
    step = 1e-5
    ev = surface_height(poly45, x)
    forward = surface_height(poly45, x + step).height
    backward = surface_height(poly45, x - step).height
    assert np.allclose(ev.grad[:, 0], (forward - backward) / (2 * step), atol=1e-8)
    assert hessian_eigenvalues(ev).min() >= 0.0
    assert np.all(np.abs(ev.grad[:, 0]) < 1.0)


def test_normal_is_convex_combination(poly45):
    ev = surface_height(poly45, np.linspace(-3.0, 3.0, 13))
    assert np.allclose(np.linalg.norm(ev.normal, axis=1), 1.0)
    assert np.allclose(ev.tau @ poly45.directions, ev.normal, atol=1e-12)
    assert np.all(ev.tau >= 0)


def test_single_facet_is_a_plane():
    poly = polytope_from_angles([0.0, 1.0], [60.0])
    x = np.linspace(-4.0, 4.0, 9)
    ev = surface_height(poly, x)
    plane = -x * poly.a[0, 0] / poly.s[0]
    assert np.allclose(ev.height, plane, atol=1e-12)
    assert np.allclose(ev.h, 0.0)


def test_three_dimensional_surface():
    e0 = [0.0, 0.0, 1.0]
    directions = [
        [math.cos(b) * 0.8, math.sin(b) * 0.8, 0.6]
        for b in (0.0, 2 * math.pi / 3, 4 * math.pi / 3)
    ]
    poly = build_polytope(e0, directions)
    xs = np.random.default_rng(3).uniform(-4.0, 4.0, size=(50, 2))
    ev = surface_height(poly, xs, alpha=0.5)
    assert np.allclose(np.exp(-ev.q_hat).sum(axis=1), 1.0, atol=1e-12)
    assert hessian_eigenvalues(ev).min() >= -1e-10


def test_polytope_rejects_untilted_or_repeated_directions():
    with pytest.raises(PolytopeError, match="condition"):
        build_polytope([0.0, 1.0], [[1.0, 0.0], [-1.0, 1.0]])
    with pytest.raises(PolytopeError, match="coincide"):
        build_polytope([0.0, 1.0], [[1.0, 1.0], [2.0, 2.0]])
    with pytest.raises(PolytopeError):
        build_polytope([0.0, 1.0], [[1.0, 1.0, 0.0]])


def test_surface_rejects_nonpositive_alpha(poly45):
    with pytest.raises(SurfaceError):
        surface_height(poly45, [0.0], alpha=0.0)


def test_moving_coordinate_variants(poly45):
    upper = moving_coordinate(poly45, 0.0, [0.0], [0.0], 0.5, variant="upper")
    lower = moving_coordinate(poly45, 0.0, [0.0], [0.0], 0.5, variant="lower")
    assert upper[0] == pytest.approx(-SQRT2 * math.log(2.0))
    assert lower[0] == pytest.approx(SQRT2 * math.log(2.0))
    with pytest.raises(ValueError):
        moving_coordinate(poly45, 0.0, [0.0], [0.0], 0.5, variant="middle")


def test_shifted_polytope_keeps_its_own_facet(poly45):
    lam = default_lambda(poly45, 0)
    assert lam == pytest.approx(0.125)
    shifted = shifted_polytope(poly45, 0, lam)
    assert np.allclose(shifted.polytope.directions[0], poly45.directions[0])
    assert np.all(shifted.polytope.s > 0)
    assert shifted.spread > 0
    with pytest.raises(PolytopeError):
        shifted_polytope(poly45, 0, 1.0)


def test_cone_distances(poly45):
    z = np.array([[0.0, 1.0], [0.0, -1.0], [2.0, 0.0]])
    assert contains(poly45, z).tolist() == [True, False, False]
    assert np.allclose(facet_distance(poly45, z), [1 / SQRT2, 1.0, SQRT2])
    assert np.allclose(ridge_distance(poly45, z), np.linalg.norm(z, axis=1))
    single = polytope_from_angles([0.0, 1.0], [60.0])
    assert np.all(np.isinf(ridge_distance(single, z)))


def test_cap_samples_span_the_facets(poly45):
    cap = sample_cap(poly45, 11)
    assert np.allclose(cap[0], poly45.directions[0])
    assert np.allclose(cap[-1], poly45.directions[1])
    assert np.all(cap @ poly45.e0 >= poly45.s.min() - 1e-12)


def test_surface_table_columns(poly45):
    table = surface_table(poly45, np.linspace(-2.0, 2.0, 5))
    assert list(table.columns) == ["x0", "phi", "grad0", "h", "e0", "e1"]
    assert table["phi"].iloc[2] == pytest.approx(SQRT2 * math.log(2.0))
