import math
from dataclasses import replace

import numpy as np
import pytest

from rdfront.core.errors import PreconditionError, SandwichError
from rdfront.models.assembly import (
    BoundFamily,
    CalibrationResult,
    ConstructionConfig,
    ConstructionReport,
    FrontBundle,
    StabilityParams,
    WindowSpec,
)
from rdfront.models.grid import Grid
from rdfront.models.speed import Variant
from rdfront.services.front_family import ClosedFormFamily
from rdfront.services.fronts_service import (
    CoMovingWindow,
    apex,
    apply_calibration,
    best_shift,
    build_assembly,
    calibrate_eps_alpha,
    check_squeeze,
    construct_front,
    decay_radius,
    eval_curved_bound,
    eval_planar_mix,
    eventually_decreasing,
    facet_speeds,
    planar_solution,
    shift_facets,
    squeeze_evaluator,
    stability_bound_rows,
    stability_initial_data,
    verify_speed_margin,
    vertex_blow_down,
    width_on_grid,
)
from rdfront.services.geometry_service import polytope_from_angles
from rdfront.services.speedmap_service import check_theorem_conditions

PLANAR_SPEED = 0.5 / math.sqrt(2.0)


@pytest.fixture
def w_assembly(homogeneous, poly45, closed_map):
    return build_assembly(
        homogeneous,
        poly45,
        closed_map,
        ClosedFormFamily(0.25, np.eye(2)),
        variant=Variant.W,
    )


@pytest.fixture
def single_facet(homogeneous, closed_map):
    return build_assembly(
        homogeneous,
        polytope_from_angles([0.0, 1.0], [60.0]),
        closed_map,
        ClosedFormFamily(0.25, np.eye(2)),
    )


@pytest.fixture
def window(v_assembly):
    return CoMovingWindow.build(
        v_assembly, WindowSpec(half_width=2.0, below=2.0, above=3.0, h=0.25)
    )


def plane(span=6.0, count=25):
    line = np.linspace(-span, span, count)
    x, y = np.meshgrid(line, line, indexing="ij")
    return np.column_stack([x.ravel(), y.ravel()])


def test_assembly_defaults(v_assembly, homogeneous):
    assert v_assembly.c_hat == pytest.approx(0.5)
    assert v_assembly.epsilon == pytest.approx(homogeneous.sigma / 2)
    assert v_assembly.alpha == pytest.approx(0.2 / math.sqrt(2.0))
    assert len(v_assembly.shifted) == 2
    assert np.allclose(facet_speeds(v_assembly), PLANAR_SPEED)
    assert np.allclose(apex(v_assembly), 0.0, atol=1e-12)


def test_assembly_rejects_large_epsilon(homogeneous, poly45, closed_map):
    with pytest.raises(PreconditionError, match="epsilon"):
        build_assembly(
            homogeneous,
            poly45,
            closed_map,
            ClosedFormFamily(0.25, np.eye(2)),
            epsilon=homogeneous.sigma,
        )


def test_assembly_rejects_mismatched_conditions(homogeneous, poly45, closed_map):
    conditions = check_theorem_conditions(closed_map, poly45, Variant.V)
    with pytest.raises(PreconditionError, match="variant"):
        build_assembly(
            homogeneous,
            poly45,
            closed_map,
            ClosedFormFamily(0.25, np.eye(2)),
            variant=Variant.W,
            conditions=conditions,
        )


def test_planar_mix_is_max_of_pieces(v_assembly, w_assembly):
    z = plane()
    upper = eval_planar_mix(v_assembly, 1.0, z)
    lower = eval_planar_mix(w_assembly, 1.0, z)
    assert np.all(upper >= lower)
    assert np.all((upper >= 0) & (upper <= 1))


def test_curved_bounds_stay_in_range(v_assembly, w_assembly):
    z = plane()
    assert eval_curved_bound(v_assembly, 0.0, z, BoundFamily.SUPER_V).max() <= 1.0
    assert eval_curved_bound(w_assembly, 0.0, z, BoundFamily.SUB_W).min() >= 0.0


def test_stability_subsolution_is_unclamped(v_assembly):
    ahead = np.column_stack([np.linspace(-10.0, 10.0, 201), np.full(201, 60.0)])
    values = eval_curved_bound(v_assembly, 0.0, ahead, BoundFamily.STAB_SUB_V)
    assert values.min() < 0.0


def test_stability_families_need_two_facets(single_facet):
    with pytest.raises(PreconditionError, match="two facets"):
        eval_curved_bound(single_facet, 0.0, plane(), BoundFamily.STAB_SUB_V)


def test_speed_margin(v_assembly, w_assembly, single_facet):
    assert verify_speed_margin(v_assembly).passed
    assert not verify_speed_margin(w_assembly).passed
    vacuous = verify_speed_margin(single_facet)
    assert vacuous.passed and vacuous.count == 0


def test_calibration_needs_admissible_conditions(w_assembly):
    with pytest.raises(PreconditionError, match="admissible"):
        calibrate_eps_alpha(w_assembly)


def test_failed_calibration_is_not_applied(v_assembly):
    result = CalibrationResult(passed=False, tol=1e-3, best_margin=-1.0)
    with pytest.raises(PreconditionError):
        apply_calibration(v_assembly, result)


@pytest.mark.slow
def test_calibration_of_the_homogeneous_pair(v_assembly):
    result = calibrate_eps_alpha(v_assembly)
    assert result.passed
    calibrated = apply_calibration(v_assembly, result)
    assert calibrated.epsilon == result.epsilon
    assert calibrated.alpha == result.alpha
    assert len(result.rows) == 12


def test_window_requires_axis_aligned_direction(v_assembly):
    tilted = replace(
        v_assembly, polytope=polytope_from_angles([1.0, 1.0], [45.0, 135.0])
    )
    with pytest.raises(PreconditionError, match="coordinate axis"):
        CoMovingWindow.build(tilted, WindowSpec())


def test_window_shift_rows(window):
    shape = window.grid.shape
    k = window.nodes_per_period
    values = np.arange(window.grid.size, dtype=float)
    moved = window.shift_rows(values, 1).reshape(shape)
    original = values.reshape(shape)
    assert np.array_equal(moved[:, :-k], original[:, k:])
    assert np.all(np.isnan(moved[:, -k:]))
    assert window.shift_rows(values, 0) is values

    zeros = window.shift_rows(values, 1, fill=0.0).reshape(shape)
    assert np.all(zeros[:, -k:] == 0.0)


def test_window_shift_rows_batched_with_callable_fill(window):
    shape = window.grid.shape
    k = window.nodes_per_period
    values = np.ones((window.grid.size, 3))
    moved = window.shift_rows(values, 2, lambda: np.full(window.grid.size, 7.0))
    moved = moved.reshape(shape + (3,))
    assert np.all(moved[:, -2 * k :, :] == 7.0)
    assert np.all(moved[:, : -2 * k, :] == 1.0)


def test_window_place(window):
    window.place(6.0)
    assert window.offset == pytest.approx(3.0)
    assert np.allclose(window.points() - window.grid.points(), [0.0, 3.0])


def test_vertex_blow_down(v_assembly, w_assembly):
    rows = vertex_blow_down(v_assembly)
    assert [row["alpha"] for row in rows] == pytest.approx(
        [v_assembly.alpha, 0.25 * v_assembly.alpha]
    )
    assert all(0.0 <= row["window_min"] <= 1.0 for row in rows)
    with pytest.raises(PreconditionError):
        vertex_blow_down(w_assembly)


def test_decay_radius(v_assembly, single_facet):
    assert decay_radius(single_facet) == 0.0
    assert decay_radius(v_assembly) > 0.0


@pytest.fixture
def samples():
    return np.column_stack([np.zeros(161), np.linspace(-8.0, 8.0, 161)])


def test_squeezed_planar_front_is_a_supersolution(v_assembly, homogeneous, samples):
    base = planar_solution(v_assembly, 0)
    evaluator = squeeze_evaluator(
        base, homogeneous, StabilityParams(delta=0.05), +1, samples
    )
    assert evaluator.k > 0
    assert evaluator.lam == pytest.approx(homogeneous.kappa)
    grid = Grid.box([-3.0, -3.0], [3.0, 3.0], 0.1)
    report = check_squeeze(evaluator, homogeneous, grid, [0.5, 1.0])
    assert report.passed
    assert report.extreme_residual >= -report.tol


def test_squeeze_preconditions(v_assembly, homogeneous, samples):
    base = planar_solution(v_assembly, 0)
    with pytest.raises(PreconditionError, match="delta"):
        squeeze_evaluator(
            base, homogeneous, StabilityParams(delta=homogeneous.sigma), 1, samples
        )

    def flat(t, z):
        return np.full(len(np.atleast_2d(z)), 0.5)

    with pytest.raises(PreconditionError, match="not positive"):
        squeeze_evaluator(flat, homogeneous, StabilityParams(), 1, samples)


def test_stability_initial_data(v_assembly):
    grid = Grid.box([-2.0, -2.0], [2.0, 2.0], 0.25)
    bundle = FrontBundle(variant=Variant.V, grid=grid, values=np.zeros(grid.size))
    mix = stability_initial_data(v_assembly, bundle, "planar-mix")
    assert np.allclose(mix, eval_planar_mix(v_assembly, 0.0, grid.points()))
    bump = stability_initial_data(v_assembly, bundle, "ridge-bump")
    assert bump.max() == pytest.approx(0.2)
    clamped = stability_initial_data(v_assembly, bundle, "clamped-super")
    assert clamped.min() >= 0.0 and clamped.max() <= 1.0
    with pytest.raises(PreconditionError, match="unknown initial data"):
        stability_initial_data(v_assembly, bundle, "spiral")


@pytest.mark.slow
def test_construction_stays_above_the_planar_mix(v_assembly, tmp_path):
    bundle = construct_front(
        v_assembly,
        WindowSpec(half_width=6.0, below=4.0, above=8.0, h=0.2),
        ConstructionConfig(
            initial_periods=2, max_doublings=1, sandwich_slack=1.0, from_upper=False
        ),
        store_dir=tmp_path,
    )
    report = bundle.construction
    assert report.horizons[0] == pytest.approx(4.0)
    assert report.min_lower_gap >= -1e-8
    assert bundle.values.min() >= -1e-12
    assert bundle.values.max() <= 1.0 + 1e-12
    assert bundle.snapshots
    assert all(isinstance(t, float) for t, _ in bundle.interfaces)


def small_window(**kwargs):
    return WindowSpec(half_width=3.0, below=3.0, above=5.0, h=0.25, **kwargs)


def test_construction_reports_the_sandwich_gaps(v_assembly):
    bundle = construct_front(
        v_assembly,
        small_window(),
        ConstructionConfig(
            initial_periods=1, max_doublings=0, sandwich_slack=1.0, from_upper=False
        ),
    )
    report = bundle.construction
    tol_res = 1e-3 * v_assembly.medium.reaction_max
    assert report.sandwich_tol == 1e-8
    assert report.upper_allowance == pytest.approx(tol_res * report.horizons[-1])
    assert report.sandwich_threshold == pytest.approx(1.0 + report.upper_allowance)
    assert math.isfinite(report.min_planar_gap)
    assert report.min_planar_gap > -0.05
    assert math.isfinite(report.min_upper_gap)
    assert report.upper_within_tol == (report.min_upper_gap >= -1e-8)


def test_construction_faults_beyond_the_allowance(v_assembly):
    # a bound moving four times faster than the front starts far behind it
    lagging = replace(v_assembly, c_hat=2.0, alpha=5.0)
    with pytest.raises(SandwichError, match="curved super_V bound"):
        construct_front(
            lagging,
            small_window(snapshot_every=0.25),
            ConstructionConfig(initial_periods=2, max_doublings=0, from_upper=False),
        )


@pytest.mark.slow
def test_construction_from_both_ends(v_assembly):
    bundle = construct_front(
        v_assembly,
        WindowSpec(half_width=6.0, below=4.0, above=8.0, h=0.2),
        ConstructionConfig(initial_periods=2, max_doublings=1),
    )
    report = bundle.construction
    assert report.sandwich_threshold == pytest.approx(1e-8 + report.upper_allowance)
    assert report.min_upper_gap >= -report.sandwich_threshold
    assert report.min_lower_gap >= -1e-8

    upper = bundle.extras["opposite_values"]
    assert report.upper_start_difference == pytest.approx(
        np.max(np.abs(upper - bundle.values))
    )
    assert np.all(upper >= bundle.values - 1e-8)
    bound = eval_curved_bound(v_assembly, 0.0, bundle.grid.points())
    assert np.all(upper <= bound + report.sandwich_threshold)


def test_report_holds_the_curved_bound_to_the_strict_tolerance():
    report = ConstructionReport(
        min_lower_gap=0.0,
        min_upper_gap=-1e-5,
        upper_allowance=4e-4,
        sandwich_threshold=4e-4 + 1e-8,
    )
    # inside the fault threshold, yet outside the sandwich tolerance
    assert report.min_upper_gap >= -report.sandwich_threshold
    assert not report.upper_within_tol
    assert report.lower_within_tol


def test_facet_weights_reshape_the_shifted_polytopes(v_assembly):
    weighted = shift_facets(v_assembly, StabilityParams(facet_weights=[0.1, 0.3]))
    assert [s.lam for s in weighted.shifted] == [0.1, 0.3]
    assert weighted.shifted[1].spread > weighted.shifted[0].spread
    assert [s.lam for s in v_assembly.shifted] != [0.1, 0.3]
    assert shift_facets(v_assembly, StabilityParams()) is v_assembly

    z = np.array([[0.0, 1.0], [2.0, 3.0], [-4.0, 0.5]])
    rows = stability_bound_rows(weighted, z)
    assert [r["facet"] for r in rows] == [1, 2]
    assert [r["lam"] for r in rows] == [0.1, 0.3]
    assert all(math.isfinite(r["excess"]) for r in rows)
    assert rows != stability_bound_rows(v_assembly, z)


def test_facet_weights_must_match_the_facets(v_assembly):
    with pytest.raises(PreconditionError, match="1 facet weights"):
        shift_facets(v_assembly, StabilityParams(facet_weights=[0.1]))


@pytest.mark.parametrize(
    "distance, expected", [(0.0, 0.0), (0.2, 0.2), (0.21, 0.3), (0.29, 0.3)]
)
def test_transition_width_rounds_up_to_the_grid(distance, expected):
    assert width_on_grid(distance, 0.1) == pytest.approx(expected)


def test_best_shift_refines_an_interior_minimum():
    shift, value = best_shift(lambda tau: abs(tau - 0.37) + 0.1, -1.0, 1.0)
    assert shift == pytest.approx(0.37, abs=2e-3)
    assert value == pytest.approx(0.1, abs=2e-3)


def test_best_shift_keeps_a_minimum_on_the_edge():
    shift, value = best_shift(lambda tau: tau + 2.0, -0.5, 1.0)
    assert shift == -0.5
    assert value == 1.5


def test_eventually_decreasing_checks_the_whole_tail():
    assert eventually_decreasing([0.5, 0.6, 0.4, 0.3, 0.2, 0.1])
    # last point below the midpoint, but the tail rises in between
    assert not eventually_decreasing([0.5, 0.4, 0.3, 0.2, 0.35, 0.1])
    assert eventually_decreasing([0.4, 0.3, 0.2, 0.2 + 1e-4, 0.1])
    assert not eventually_decreasing([0.1])
