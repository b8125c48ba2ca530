from dataclasses import replace

import numpy as np
import pytest

from rdfront.core.errors import ConfigurationError, PreconditionError
from rdfront.models.grid import AxisBoundary, Field, Grid, SolverConfig
from rdfront.services.medium_service import preset_medium
from rdfront.services.solver_service import (
    Stepper,
    admissible_dt,
    assemble_operator,
    boundary_ring,
    check_comparison,
    neighbour_index,
    residual,
    solve_cauchy,
    step,
)
from rdfront.storage import read_trajectory


@pytest.fixture
def grid():
    return Grid.box([0.0, 0.0], [2.0, 2.0], 0.1)


def test_operator_is_monotone_with_dirichlet_rows(homogeneous, grid):
    operator = assemble_operator(homogeneous, grid)
    matrix = operator.matrix.tocsr()
    off = matrix - np.diag(matrix.diagonal())
    assert off.min() >= 0.0
    free = ~operator.dirichlet
    assert np.allclose(np.asarray(matrix.sum(axis=1)).ravel()[free], 0.0, atol=1e-9)
    assert matrix[operator.dirichlet].nnz == 0
    assert operator.symmetric_interior


def test_mixed_diffusion_too_strong_for_aspect_ratio():
    medium = preset_medium("anisotropic-constant", a11=1.0, a22=1.0, a12=0.9)
    grid = Grid.box([0.0, 0.0], [3.0, 3.0], (0.1, 0.3))
    with pytest.raises(ConfigurationError, match="negative off-diagonal"):
        assemble_operator(medium, grid)


def test_explicit_step_above_monotone_limit_is_refused(homogeneous, grid):
    operator = assemble_operator(homogeneous, grid)
    limit = admissible_dt(homogeneous, grid, operator)
    with pytest.raises(ConfigurationError, match="monotone limit"):
        Stepper(homogeneous, grid, SolverConfig(dt=2.0 * limit), operator)
    lenient = Stepper(homogeneous, grid, SolverConfig(dt=2.0 * limit, strict=False))
    assert lenient.dt == pytest.approx(2.0 * limit)


@pytest.mark.parametrize("level", [0.0, 1.0])
def test_stable_states_are_fixed(homogeneous, grid, level):
    state = Field(grid, np.full(grid.size, level))
    new = step(state, homogeneous, SolverConfig())
    assert np.allclose(new.values, level, atol=1e-12)
    assert new.time > 0


def test_implicit_matches_explicit(homogeneous, grid):
    x, y = grid.points().T
    u0 = Field(grid, 0.5 + 0.3 * np.sin(np.pi * x) * np.sin(np.pi * y))
    explicit = solve_cauchy(homogeneous, u0, SolverConfig(end_time=0.5))
    implicit = solve_cauchy(
        homogeneous, u0, SolverConfig(end_time=0.5, dt=0.01, implicit=True)
    )
    assert np.max(np.abs(explicit[-1].values - implicit[-1].values)) < 1e-2


def test_initial_data_outside_unit_interval(homogeneous, grid):
    with pytest.raises(PreconditionError):
        solve_cauchy(homogeneous, Field(grid, np.full(grid.size, 1.5)), SolverConfig())


def test_trajectory_is_stored(homogeneous, grid, tmp_path):
    u0 = Field(grid, np.full(grid.size, 0.3))
    config = SolverConfig(end_time=0.2, snapshot_every=0.1, store_dir=tmp_path)
    trajectory = solve_cauchy(homogeneous, u0, config)
    stored = read_trajectory(tmp_path)
    assert len(trajectory) >= 3
    assert len(stored) == len(trajectory)
    assert trajectory.times[-1] == pytest.approx(0.2)
    assert np.allclose(stored.times, trajectory.times)


def test_residual_vanishes_on_an_equilibrium(homogeneous, grid):
    snapshots = [Field(grid, np.full(grid.size, 0.25), t) for t in (0.0, 0.1, 0.2)]
    value = residual(homogeneous, snapshots).flat
    ring = boundary_ring(grid)
    assert np.all(np.isnan(value[ring]))
    assert np.allclose(value[~ring], 0.0, atol=1e-12)


def test_residual_preconditions(homogeneous, grid):
    u = np.zeros(grid.size)
    with pytest.raises(PreconditionError):
        residual(homogeneous, [Field(grid, u, 0.0), Field(grid, u, 0.1)])
    with pytest.raises(PreconditionError, match="equally spaced"):
        residual(homogeneous, [Field(grid, u, t) for t in (0.0, 0.1, 0.3)])


def test_ordered_pair_stays_ordered(homogeneous, grid):
    x, y = grid.points().T
    low = 0.4 * np.exp(-((x - 1.0) ** 2 + (y - 1.0) ** 2))
    high = np.clip(low + 0.2 + 0.1 * np.sin(3 * x), 0.0, 1.0)
    report = check_comparison(
        homogeneous, Field(grid, low), Field(grid, high), SolverConfig(end_time=1.0)
    )
    assert report.passed
    assert report.min_gap >= 0.0
    assert report.fault is None


def test_unordered_pair_is_refused(homogeneous, grid):
    low = np.full(grid.size, 0.6)
    high = np.full(grid.size, 0.4)
    with pytest.raises(PreconditionError, match="ordered"):
        check_comparison(
            homogeneous, Field(grid, low), Field(grid, high), SolverConfig()
        )


def test_periodic_neighbour_with_index_shift():
    grid = Grid(
        (0.0, 0.0),
        (0.1, 0.1),
        (10, 4),
        (AxisBoundary.clamped(), AxisBoundary.periodic(shift_axis=0, shift=2)),
    )
    idx = np.array([[5, 3], [5, 0]])
    up, valid = neighbour_index(grid, idx, axis=1, step=1)
    assert up[0].tolist() == [3, 0]
    assert up[1].tolist() == [5, 1]
    assert valid.all()
    down, _ = neighbour_index(grid, idx, axis=1, step=-1)
    assert down[1].tolist() == [7, 3]


def test_zero_flux_diffusion_conserves_mass(homogeneous):
    inert = replace(
        homogeneous,
        reaction=lambda x, u: np.zeros_like(u),
        reaction_du=lambda x, u: np.zeros_like(u),
        theta_field=None,
        du_range=(0.0, 0.0),
    )
    walls = (AxisBoundary.zero_flux(), AxisBoundary.zero_flux())
    grid = Grid.box([0.0, 0.0], [2.0, 2.0], 0.1, boundaries=walls)
    x, y = grid.points().T
    u0 = Field(grid, 0.2 + 0.6 * np.exp(-4.0 * ((x - 0.5) ** 2 + (y - 1.2) ** 2)))
    final = solve_cauchy(inert, u0, SolverConfig(end_time=0.5))[-1]
    assert final.flat.sum() == pytest.approx(u0.flat.sum(), rel=1e-10)
    assert final.flat.max() < u0.flat.max()
