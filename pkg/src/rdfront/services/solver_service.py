import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import bicgstab, cg

from rdfront.core.errors import (
    ConfigurationError,
    DivergenceError,
    GridMismatchError,
    PreconditionError,
)
from rdfront.core.settings import Settings
from rdfront.models.grid import (
    BoundaryKind,
    ComparisonReport,
    Field,
    Grid,
    SolverConfig,
    Trajectory,
)
from rdfront.models.medium import PeriodicMedium
from rdfront.services.medium_service import FrozenReaction
from rdfront.storage import write_trajectory

logger = logging.getLogger(__name__)


@dataclass
class Operator:
    """Assembled discrete diffusion operator; Dirichlet rows are zero."""

    matrix: sparse.csr_matrix
    dirichlet: np.ndarray
    diagonal_max: float
    symmetric_interior: bool


def neighbour_index(grid: Grid, idx: np.ndarray, axis: int, step: int):
    """Multi-indices one node along ``axis``; returns (indices, valid mask)."""
    n = grid.shape[axis]
    out = idx.copy()
    target = idx[:, axis] + step
    valid = np.ones(len(idx), dtype=bool)
    bc = grid.boundaries[axis]
    if bc.kind == BoundaryKind.PERIODIC:
        out[:, axis] = np.mod(target, n)
        if bc.shift_axis is not None and bc.shift:
            sa = bc.shift_axis
            out[target >= n, sa] -= bc.shift
            out[target < 0, sa] += bc.shift
            out[:, sa] = np.clip(out[:, sa], 0, grid.shape[sa] - 1)
    else:
        valid = (target >= 0) & (target < n)
        out[:, axis] = np.clip(target, 0, n - 1)
    return out, valid


def boundary_ring(grid: Grid) -> np.ndarray:
    """Mask of nodes lying on a non-periodic face."""
    idx = np.indices(grid.shape).reshape(grid.dim, -1).T
    ring = np.zeros(grid.size, dtype=bool)
    for k, bc in enumerate(grid.boundaries):
        if bc.kind != BoundaryKind.PERIODIC:
            ring |= (idx[:, k] == 0) | (idx[:, k] == grid.shape[k] - 1)
    return ring


def dirichlet_mask(grid: Grid) -> np.ndarray:
    idx = np.indices(grid.shape).reshape(grid.dim, -1).T
    mask = np.zeros(grid.size, dtype=bool)
    for k, bc in enumerate(grid.boundaries):
        if bc.kind == BoundaryKind.CLAMPED:
            mask |= (idx[:, k] == 0) | (idx[:, k] == grid.shape[k] - 1)
    return mask


def assemble_operator(medium: PeriodicMedium, grid: Grid) -> Operator:
    """Conservative flux differencing of div(A grad u).

    Diagonal entries of A use the harmonic mean across each face. The mixed
    terms use the sign-adapted corner stencil and are dropped at nodes whose
    stencil would leave through a zero-flux face.
    """
    if medium.dim != grid.dim:
        raise GridMismatchError(f"medium is {medium.dim}-D but grid is {grid.dim}-D")

    size, dim = grid.size, grid.dim
    idx = np.indices(grid.shape).reshape(dim, -1).T
    A = medium.diffusion(grid.points())
    dirichlet = dirichlet_mask(grid)
    free = ~dirichlet
    rows, cols, vals = [], [], []

    def add(r, c, v):
        rows.append(r)
        cols.append(c)
        vals.append(np.broadcast_to(v, r.shape))

    def flat(multi):
        return np.ravel_multi_index(multi.T, grid.shape)

    for k in range(dim):
        h = grid.spacing[k]
        for step in (1, -1):
            nb, valid = neighbour_index(grid, idx, k, step)
            sel = free & valid
            p = np.flatnonzero(sel)
            q = flat(nb[sel])
            a_p, a_q = A[p, k, k], A[q, k, k]
            w = 2.0 * a_p * a_q / (a_p + a_q) / h**2
            add(p, q, w)
            add(p, p, -w)

    for k in range(dim):
        for l in range(k + 1, dim):
            a = A[:, k, l]
            active = free & (np.abs(a) > 0)
            if not active.any():
                continue
            kp, v_kp = neighbour_index(grid, idx, k, 1)
            km, v_km = neighbour_index(grid, idx, k, -1)
            lp, v_lp = neighbour_index(grid, idx, l, 1)
            lm, v_lm = neighbour_index(grid, idx, l, -1)
            pp, v_pp = neighbour_index(grid, kp, l, 1)
            pm, v_pm = neighbour_index(grid, kp, l, -1)
            mp, v_mp = neighbour_index(grid, km, l, 1)
            mm, v_mm = neighbour_index(grid, km, l, -1)
            positive = a >= 0
            c1 = np.where(positive[:, None], pp, pm)
            c2 = np.where(positive[:, None], mm, mp)
            v_c1 = np.where(positive, v_kp & v_pp, v_kp & v_pm)
            v_c2 = np.where(positive, v_km & v_mm, v_km & v_mp)
            sel = active & v_kp & v_km & v_lp & v_lm & v_c1 & v_c2
            p = np.flatnonzero(sel)
            w = np.abs(a[p]) / (grid.spacing[k] * grid.spacing[l])
            add(p, flat(c1[sel]), w)
            add(p, flat(c2[sel]), w)
            for nb in (kp, km, lp, lm):
                add(p, flat(nb[sel]), -w)
            add(p, p, 2.0 * w)

    if rows:
        matrix = sparse.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(size, size),
        ).tocsr()
    else:
        matrix = sparse.csr_matrix((size, size))
    matrix.sum_duplicates()

    diagonal = matrix.diagonal()
    scale = max(float(np.abs(diagonal).max(initial=0.0)), 1.0)
    off = (matrix - sparse.diags(diagonal)).tocoo()
    if off.nnz and off.data.min() < -1e-12 * scale:
        worst = int(np.argmin(off.data))
        node = np.unravel_index(off.row[worst], grid.shape)
        logger.error(f"Stencil not monotone at node {tuple(int(i) for i in node)}")
        raise ConfigurationError(
            f"negative off-diagonal {off.data[worst]:.3e} at node "
            f"{tuple(int(i) for i in node)}: mixed diffusion too strong for the "
            "grid aspect ratio"
        )

    interior = matrix[free][:, free]
    asym = abs(interior - interior.T)
    symmetric = asym.nnz == 0 or float(asym.max()) <= 1e-12 * scale
    return Operator(
        matrix=matrix,
        dirichlet=dirichlet,
        diagonal_max=float(max(0.0, (-diagonal).max(initial=0.0))),
        symmetric_interior=bool(symmetric),
    )


def admissible_dt(
    medium: PeriodicMedium,
    grid: Grid,
    operator: Operator,
    implicit: bool = False,
    safety: Optional[float] = None,
) -> float:
    """Largest time step keeping the scheme monotone, times ``safety``."""
    safety = Settings.CFL_SAFETY if safety is None else safety
    fu_min, fu_max = medium.du_range
    if implicit:
        bound = max(abs(fu_min), abs(fu_max))
        return safety / (2.0 * bound) if bound > 0 else math.inf
    cfl = min(grid.spacing) ** 2 / (2 * grid.dim * medium.lambda_bounds[1])
    rate = operator.diagonal_max + max(0.0, -fu_min)
    monotone = 1.0 / rate if rate > 0 else math.inf
    return safety * min(cfl, monotone)


class Stepper:
    """Advances nodal values on one grid; values may be (P,) or batched (P, m)."""

    def __init__(
        self,
        medium: PeriodicMedium,
        grid: Grid,
        config: SolverConfig,
        operator: Optional[Operator] = None,
    ):
        self.medium = medium
        self.grid = grid
        self.config = config
        self.operator = operator or assemble_operator(medium, grid)
        self.points = grid.points()
        self.reaction = FrozenReaction(medium, self.points)
        # translation of the frame against the grid, used for boundary data only
        self.offset = np.zeros(grid.dim)
        self.dt_max = admissible_dt(
            medium, grid, self.operator, config.implicit, config.cfl_safety
        )
        self.dt = self._choose_dt()
        self._free = np.flatnonzero(~self.operator.dirichlet)
        self._fixed = np.flatnonzero(self.operator.dirichlet)
        self._implicit_dt = None
        self._system = None

    def _choose_dt(self) -> float:
        config = self.config
        if config.dt is None:
            dt = self.dt_max
            if not math.isfinite(dt):
                dt = config.snapshot_every or config.end_time
            return float(dt)
        if config.dt > self.dt_max * (1 + 1e-12):
            message = (
                f"dt={config.dt:.4g} exceeds the monotone limit {self.dt_max:.4g} "
                f"(h={min(self.grid.spacing):.4g})"
            )
            if config.strict:
                logger.error(message)
                raise ConfigurationError(message)
            logger.warning(message + "; continuing because strict=False")
        return float(config.dt)

    def boundary_values(self, t: float, current: np.ndarray) -> np.ndarray:
        if self.config.boundary is None:
            return current[self._fixed]
        values = np.asarray(
            self.config.boundary(t, self.points[self._fixed] + self.offset), dtype=float
        )
        if current.ndim == 2 and values.ndim == 1:
            values = np.repeat(values[:, None], current.shape[1], axis=1)
        return values

    def _implicit_system(self, dt: float):
        if self._implicit_dt != dt:
            L = self.operator.matrix
            interior = L[self._free][:, self._free]
            self._system = (
                sparse.identity(len(self._free), format="csr") - dt * interior
            ).tocsr()
            self._coupling = L[self._free][:, self._fixed].tocsr()
            self._implicit_dt = dt
        return self._system

    def _solve(self, system, rhs: np.ndarray, guess: np.ndarray) -> np.ndarray:
        solver = cg if self.operator.symmetric_interior else bicgstab
        x, info = solver(system, rhs, x0=guess, rtol=self.config.inner_rtol, atol=0.0)
        if info != 0:
            logger.error(f"Inner linear solve stopped with info={info}")
            raise DivergenceError(f"inner linear solve did not converge (info={info})")
        return x

    def advance(self, values: np.ndarray, t: float, dt: Optional[float] = None):
        dt = self.dt if dt is None else dt
        values = np.asarray(values, dtype=float)
        forcing = self.reaction.value(values)
        fixed_new = self.boundary_values(t + dt, values)

        if self.config.implicit:
            system = self._implicit_system(dt)
            new = np.empty_like(values)
            rhs = values[self._free] + dt * forcing[self._free]
            if len(self._fixed):
                rhs = rhs + dt * (self._coupling @ fixed_new)
            if values.ndim == 1:
                new[self._free] = self._solve(system, rhs, values[self._free])
            else:
                for j in range(values.shape[1]):
                    new[self._free, j] = self._solve(
                        system, rhs[:, j], values[self._free, j]
                    )
        else:
            new = values + dt * (self.operator.matrix @ values + forcing)

        new[self._fixed] = fixed_new
        self.guard(new, t + dt)
        return new

    def guard(self, values: np.ndarray, t: float) -> None:
        bad = ~np.isfinite(values)
        if self.config.check_range:
            with np.errstate(invalid="ignore"):
                bad |= np.abs(values) > self.config.divergence_bound
        if values.ndim == 2:
            bad = bad.any(axis=1)
        if bad.any():
            row = int(np.flatnonzero(bad)[0])
            node = tuple(int(i) for i in np.unravel_index(row, self.grid.shape))
            value = values[row]
            message = f"solution left the admissible range at node {node}, t={t:.4g}"
            logger.error(f"{message}: value {value}")
            raise DivergenceError(message, node=node, value=value)


def step(state: Field, medium: PeriodicMedium, config: SolverConfig) -> Field:
    """One time step of the monotone scheme."""
    stepper = Stepper(medium, state.grid, config)
    new = stepper.advance(state.flat, state.time)
    return Field(state.grid, new, state.time + stepper.dt)


def solve_cauchy(
    medium: PeriodicMedium,
    u0: Field,
    config: SolverConfig,
    stepper: Optional[Stepper] = None,
) -> Trajectory:
    """Evolve ``u0`` to ``config.end_time`` and collect snapshots."""
    values = u0.flat.copy()
    if config.check_range and (values.min() < -1e-12 or values.max() > 1 + 1e-12):
        raise PreconditionError(
            f"initial data outside [0,1]: "
            f"range [{values.min():.4g}, {values.max():.4g}]"
        )
    stepper = stepper or Stepper(medium, u0.grid, config)
    n_steps = max(1, math.ceil(config.end_time / stepper.dt - 1e-9))
    dt = config.end_time / n_steps
    every = n_steps
    if config.snapshot_every:
        every = max(1, int(round(config.snapshot_every / dt)))

    trajectory = Trajectory(meta={"dt": dt, "steps": n_steps, "medium": medium.name})
    trajectory.append(Field(u0.grid, values.copy(), u0.time))
    t = u0.time
    for n in range(1, n_steps + 1):
        values = stepper.advance(values, t, dt)
        t = u0.time + n * dt
        if n % every == 0 or n == n_steps:
            trajectory.append(Field(u0.grid, values.copy(), t))

    logger.info(
        f"Solved to t={t:.4g} with {n_steps} steps of dt={dt:.4g}, "
        f"{len(trajectory)} snapshots"
    )
    if config.store_dir is not None:
        trajectory.directory = write_trajectory(config.store_dir, trajectory)
    return trajectory


def residual(
    medium: PeriodicMedium,
    snapshots: Sequence[Field],
    operator: Optional[Operator] = None,
) -> Field:
    """Central-in-time evaluation of u_t - div(A grad u) - f at the middle snapshot.

    Nodes on non-periodic faces are NaN.
    """
    if len(snapshots) != 3:
        raise PreconditionError("residual needs exactly three consecutive snapshots")
    first, middle, last = snapshots
    for other in (middle, last):
        if not first.grid.same_nodes(other.grid):
            raise GridMismatchError("residual snapshots live on different grids")
    dt1, dt2 = middle.time - first.time, last.time - middle.time
    if dt1 <= 0 or abs(dt1 - dt2) > 1e-9 * max(abs(dt1), 1.0):
        raise PreconditionError(f"snapshots not equally spaced: {dt1:.6g} vs {dt2:.6g}")

    grid = middle.grid
    operator = operator or assemble_operator(medium, grid)
    reaction = FrozenReaction(medium, grid.points())
    u = middle.flat
    value = (last.flat - first.flat) / (dt1 + dt2)
    value = value - operator.matrix @ u - reaction.value(u)
    value[boundary_ring(grid)] = np.nan
    return Field(grid, value, middle.time)


def check_comparison(
    medium: PeriodicMedium,
    u0_low: Field,
    u0_high: Field,
    config: SolverConfig,
    slack: float = 1e-10,
) -> ComparisonReport:
    """Evolve an ordered pair together and track the smallest gap."""
    if not u0_low.grid.same_nodes(u0_high.grid):
        raise GridMismatchError("comparison pair lives on different grids")
    low, high = u0_low.flat, u0_high.flat
    if np.any(low > high):
        raise PreconditionError("comparison pair is not ordered")

    stepper = Stepper(medium, u0_low.grid, config)
    n_steps = max(1, math.ceil(config.end_time / stepper.dt - 1e-9))
    dt = config.end_time / n_steps
    values = np.stack([low, high], axis=1)
    min_gap = float((high - low).min())
    time_of_min = u0_low.time
    t = u0_low.time
    fault = None
    taken = 0
    try:
        for n in range(1, n_steps + 1):
            values = stepper.advance(values, t, dt)
            t = u0_low.time + n * dt
            taken = n
            gap = float((values[:, 1] - values[:, 0]).min())
            if gap < min_gap:
                min_gap, time_of_min = gap, t
    except DivergenceError as e:
        logger.warning(f"Comparison run diverged: {e}")
        fault = str(e)

    passed = fault is None and min_gap >= -slack
    if not passed:
        logger.warning(
            f"Comparison failed: min gap {min_gap:.3e} at t={time_of_min:.4g}"
        )
    return ComparisonReport(
        passed=passed,
        min_gap=min_gap,
        time_of_min=time_of_min,
        steps=taken,
        dt=dt,
        slack=slack,
        fault=fault,
    )
