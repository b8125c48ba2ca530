import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import BSpline, make_interp_spline
from scipy.optimize import brentq, isotonic_regression
from scipy.special import expit
from scipy.stats import linregress

from rdfront.core.errors import (
    PreconditionError,
    ProfileError,
    TruncationError,
)
from rdfront.models.front import (
    DecayFit,
    FrontConfig,
    FrontOutcome,
    InteriorBounds,
    ProfileTable,
    PulsatingFront,
    SpeedEstimate,
)
from rdfront.models.grid import AxisBoundary, Field, Grid, SolverConfig, Trajectory
from rdfront.models.medium import PeriodicMedium
from rdfront.services.medium_service import constant_diffusion
from rdfront.services.solver_service import Stepper

logger = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)


# closed-form homogeneous fronts


def closed_form_speed(theta: float, A: np.ndarray, e: np.ndarray) -> float:
    """(1 - 2 theta) sqrt(e.A.e)/sqrt(2) for the cubic with constant theta and A."""
    e = np.asarray(e, dtype=float)
    return (1.0 - 2.0 * theta) * math.sqrt(float(e @ A @ e)) / SQRT2


def closed_form_profile(xi, A: np.ndarray, e: np.ndarray) -> np.ndarray:
    e = np.asarray(e, dtype=float)
    width = SQRT2 * math.sqrt(float(e @ A @ e))
    return expit(-np.asarray(xi, dtype=float) / width)


def closed_form_front(
    theta: float,
    A: np.ndarray,
    e: Sequence[float],
    periods: Optional[Sequence[float]] = None,
    xi_half_width: float = 30.0,
    step: float = 0.02,
    normalize: bool = True,
) -> PulsatingFront:
    """Tabulated analytic front U(xi) = 1/(1 + exp(xi/sqrt(2 e.A.e)))."""
    e = np.asarray(e, dtype=float)
    e = e / np.linalg.norm(e)
    dim = e.shape[0]
    periods = tuple(periods) if periods is not None else (1.0,) * dim
    count = int(round(2 * xi_half_width / step)) + 1
    xi = np.linspace(-xi_half_width, xi_half_width, count)
    table = ProfileTable(
        xi=xi,
        values=closed_form_profile(xi, A, e)[:, None],
        cell_shape=(1,) * dim,
        cell_spacing=periods,
    )
    front = PulsatingFront(
        direction=e,
        speed=closed_form_speed(theta, A, e),
        stderr=0.0,
        outcome=FrontOutcome.CONVERGED,
        periods=periods,
        table=table,
        diagnostics={"closed_form": 1.0},
    )
    return normalize_shift(front) if normalize else front


# lattice geometry


def lattice_vector(
    e: Sequence[float], periods: Sequence[float], max_denominator: int = 6
) -> Tuple[np.ndarray, float]:
    """Shortest lattice vector (m_k L_k) most nearly orthogonal to e (2-D).

    Returns the vector and the angle by which it misses orthogonality.
    """
    e = np.asarray(e, dtype=float)
    L = np.asarray(periods, dtype=float)
    best, best_key = None, None
    for m0 in range(-max_denominator, max_denominator + 1):
        for m1 in range(0, max_denominator + 1):
            if (m0, m1) == (0, 0) or (m1 == 0 and m0 < 0):
                continue
            if math.gcd(abs(m0), m1) != 1:
                continue
            v = np.array([m0 * L[0], m1 * L[1]])
            norm = float(np.linalg.norm(v))
            miss = abs(float(v @ e)) / norm
            key = (round(miss, 12), norm)
            if best_key is None or key < best_key:
                best, best_key = v, key
    return best, math.asin(min(1.0, best_key[0]))


def commensurate_directions(
    periods: Sequence[float],
    max_denominator: int = 6,
    arc: Tuple[float, float] = (0.0, 2 * math.pi),
) -> np.ndarray:
    """Unit directions in ``arc`` that admit an exactly orthogonal lattice vector."""
    L = np.asarray(periods, dtype=float)
    angles = set()
    for m0 in range(-max_denominator, max_denominator + 1):
        for m1 in range(-max_denominator, max_denominator + 1):
            if (m0, m1) == (0, 0) or math.gcd(abs(m0), abs(m1)) != 1:
                continue
            v = np.array([m0 * L[0], m1 * L[1]])
            for normal in (np.array([v[1], -v[0]]), np.array([-v[1], v[0]])):
                beta = math.atan2(normal[1], normal[0]) % (2 * math.pi)
                if arc[0] - 1e-12 <= beta <= arc[1] + 1e-12:
                    angles.add(round(beta, 12))
    beta = np.array(sorted(angles))
    return np.stack([np.cos(beta), np.sin(beta)], axis=1)


# strip runs


@dataclass
class Strip:
    """Co-moving box for one direction: axis ``a`` clamped, the rest periodic."""

    grid: Grid
    medium: PeriodicMedium
    direction: np.ndarray
    axis: int
    nodes_per_period: int
    period: float
    behind_low: bool
    cell: Optional[Tuple[int, ...]]
    lattice: Optional[np.ndarray] = None
    direction_error: float = 0.0


def planar_reduction(medium: PeriodicMedium, e: np.ndarray) -> PeriodicMedium:
    """One-dimensional medium along e for a spatially constant medium."""
    A = constant_diffusion(medium)
    if A is None or not medium.homogeneous:
        raise PreconditionError("planar reduction needs a homogeneous medium")
    d = float(e @ A @ e)
    embed = np.asarray(e, dtype=float)[None, :]

    def lift(x):
        return np.asarray(x, dtype=float)[:, :1] * embed

    theta_field = None
    if medium.theta_field is not None:
        theta_field = lambda x: medium.theta_field(lift(x))  # noqa: E731
    return PeriodicMedium(
        dim=1,
        periods=(1.0,),
        diffusion=lambda x: np.full((len(x), 1, 1), d),
        reaction=lambda x, u: medium.reaction(lift(x), u),
        reaction_du=lambda x, u: medium.reaction_du(lift(x), u),
        kappa=medium.kappa,
        sigma=medium.sigma,
        lambda_bounds=(d, d),
        name=f"{medium.name}|planar",
        homogeneous=True,
        theta_field=theta_field,
        du_range=medium.du_range,
        reaction_max=medium.reaction_max,
        params=dict(medium.params),
    )


def build_strip(medium: PeriodicMedium, e: np.ndarray, config: FrontConfig) -> Strip:
    e = np.asarray(e, dtype=float)
    e = e / np.linalg.norm(e)
    margin = 12.0

    if medium.homogeneous and constant_diffusion(medium) is not None:
        reduced = planar_reduction(medium, e)
        k = max(1, int(math.ceil(1.0 / config.h - 1e-9)))
        h = 1.0 / k
        periods = max(int(math.ceil(config.strip_length)), 2 * int(margin))
        grid = Grid((0.0,), (h,), (periods * k + 1,), (AxisBoundary.clamped(),))
        return Strip(grid, reduced, np.array([1.0]), 0, k, 1.0, True, None)

    if medium.dim == 1:
        L = medium.periods[0]
        k = max(1, int(math.ceil(L / config.h - 1e-9)))
        periods = int(math.ceil(max(config.strip_length, 2 * margin) / L))
        grid = Grid((0.0,), (L / k,), (periods * k + 1,), (AxisBoundary.clamped(),))
        direction = np.array([1.0 if e[0] >= 0 else -1.0])
        return Strip(grid, medium, direction, 0, k, L, e[0] >= 0, (k,))

    if medium.dim != 2:
        raise PreconditionError("strip runs in heterogeneous media support N <= 2")

    a = int(np.argmax(np.abs(e)))
    b = 1 - a
    v, miss = lattice_vector(e, medium.periods, config.max_denominator)
    if v[b] < 0:
        v = -v
    effective = np.array([v[1], -v[0]]) / np.linalg.norm(v)
    if effective @ e < 0:
        effective = -effective

    L_a, L_b = medium.periods[a], medium.periods[b]
    k_a = max(1, int(math.ceil(L_a / config.h - 1e-9)))
    k_b = max(1, int(math.ceil(L_b / config.h - 1e-9)))
    h_a, h_b = L_a / k_a, L_b / k_b
    width = float(v[b])
    n_b = int(round(width / h_b))
    shift = int(round(v[a] / h_a))

    tilt = width * abs(effective[b]) / abs(effective[a])
    length = max(config.strip_length, 2 * (tilt + 2 * L_a + margin))
    n_periods = int(math.ceil(length / L_a))
    shape = [0, 0]
    spacing = [0.0, 0.0]
    boundaries: List[AxisBoundary] = [AxisBoundary.clamped(), AxisBoundary.clamped()]
    shape[a], shape[b] = n_periods * k_a + 1, n_b
    spacing[a], spacing[b] = h_a, h_b
    boundaries[b] = AxisBoundary.periodic(shift_axis=a, shift=shift)
    grid = Grid((0.0, 0.0), tuple(spacing), tuple(shape), tuple(boundaries))
    if miss > 1e-12:
        logger.warning(
            f"Direction {e.round(6).tolist()} not lattice commensurate within "
            f"denominator {config.max_denominator}; using {effective.round(6).tolist()}"
            f" (angular error {miss:.3e})"
        )
    return Strip(
        grid=grid,
        medium=medium,
        direction=effective,
        axis=a,
        nodes_per_period=k_a,
        period=L_a,
        behind_low=bool(effective[a] > 0),
        cell=(k_a, k_b) if a == 0 else (k_b, k_a),
        lattice=v,
        direction_error=float(miss),
    )


def _lines_along(values: np.ndarray, axis: int) -> np.ndarray:
    moved = np.moveaxis(values, axis, 0)
    return moved.reshape(moved.shape[0], -1)


def level_crossings(snapshot: Field, e: np.ndarray, level: float = 0.5) -> np.ndarray:
    """x.e of the ``level`` crossing on every grid line along argmax|e|."""
    grid = snapshot.grid
    a = int(np.argmax(np.abs(e)))
    lines = _lines_along(snapshot.values, a) - level
    sign = np.signbit(lines)
    change = sign[:-1] != sign[1:]
    found = change.any(axis=0)
    if not found.all():
        missing = int(np.flatnonzero(~found)[0])
        logger.error(
            f"No u={level} crossing on line {missing} at t={snapshot.time:.4g}"
        )
        raise TruncationError(
            f"level set u={level} left the box at t={snapshot.time:.4g}; "
            "enlarge the domain"
        )
    k = np.argmax(change, axis=0)
    cols = np.arange(lines.shape[1])
    lo, hi = lines[k, cols], lines[k + 1, cols]
    frac = lo / (lo - hi)
    x_a = grid.lower[a] + (k + frac) * grid.spacing[a]

    other = [j for j in range(grid.dim) if j != a]
    position = x_a * e[a]
    if other:
        mesh = np.meshgrid(*[grid.axis(j) for j in other], indexing="ij")
        for j, coords in zip(other, mesh):
            position = position + coords.ravel() * e[j]
    return position


def front_position(snapshot: Field, e: np.ndarray, level: float = 0.5) -> float:
    return float(np.mean(level_crossings(snapshot, e, level)))


def measure_speed(
    trajectory: Trajectory,
    e: Sequence[float],
    transient_fraction: float = 0.25,
    t_start: Optional[float] = None,
    min_snapshots: int = 10,
) -> SpeedEstimate:
    """Least-squares slope of the mean u = 1/2 position along e."""
    e = np.asarray(e, dtype=float)
    e = e / np.linalg.norm(e)
    times = trajectory.times
    if t_start is None:
        t_start = times[0] + transient_fraction * (times[-1] - times[0])
    keep = times >= t_start - 1e-12
    if keep.sum() < min_snapshots:
        raise PreconditionError(
            f"need {min_snapshots} snapshots after t={t_start:.4g}, have {keep.sum()}"
        )
    selected = [s for s, k in zip(trajectory, keep) if k]
    positions = np.array([front_position(s, e) for s in selected])
    fit = linregress(times[keep], positions)
    return SpeedEstimate(
        speed=float(fit.slope),
        stderr=float(fit.stderr),
        intercept=float(fit.intercept),
        times=times[keep],
        positions=positions,
    )


def _initial_strip(strip: Strip, offset: float) -> np.ndarray:
    points = strip.grid.points()
    along = points @ strip.direction
    lo, hi = along.min(), along.max()
    x0 = lo + (hi - lo) / 3.0 + offset
    values = expit(-(along - x0) / SQRT2)
    faces = _face_mask(strip)
    values[faces == 1] = 1.0
    values[faces == 2] = 0.0
    return values


def _face_mask(strip: Strip) -> np.ndarray:
    """0 inside, 1 on the face behind the front, 2 on the face ahead."""
    grid = strip.grid
    idx = np.indices(grid.shape).reshape(grid.dim, -1).T[:, strip.axis]
    last = grid.shape[strip.axis] - 1
    low, high = (1, 2) if strip.behind_low else (2, 1)
    mask = np.zeros(grid.size, dtype=int)
    mask[idx == 0] = low
    mask[idx == last] = high
    return mask


def _strip_boundary(strip: Strip):
    behind_low = strip.behind_low
    a = strip.axis
    grid = strip.grid
    middle = grid.lower[a] + 0.5 * (grid.shape[a] - 1) * grid.spacing[a]

    def boundary(t, points):
        low_side = points[:, a] < middle
        return np.where(low_side == behind_low, 1.0, 0.0)

    return boundary


def _remap(
    values: np.ndarray, strip: Strip, local_position: float
) -> Tuple[np.ndarray, int]:
    """Roll by whole periods so the front returns near the strip middle."""
    grid = strip.grid
    a = strip.axis
    half = 0.5 * (grid.shape[a] - 1) * grid.spacing[a]
    transverse = sum(
        float(grid.axis(j).mean()) * strip.direction[j]
        for j in range(grid.dim)
        if j != a
    )
    drift = (local_position - transverse) / strip.direction[a] - half
    periods = int(math.copysign(abs(drift) // strip.period, drift))
    if periods == 0:
        return values, 0
    nodes = periods * strip.nodes_per_period
    arr = values.reshape(grid.shape)
    rolled = np.roll(arr, -nodes, axis=a)
    index = [slice(None)] * grid.dim
    if nodes > 0:
        index[a] = slice(grid.shape[a] - nodes, None)
        edge = np.take(arr, [grid.shape[a] - 1], axis=a)
    else:
        index[a] = slice(0, -nodes)
        edge = np.take(arr, [0], axis=a)
    rolled[tuple(index)] = edge
    return rolled.reshape(-1), periods


def _window_slopes(times, positions, t_now, config: FrontConfig, max_period: float):
    start = config.transient_fraction * t_now
    early = times >= start - 1e-12
    if early.sum() < config.window:
        return None
    rough = linregress(times[early], positions[early]).slope
    duration = config.window * config.snapshot_every
    if abs(rough) >= config.near_stationary:
        duration = max(duration, 2.0 * max_period / abs(rough))
    first = t_now - 3 * duration
    if first < start - 1e-12:
        return None
    slopes, errors = [], []
    for w in range(3):
        lo = first + w * duration
        sel = (times >= lo - 1e-9) & (times <= lo + duration + 1e-9)
        if sel.sum() < 3:
            return None
        fit = linregress(times[sel], positions[sel])
        slopes.append(fit.slope)
        errors.append(fit.stderr)
    return np.array(slopes), np.array(errors), first


def is_stationary(slopes: np.ndarray, errors: np.ndarray, config: FrontConfig) -> bool:
    c = float(np.mean(slopes))
    spread = float(slopes.max() - slopes.min())
    pooled = float(np.sqrt(np.mean(errors**2)))
    if spread <= config.stationary_rtol * abs(c):
        return True
    if spread <= config.stationary_stderr_factor * pooled:
        return True
    return abs(c) < config.near_stationary and spread < config.near_stationary


def run_strip(
    medium: PeriodicMedium,
    e: Sequence[float],
    config: FrontConfig,
    initial_offset: float = 0.0,
):
    """Evolve a smoothed step on a co-moving strip until the speed settles.

    Returns the strip, the trajectory (grids translated to absolute
    coordinates), the start of the stationary window or None.
    """
    strip = build_strip(medium, np.asarray(e, dtype=float), config)
    solver_config = SolverConfig(
        dt=config.dt,
        end_time=config.t_max,
        snapshot_every=config.snapshot_every,
        boundary=_strip_boundary(strip),
    )
    stepper = Stepper(strip.medium, strip.grid, solver_config)
    steps = max(1, int(math.ceil(config.snapshot_every / stepper.dt - 1e-9)))
    dt = config.snapshot_every / steps
    max_period = max(strip.medium.periods)

    values = _initial_strip(strip, initial_offset)
    offset = 0.0
    trajectory = Trajectory(meta={"dt": dt, "direction": strip.direction.tolist()})
    trajectory.append(Field(strip.grid, values.copy(), 0.0))
    times, positions = [0.0], [front_position(trajectory[0], strip.direction)]
    stationary_from = None
    n_snap = int(math.ceil(config.t_max / config.snapshot_every - 1e-9))
    remaps = 0

    for j in range(1, n_snap + 1):
        t0 = (j - 1) * config.snapshot_every
        for n in range(steps):
            values = stepper.advance(values, t0 + n * dt, dt)
        t = j * config.snapshot_every

        local = Field(strip.grid, values, t)
        values, periods = _remap(values, strip, front_position(local, strip.direction))
        if periods:
            offset += periods * strip.period
            remaps += 1
        grid = strip.grid.translated(strip.axis, offset)
        snapshot = Field(grid, values.copy(), t)
        trajectory.append(snapshot)
        times.append(t)
        positions.append(front_position(snapshot, strip.direction))

        if t >= config.t_min:
            window = _window_slopes(
                np.array(times), np.array(positions), t, config, max_period
            )
            if window is not None and is_stationary(window[0], window[1], config):
                stationary_from = window[2]
                break

    trajectory.meta.update(remaps=remaps, final_time=times[-1])
    return strip, trajectory, stationary_from


# profile tables


def extract_profile(
    trajectory: Trajectory,
    e: Sequence[float],
    c: float,
    config: Optional[FrontConfig] = None,
    cell: Optional[Tuple[int, ...]] = None,
    t_start: Optional[float] = None,
    origin: float = 0.0,
    clamped_axis: Optional[int] = None,
) -> ProfileTable:
    """Bin u(t_k, x) by (xi = x.e - c t_k - origin, x mod L) and average.

    ``cell`` gives nodes per period on each axis; None collapses the cell to
    a single column.
    """
    config = config or FrontConfig()
    e = np.asarray(e, dtype=float)
    e = e / np.linalg.norm(e)
    grid0 = trajectory[0].grid
    width = config.bin_factor * min(grid0.spacing)
    half = config.xi_half_width
    n_bins = int(math.ceil(2 * half / width))
    columns = int(np.prod(cell)) if cell else 1
    sums = np.zeros(n_bins * columns)
    counts = np.zeros(n_bins * columns)

    a = clamped_axis if clamped_axis is not None else int(np.argmax(np.abs(e)))
    idx_a = np.indices(grid0.shape).reshape(grid0.dim, -1).T[:, a]
    distance = np.minimum(idx_a, grid0.shape[a] - 1 - idx_a) * grid0.spacing[a]
    interior = distance >= config.end_margin

    if t_start is None:
        times = trajectory.times
        t_start = times[0] + config.transient_fraction * (times[-1] - times[0])

    used = 0
    for snapshot in trajectory:
        if snapshot.time < t_start - 1e-12:
            continue
        points = snapshot.grid.points()
        xi = points @ e - c * snapshot.time - origin
        keep = interior & (np.abs(xi) < half)
        bins = np.floor((xi[keep] + half) / width).astype(int)
        bins = np.clip(bins, 0, n_bins - 1)
        if cell:
            node = np.rint(points[keep] / np.asarray(snapshot.grid.spacing)).astype(int)
            node = np.mod(node, np.asarray(cell))
            column = np.ravel_multi_index(node.T, cell)
        else:
            column = np.zeros(bins.size, dtype=int)
        flat = bins * columns + column
        sums += np.bincount(flat, weights=snapshot.flat[keep], minlength=sums.size)
        counts += np.bincount(flat, minlength=counts.size)
        used += 1
    if used == 0:
        raise ProfileError("no snapshots after the transient to bin")

    sums = sums.reshape(n_bins, columns)
    counts = counts.reshape(n_bins, columns)
    centres = -half + (np.arange(n_bins) + 0.5) * width

    covered = counts > 0
    rows_any = covered.all(axis=1)
    if not rows_any.any():
        raise ProfileError("no xi bin is covered in every cell column")
    first = int(np.argmax(rows_any))
    last = int(n_bins - 1 - np.argmax(rows_any[::-1]))
    span = slice(first, last + 1)
    sums, counts, centres = sums[span], counts[span], centres[span]
    values = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)

    filled = 0
    gaps = []
    for m in range(columns):
        empty = np.flatnonzero(counts[:, m] == 0)
        if empty.size == 0:
            continue
        runs = np.split(empty, np.flatnonzero(np.diff(empty) > 1) + 1)
        for run in runs:
            if run.size > config.max_gap_bins:
                gaps.append((float(centres[run[0]]), float(centres[run[-1]]), m))
        good = counts[:, m] > 0
        values[~good, m] = np.interp(centres[~good], centres[good], values[good, m])
        filled += empty.size
    if gaps:
        listing = ", ".join(
            f"[{lo:.3f}, {hi:.3f}] in column {m}" for lo, hi, m in gaps[:8]
        )
        logger.error(f"Profile coverage gaps: {listing}")
        raise ProfileError(f"insufficient bin coverage, empty xi-ranges: {listing}")

    increments = np.diff(values, axis=0)
    violation = float(max(0.0, increments.max(initial=0.0)))
    if violation > 0.0:
        weights = counts.astype(float)
        for m in range(columns):
            if np.any(increments[:, m] > 0):
                values[:, m] = isotonic_regression(
                    values[:, m], weights=weights[:, m], increasing=False
                ).x
    monotonized = violation > config.isotonic_threshold
    if monotonized:
        logger.warning(
            f"Binned profile violated monotonicity by {violation:.3e}; "
            "isotonic projection applied"
        )

    if cell:
        cell_shape, spacing = tuple(cell), tuple(grid0.spacing)
    else:
        cell_shape = (1,) * grid0.dim
        spacing = tuple(float(n * h) for n, h in zip(grid0.shape, grid0.spacing))
    return ProfileTable(
        xi=centres,
        values=np.clip(values, 0.0, 1.0),
        cell_shape=cell_shape,
        cell_spacing=spacing,
        filled_bins=int(filled),
        monotonized=monotonized,
        max_violation=violation,
    )


def _tail_mass(xi: np.ndarray, density: np.ndarray, s: float) -> float:
    """Trapezoid integral of ``density`` over [s, xi_max]."""
    if s >= xi[-1]:
        return 0.0
    k = int(np.searchsorted(xi, s, side="right"))
    start = float(np.interp(s, xi, density))
    nodes = np.concatenate([[s], xi[k:]])
    values = np.concatenate([[start], density[k:]])
    return float(np.trapezoid(values, nodes))


def normalize_shift(front: PulsatingFront) -> PulsatingFront:
    """Shift xi so that the cell-integrated mass of U^2 over xi > 0 equals 1."""
    table = front.table
    if table is None:
        raise ProfileError("front has no profile table to normalize")
    xi = table.xi
    cell_volume = float(np.prod(front.periods))
    density = np.mean(table.values**2, axis=1)
    tail_hi = table.values[-1].max()
    tail_lo = 1.0 - table.values[0].min()
    if tail_hi > 1e-6 or tail_lo > 1e-6:
        logger.warning(
            f"Profile tails not resolved to 1e-6 "
            f"(ends {1 - tail_lo:.3e}, {tail_hi:.3e})"
        )

    def excess(s):
        return cell_volume * _tail_mass(xi, density, s) - 1.0

    if excess(xi[0]) < 0:
        logger.error("Normalization mass unreachable on the xi table")
        raise ProfileError(
            f"normalization mass {excess(xi[0]) + 1:.4g} < 1 on the table; "
            "extend the xi range"
        )
    s = brentq(excess, xi[0], xi[-1], xtol=1e-13, rtol=1e-15)
    shifted = ProfileTable(
        xi=xi - s,
        values=table.values,
        cell_shape=table.cell_shape,
        cell_spacing=table.cell_spacing,
        filled_bins=table.filled_bins,
        monotonized=table.monotonized,
        max_violation=table.max_violation,
    )
    return front.with_table(shifted, front.shift + s)


def _tail_fit(xi, D):
    if xi.size < 2:
        return float("nan"), float("nan"), 0.0
    fit = linregress(xi, np.log(D))
    return float(fit.slope), float(fit.intercept), float(fit.rvalue**2)


def estimate_decay(front: PulsatingFront, min_points: int = 5) -> DecayFit:
    """Log-linear fits of max_cell |dU/dxi| on both tails."""
    xi = front.table.xi
    U = front.table.values
    D = np.max(np.abs(np.gradient(U, xi, axis=0)), axis=1)
    mean = U.mean(axis=1)
    left = (mean > 0.95) & (D > 1e-10)
    right = (mean < 0.05) & (D > 1e-10)
    slope_l, _, r2_l = _tail_fit(xi[left], D[left])
    slope_r, _, r2_r = _tail_fit(xi[right], D[right])
    mu_left, mu_right = slope_l, -slope_r
    mu = float(np.nanmin([mu_left, mu_right]))
    C = float(np.max(D * np.exp(mu * np.abs(xi)))) if np.isfinite(mu) else float("nan")

    reasons = []
    if left.sum() < min_points or right.sum() < min_points:
        reasons.append(f"unresolved tail ({left.sum()} / {right.sum()} points)")
    if min(r2_l, r2_r) < 0.9:
        reasons.append(f"non-exponential tail (R^2 {r2_l:.3f} / {r2_r:.3f})")
    fit = DecayFit(
        mu=mu,
        C=C,
        mu_left=mu_left,
        mu_right=mu_right,
        r2_left=r2_l,
        r2_right=r2_r,
        flagged=bool(reasons),
        reason="; ".join(reasons),
    )
    if fit.flagged:
        logger.warning(f"Decay fit flagged: {fit.reason}")
    return fit


class ProfileEvaluator:
    """Cubic splines in xi for every cell column of a profile table.

    Outside the table U is extended by its limits 1 (behind) and 0 (ahead).
    """

    def __init__(self, front: PulsatingFront):
        self.front = front
        table = front.table
        self.xi = table.xi
        self.cell_shape = table.cell_shape
        self.cell_spacing = np.asarray(table.cell_spacing, dtype=float)
        self.columns = int(np.prod(table.cell_shape))
        spline = make_interp_spline(table.xi, table.values, k=3, axis=0)
        self._knots = spline.t
        self._coef = spline.c
        self._derivatives = {0: spline}
        self.tail_extensions = 0

    def column_of(self, points: np.ndarray) -> np.ndarray:
        if self.columns == 1:
            return np.zeros(len(points), dtype=int)
        node = np.rint(points / self.cell_spacing).astype(int)
        node = np.mod(node, np.asarray(self.cell_shape))
        return np.ravel_multi_index(node.T, self.cell_shape)

    def _spline(self, nu: int) -> BSpline:
        if nu not in self._derivatives:
            self._derivatives[nu] = self._derivatives[0].derivative(nu)
        return self._derivatives[nu]

    def __call__(self, xi, points: Optional[np.ndarray] = None, nu: int = 0):
        xi = np.asarray(xi, dtype=float)
        flat = xi.reshape(-1)
        if points is None:
            column = np.zeros(flat.size, dtype=int)
        else:
            column = self.column_of(np.atleast_2d(points))
            column = np.broadcast_to(column, flat.shape)
        out = np.empty(flat.size)
        below = flat < self.xi[0]
        above = flat > self.xi[-1]
        inside = ~(below | above)
        out[below] = 1.0 if nu == 0 else 0.0
        out[above] = 0.0
        outside = int(below.sum() + above.sum())
        if outside:
            self.tail_extensions += outside
            logger.debug(f"Extended {outside} profile evaluations by tail limits")
        spline = self._spline(nu)
        if self.columns == 1:
            out[inside] = spline(flat[inside])[..., 0]
        else:
            for m in np.unique(column[inside]):
                sel = inside & (column == m)
                piece = BSpline(spline.t, spline.c[:, m], spline.k, extrapolate=False)
                out[sel] = piece(flat[sel])
        return out.reshape(xi.shape)


def interior_bounds(
    front: PulsatingFront, R: float = 2.0, samples: int = 401
) -> InteriorBounds:
    """delta = min(U, 1-U) and r = min(-dU/dxi) over |xi| <= R and the cell."""
    xi = front.table.xi
    if R < 0 or -R < xi[0] or R > xi[-1]:
        raise PreconditionError(
            f"R={R} outside the profile table [{xi[0]:.3f}, {xi[-1]:.3f}]"
        )
    evaluator = ProfileEvaluator(front)
    grid = np.array([0.0]) if R == 0 else np.linspace(-R, R, samples)
    spline = evaluator._spline(0)
    derivative = evaluator._spline(1)
    U = np.atleast_2d(spline(grid)).reshape(grid.size, -1)
    dU = np.atleast_2d(derivative(grid)).reshape(grid.size, -1)
    delta = float(min(U.min(), (1.0 - U).min()))
    r = float((-dU).min())
    if r <= 0:
        logger.error(f"Profile not strictly decreasing on |xi| <= {R}: r={r:.3e}")
        raise ProfileError(
            f"monotonicity fault: min(-dU/dxi) = {r:.3e} on |xi| <= {R}"
        )
    return InteriorBounds(delta=delta, r=r, R=R)


def profile_residual(front: PulsatingFront, medium: PeriodicMedium) -> np.ndarray:
    """Travelling-wave operator applied to the table by central differences.

    sum_kl (e_k d_xi + d_k)(a_kl (e_l d_xi + d_l) U) + c dU/dxi + f(y, U);
    the two outermost xi rows are NaN.
    """
    table = front.table
    e = np.asarray(front.direction, dtype=float)
    xi = table.xi
    dim = len(table.cell_shape)
    shape = (xi.size,) + tuple(table.cell_shape)
    U = table.values.reshape(shape)
    spacing = np.asarray(table.cell_spacing, dtype=float)
    collapsed = int(np.prod(table.cell_shape)) == 1

    axes = [np.arange(n) * h for n, h in zip(table.cell_shape, spacing)]
    mesh = np.meshgrid(*axes, indexing="ij")
    points = np.stack([m.ravel() for m in mesh], axis=1)
    A = medium.diffusion(points).reshape(tuple(table.cell_shape) + (dim, dim))

    def d_xi(F):
        return np.gradient(F, xi, axis=0)

    def d_cell(F, k):
        if collapsed:
            return np.zeros_like(F)
        axis = k + 1
        return (np.roll(F, -1, axis=axis) - np.roll(F, 1, axis=axis)) / (2 * spacing[k])

    grads = [e[l] * d_xi(U) + d_cell(U, l) for l in range(dim)]
    total = np.zeros_like(U)
    for k in range(dim):
        flux = sum(A[..., k, l][None, ...] * grads[l] for l in range(dim))
        total += e[k] * d_xi(flux) + d_cell(flux, k)
    total += front.speed * d_xi(U)
    reaction = medium.reaction(
        np.tile(points, (xi.size, 1)), U.reshape(-1)
    ).reshape(shape)
    total += reaction
    out = total.reshape(xi.size, -1)
    out[:2] = np.nan
    out[-2:] = np.nan
    return out


def compute_front(
    medium: PeriodicMedium,
    e: Sequence[float],
    config: Optional[FrontConfig] = None,
    initial_offset: float = 0.0,
    bounds_radius: float = 2.0,
) -> PulsatingFront:
    """Pulsating front along e from a long strip run.

    Non-convergence and near-zero speeds are outcomes, not faults.
    """
    config = config or FrontConfig()
    e = np.asarray(e, dtype=float)
    e = e / np.linalg.norm(e)
    try:
        strip, trajectory, stationary_from = run_strip(
            medium, e, config, initial_offset
        )
    except Exception as exc:
        logger.error(f"Front run along {e.round(6).tolist()} failed: {exc}")
        raise

    commensurate = strip.direction_error <= 1e-12
    diagnostics = {
        "remaps": float(trajectory.meta.get("remaps", 0)),
        "final_time": float(trajectory.meta.get("final_time", 0.0)),
        "dt": float(trajectory.meta["dt"]),
        "h": float(min(strip.grid.spacing)),
    }
    front = PulsatingFront(
        direction=e,
        speed=float("nan"),
        stderr=float("nan"),
        outcome=FrontOutcome.NO_FRONT_DETECTED,
        periods=medium.periods,
        commensurate=commensurate,
        direction_error=strip.direction_error,
        lattice_vector=strip.lattice,
        diagnostics=diagnostics,
    )

    estimate = measure_speed(
        trajectory,
        strip.direction,
        t_start=stationary_from,
        transient_fraction=config.transient_fraction,
    )
    front.speed, front.stderr = estimate.speed, estimate.stderr
    if stationary_from is None:
        if abs(estimate.speed) < config.near_stationary:
            front.outcome = FrontOutcome.NEAR_STATIONARY
        logger.warning(
            f"No stationary regime along {e.round(4).tolist()} by t={config.t_max}: "
            f"c~{estimate.speed:.5f}"
        )
        return front
    if abs(estimate.speed) < config.near_stationary:
        front.outcome = FrontOutcome.NEAR_STATIONARY
        logger.info(f"Near-stationary front along {e.round(4).tolist()}")
        return front

    front.outcome = FrontOutcome.SPEED_ONLY
    logger.info(
        f"Front along {e.round(4).tolist()}: c={estimate.speed:.6f} "
        f"+/- {estimate.stderr:.2e}"
    )
    if not (config.want_profile and commensurate):
        return front
    if estimate.stderr >= 0.01 * abs(estimate.speed):
        logger.warning("Speed too noisy for profile extraction; speed only")
        return front

    table = extract_profile(
        trajectory,
        strip.direction,
        estimate.speed,
        config,
        cell=strip.cell,
        t_start=stationary_from,
        origin=estimate.intercept,
        clamped_axis=strip.axis,
    )
    if strip.cell is None:
        table.cell_shape = (1,) * medium.dim
        table.cell_spacing = tuple(medium.periods)
    front = front.with_table(table, 0.0)
    front.outcome = FrontOutcome.CONVERGED
    front = normalize_shift(front)
    front.decay = estimate_decay(front)
    try:
        front.bounds = interior_bounds(front, bounds_radius)
    except ProfileError as exc:
        logger.warning(f"Interior bounds unavailable: {exc}")
    return front
