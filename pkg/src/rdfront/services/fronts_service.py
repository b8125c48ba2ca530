import logging
import math
from dataclasses import dataclass, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from contourpy import contour_generator
from scipy.optimize import minimize_scalar
from scipy.spatial import cKDTree
from scipy.stats import linregress

from rdfront.core.errors import (
    GridMismatchError,
    PreconditionError,
    SandwichError,
    TruncationError,
)
from rdfront.models.assembly import (
    BoundFamily,
    CalibrationResult,
    CalibrationRow,
    ConstructionConfig,
    ConstructionReport,
    FrontAssembly,
    FrontBundle,
    MarginReport,
    MetricsReport,
    ResidualLattice,
    SqueezeReport,
    StabilityConfig,
    StabilityParams,
    StabilityReport,
    WindowSpec,
)
from rdfront.models.geometry import PolytopeSpec
from rdfront.models.grid import Field, Grid, SolverConfig, Trajectory
from rdfront.models.medium import PeriodicMedium
from rdfront.models.speed import ConditionReport, SpeedMap, Variant, Verdict
from rdfront.services.geometry_service import (
    contains,
    default_lambda,
    facet_distance,
    offset_apex,
    ridge_distance,
    shifted_polytope,
    surface_height,
)
from rdfront.services.pulsating_service import front_position
from rdfront.services.solver_service import (
    Operator,
    Stepper,
    assemble_operator,
    residual,
)
from rdfront.services.speedmap_service import (
    check_theorem_conditions,
    eval_g,
    speed_at,
)
from rdfront.storage import write_trajectory

logger = logging.getLogger(__name__)

EPSILON_FRACTIONS = (0.5, 0.25, 0.125)
ALPHA_FRACTIONS = (0.4, 0.2, 0.1, 0.05)
RESIDUAL_TOL = 1e-3
SANDWICH_TOL = 1e-8
H_FLOOR = 1e-8
DECREASE_TOL = 5e-4
SHIFT_SAMPLES = 21
STABILITY_KINDS = ("planar-mix", "clamped-super", "ridge-bump")

Evaluator = Callable[[float, np.ndarray], np.ndarray]


# assembly and analytic bounds


def build_assembly(
    medium: PeriodicMedium,
    poly: PolytopeSpec,
    speed_map: SpeedMap,
    family,
    variant: Variant = Variant.V,
    epsilon: Optional[float] = None,
    alpha: Optional[float] = None,
    conditions: Optional[ConditionReport] = None,
) -> FrontAssembly:
    """Bind medium, polytope, speed map and front family; c_hat = mean g(e_i)."""
    variant = Variant(variant)
    if conditions is not None and conditions.variant != variant:
        raise PreconditionError(
            f"condition report is for variant {conditions.variant.value}, "
            f"assembly wants {variant.value}"
        )
    if conditions is not None and math.isfinite(conditions.c_hat):
        c_hat = float(conditions.c_hat)
    else:
        c_hat = float(np.mean(eval_g(speed_map, poly.directions)))
    if c_hat <= 0:
        raise PreconditionError(f"c_hat = {c_hat:.4g} must be positive")
    epsilon = medium.sigma / 2 if epsilon is None else float(epsilon)
    if not 0 < epsilon <= medium.sigma / 2 + 1e-15:
        raise PreconditionError(
            f"epsilon = {epsilon:.4g} must lie in (0, sigma/2 = {medium.sigma / 2:.4g}]"
        )
    alpha = 0.2 * float(poly.s.min()) if alpha is None else float(alpha)
    if alpha <= 0:
        raise PreconditionError(f"alpha must be positive, got {alpha}")
    shifted = []
    if poly.n > 1:
        shifted = [
            shifted_polytope(poly, i, default_lambda(poly, i)) for i in range(poly.n)
        ]
    logger.info(
        f"Assembly {variant.value}: n={poly.n}, c_hat={c_hat:.6f}, "
        f"epsilon={epsilon:.4g}, alpha={alpha:.4g}, family={family.name}"
    )
    return FrontAssembly(
        medium=medium,
        polytope=poly,
        speed_map=speed_map,
        family=family,
        c_hat=c_hat,
        epsilon=epsilon,
        alpha=alpha,
        variant=variant,
        shifted=shifted,
        conditions=conditions,
    )


def facet_speeds(assembly: FrontAssembly) -> np.ndarray:
    return np.asarray(assembly.family.speed(assembly.polytope.directions), dtype=float)


def apex(assembly: FrontAssembly) -> np.ndarray:
    """Point p0 where every planar piece sits at its half level at t = 0."""
    poly = assembly.polytope
    levels = [assembly.family.half_level(e) for e in poly.directions]
    return offset_apex(poly, levels)


def planar_pieces(assembly: FrontAssembly, t: float, z: np.ndarray) -> np.ndarray:
    """U_{e_i}(z.e_i - c_{e_i} t, z) for every facet, shape (M, n)."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    speeds = facet_speeds(assembly)
    columns = []
    for e, c in zip(assembly.polytope.directions, speeds):
        columns.append(assembly.family.value(e, z @ e - c * t, z))
    return np.stack(columns, axis=1)


def eval_planar_mix(assembly: FrontAssembly, t: float, z) -> np.ndarray:
    pieces = planar_pieces(assembly, t, z)
    if assembly.variant == Variant.V:
        return pieces.max(axis=1)
    return pieces.min(axis=1)


def eval_curved_bound(
    assembly: FrontAssembly,
    t: float,
    z,
    family: BoundFamily = BoundFamily.SUPER_V,
    index: int = 0,
    alpha: Optional[float] = None,
    epsilon: Optional[float] = None,
) -> np.ndarray:
    """Curved sub- and supersolutions glued along the mollified surface.

    super_V and stab_super_W_i use the surface y = c_hat t + phi(alpha x)/alpha,
    sub_W and stab_sub_V_i its reflection y = c_hat t - phi(-alpha x)/alpha.
    The stab_* families live on the shifted polytope of facet ``index``.
    """
    family = BoundFamily(family)
    alpha = assembly.alpha if alpha is None else alpha
    epsilon = assembly.epsilon if epsilon is None else epsilon
    z = np.atleast_2d(np.asarray(z, dtype=float))
    poly = assembly.polytope
    surface = poly
    if family in (BoundFamily.STAB_SUB_V, BoundFamily.STAB_SUPER_W):
        if not assembly.shifted:
            raise PreconditionError("stability families need at least two facets")
        surface = assembly.shifted[index].polytope
    x = z @ poly.frame
    y = z @ poly.e0
    shift = assembly.c_hat * t

    if family in (BoundFamily.SUPER_V, BoundFamily.STAB_SUPER_W):
        ev = surface_height(surface, x, alpha)
        xi = (y - shift - ev.height) / ev.slope_factor
        U = assembly.family.value(ev.normal, xi, z)
        return np.minimum(U + epsilon * ev.h, 1.0)

    ev = surface_height(surface, -x, alpha)
    xi = (y - shift + ev.height) / ev.slope_factor
    U = assembly.family.value(ev.normal, xi, z)
    value = U - epsilon * ev.h
    if family == BoundFamily.SUB_W:
        return np.maximum(value, 0.0)
    return value


def _frame_lattice(poly: PolytopeSpec, span: float, count: int) -> np.ndarray:
    line = np.linspace(-span, span, count)
    d = poly.dim - 1
    if d == 1:
        return line[:, None]
    if d == 0:
        return np.zeros((1, 0))
    mesh = np.meshgrid(*([line] * d), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def verify_speed_margin(
    assembly: FrontAssembly,
    xs: Optional[np.ndarray] = None,
    span: float = 20.0,
    count: int = 401,
) -> MarginReport:
    """Min over the lattice of (c_hat e.e0 - c_e)/h for V, reversed for W.

    e.e0 equals 1/sqrt(1 + |grad phi|^2); points with h below 1e-8 are left out.
    """
    poly = assembly.polytope
    xs = _frame_lattice(poly, span, count) if xs is None else np.asarray(xs, float)
    xs = xs.reshape(len(xs), -1) if xs.size else xs
    if xs.size == 0 and poly.dim > 1:
        raise PreconditionError("empty sample lattice for the speed margin")
    if assembly.variant == Variant.V:
        ev = surface_height(poly, xs, assembly.alpha)
    else:
        ev = surface_height(poly, -xs, assembly.alpha)
    keep = ev.h >= H_FLOOR
    excluded = int((~keep).sum())
    if not np.any(keep):
        logger.info("Speed margin vacuous: no lattice point away from the facets")
        return MarginReport(
            variant=assembly.variant,
            min_ratio=math.inf,
            passed=True,
            count=0,
            excluded=excluded,
            resolution=assembly.speed_map.resolution,
        )
    normal = ev.normal[keep]
    c_e = speed_at(assembly.speed_map, normal)
    gap = assembly.c_hat / ev.slope_factor[keep] - c_e
    if assembly.variant == Variant.W:
        gap = -gap
    ratio = gap / ev.h[keep]
    min_ratio = float(ratio.min())
    passed = min_ratio > 0
    log = logger.info if passed else logger.warning
    log(
        f"Speed margin {assembly.variant.value}: min ratio {min_ratio:.4e} "
        f"over {int(keep.sum())} points ({excluded} excluded)"
    )
    return MarginReport(
        variant=assembly.variant,
        min_ratio=min_ratio,
        passed=passed,
        count=int(keep.sum()),
        excluded=excluded,
        resolution=assembly.speed_map.resolution,
    )


# residual lattices


def _frame_box(poly: PolytopeSpec, x0, x1, y0, y1, h: float) -> Grid:
    corners = np.array(
        [poly.frame[:, 0] * x + poly.e0 * y for x in (x0, x1) for y in (y0, y1)]
    )
    lower = corners.min(axis=0)
    upper = corners.max(axis=0)
    upper = lower + np.ceil((upper - lower) / h - 1e-9) * h
    return Grid.box(lower, upper, h)


def _main_family(variant: Variant) -> BoundFamily:
    return BoundFamily.SUPER_V if variant == Variant.V else BoundFamily.SUB_W


def _is_super(family: BoundFamily) -> bool:
    return family in (BoundFamily.SUPER_V, BoundFamily.STAB_SUPER_W)


def lattice_residuals(
    assembly: FrontAssembly,
    evaluator: Evaluator,
    lattice: ResidualLattice,
    lower_surface: bool = False,
    alpha: Optional[float] = None,
) -> np.ndarray:
    """Discrete residual u_t - div(A grad u) - f of ``evaluator`` on blocks
    that follow the (reflected, if ``lower_surface``) surface in the moving frame."""
    poly = assembly.polytope
    if poly.dim != 2:
        raise PreconditionError("residual lattices are two-dimensional")
    alpha = assembly.alpha if alpha is None else alpha
    half = lattice.block_width / 2
    centres = np.arange(-lattice.half_width + half, lattice.half_width, 2 * half)
    values = []
    for t in lattice.times:
        if lower_surface:
            heights = -surface_height(poly, -centres, alpha).height
        else:
            heights = surface_height(poly, centres, alpha).height
        for xc, hc in zip(centres, heights):
            yc = assembly.c_hat * t + hc
            grid = _frame_box(
                poly,
                xc - half,
                xc + half,
                yc - lattice.half_height,
                yc + lattice.half_height,
                lattice.h,
            )
            points = grid.points()
            snapshots = [
                Field(grid, evaluator(t + k * lattice.dt, points), t + k * lattice.dt)
                for k in (-1, 0, 1)
            ]
            r = residual(assembly.medium, snapshots).flat
            values.append(r[np.isfinite(r)])
    return np.concatenate(values) if values else np.zeros(0)


def _residual_extreme(family: BoundFamily, values: np.ndarray) -> float:
    return float(values.min()) if _is_super(family) else float(values.max())


def calibrate_eps_alpha(
    assembly: FrontAssembly, lattice: Optional[ResidualLattice] = None
) -> CalibrationResult:
    """Largest (epsilon, alpha) from the scan whose curved bound has a residual
    of the right sign within 1e-3 max|f|."""
    lattice = lattice or ResidualLattice()
    conditions = assembly.conditions or check_theorem_conditions(
        assembly.speed_map, assembly.polytope, assembly.variant
    )
    if not conditions.admissible:
        failing = [
            k for k, v in conditions.verdicts.items() if v.verdict != Verdict.PASS
        ]
        logger.error(f"Calibration refused: conditions {failing} do not pass")
        raise PreconditionError(
            f"conditions {failing} fail for variant {assembly.variant.value}; "
            "calibration needs an admissible assembly"
        )
    margin = verify_speed_margin(assembly)
    if not margin.passed:
        raise PreconditionError(
            f"speed margin {margin.min_ratio:.4e} is not positive; calibration refused"
        )

    medium = assembly.medium
    tol = RESIDUAL_TOL * medium.reaction_max
    family = _main_family(assembly.variant)
    lower = family == BoundFamily.SUB_W
    min_s = float(assembly.polytope.s.min())
    rows: List[CalibrationRow] = []
    chosen: Optional[Tuple[float, float]] = None
    best = -math.inf
    for eps in (medium.sigma * f for f in EPSILON_FRACTIONS):
        for alpha in (min_s * f for f in ALPHA_FRACTIONS):

            def bound(t, z, eps=eps, alpha=alpha):
                return eval_curved_bound(
                    assembly, t, z, family, alpha=alpha, epsilon=eps
                )

            values = lattice_residuals(assembly, bound, lattice, lower, alpha)
            extreme = _residual_extreme(family, values)
            signed = extreme + tol if _is_super(family) else tol - extreme
            passed = signed >= 0
            best = max(best, signed)
            rows.append(
                CalibrationRow(
                    epsilon=eps,
                    alpha=alpha,
                    family=family.value,
                    extreme=extreme,
                    passed=passed,
                )
            )
            logger.debug(
                f"Calibration eps={eps:.4g} alpha={alpha:.4g}: extreme {extreme:.3e}"
            )
            if passed and chosen is None:
                chosen = (eps, alpha)

    if chosen is None:
        logger.warning(f"No (epsilon, alpha) pair passed; best margin {best:.3e}")
        return CalibrationResult(passed=False, tol=tol, best_margin=best, rows=rows)
    logger.info(f"Calibrated epsilon={chosen[0]:.4g}, alpha={chosen[1]:.4g}")
    return CalibrationResult(
        passed=True,
        epsilon=chosen[0],
        alpha=chosen[1],
        tol=tol,
        best_margin=best,
        rows=rows,
    )


def apply_calibration(
    assembly: FrontAssembly, result: CalibrationResult
) -> FrontAssembly:
    if not result.passed:
        raise PreconditionError("calibration did not pass; nothing to apply")
    return replace(assembly, epsilon=result.epsilon, alpha=result.alpha)


# co-moving window


@dataclass(eq=False)
class CoMovingWindow:
    """Fixed grid that follows the frame moving at c_hat along e0.

    The frame advances in whole periods of the medium, so the coefficients at
    the nodes never change; ``offset`` is the accumulated translation along e0.
    """

    medium: PeriodicMedium
    e0: np.ndarray
    c_hat: float
    grid: Grid
    axis: int
    sign: int
    period: float
    nodes_per_period: int
    operator: Operator
    spec: WindowSpec
    offset: float = 0.0

    @classmethod
    def build(cls, assembly: FrontAssembly, spec: WindowSpec) -> "CoMovingWindow":
        poly = assembly.polytope
        if poly.dim != 2:
            raise PreconditionError("co-moving windows are two-dimensional")
        axis = int(np.argmax(np.abs(poly.e0)))
        if abs(abs(poly.e0[axis]) - 1.0) > 1e-12:
            raise PreconditionError(
                f"e0 = {poly.e0.tolist()} must be a coordinate axis so that the "
                "window can advance by whole periods"
            )
        other = 1 - axis
        sign = 1 if poly.e0[axis] > 0 else -1
        periods = assembly.medium.periods
        k_y = max(1, int(math.ceil(periods[axis] / spec.h - 1e-9)))
        k_x = max(1, int(math.ceil(periods[other] / spec.h - 1e-9)))
        h_y, h_x = periods[axis] / k_y, periods[other] / k_x
        n_x = int(math.ceil(2 * spec.half_width / h_x))
        n_y = int(math.ceil((spec.below + spec.above) / h_y))
        lower, spacing, shape = [0.0, 0.0], [0.0, 0.0], [0, 0]
        lower[other] = -n_x * h_x / 2
        lower[axis] = -spec.below if sign > 0 else -(n_y * h_y - spec.below)
        spacing[other], spacing[axis] = h_x, h_y
        shape[other], shape[axis] = n_x + 1, n_y + 1
        grid = Grid.box(
            lower,
            [lo + (n - 1) * h for lo, n, h in zip(lower, shape, spacing)],
            spacing,
        )
        operator = assemble_operator(assembly.medium, grid)
        logger.info(
            f"Co-moving window {grid.shape} with spacing "
            f"({spacing[0]:.4g}, {spacing[1]:.4g})"
        )
        return cls(
            medium=assembly.medium,
            e0=poly.e0,
            c_hat=assembly.c_hat,
            grid=grid,
            axis=axis,
            sign=sign,
            period=periods[axis],
            nodes_per_period=k_y,
            operator=operator,
            spec=spec,
        )

    def place(self, t: float) -> None:
        self.offset = self.period * round(self.c_hat * t / self.period)

    def points(self) -> np.ndarray:
        return self.grid.points() + self.offset * self.e0

    def stepper(self, boundary, end_time: float) -> Stepper:
        config = SolverConfig(dt=self.spec.dt, end_time=end_time, boundary=boundary)
        stepper = Stepper(self.medium, self.grid, config, operator=self.operator)
        stepper.offset = self.offset * self.e0
        return stepper

    def shift_rows(self, values: np.ndarray, periods: int, fill=np.nan) -> np.ndarray:
        """Values re-indexed after the window moved ``periods`` periods ahead."""
        if periods == 0:
            return values
        k = periods * self.nodes_per_period * self.sign
        trailing = values.shape[1:]
        arr = values.reshape(self.grid.shape + trailing)
        out = np.roll(arr, -k, axis=self.axis)
        index = [slice(None)] * arr.ndim
        n = self.grid.shape[self.axis]
        if abs(k) >= n:
            index[self.axis] = slice(None)
        elif k > 0:
            index[self.axis] = slice(n - k, None)
        else:
            index[self.axis] = slice(None, -k)
        if callable(fill):
            fresh = np.asarray(fill(), dtype=float)
            fresh = fresh.reshape(self.grid.shape + fresh.shape[1:])
            if fresh.ndim < arr.ndim:
                fresh = fresh[..., None]
            out[tuple(index)] = np.broadcast_to(fresh, arr.shape)[tuple(index)]
        else:
            out[tuple(index)] = fill
        return out.reshape(values.shape)

    def follow(self, values: np.ndarray, t: float, fill: Evaluator):
        moved = 0
        while self.c_hat * t - self.offset >= self.period / 2:
            self.offset += self.period
            moved += 1
        if not moved:
            return values, 0
        values = self.shift_rows(values, moved, lambda: fill(t, self.points()))
        return values, moved

    def field(self, values: np.ndarray, t: float) -> Field:
        grid = self.grid.translated(self.axis, self.offset * self.e0[self.axis])
        return Field(grid, np.array(values, copy=True), t)

    def evolve(
        self,
        values: np.ndarray,
        t0: float,
        t1: float,
        boundary: Evaluator,
        check: Optional[Callable] = None,
        record: Optional[Callable] = None,
    ) -> np.ndarray:
        """March from t0 to t1; ``check(t, old, new)`` sees each step before the
        window moves, ``record(step, t, values)`` after."""
        stepper = self.stepper(boundary, t1 - t0)
        n = max(1, int(math.ceil((t1 - t0) / stepper.dt - 1e-9)))
        dt = (t1 - t0) / n
        t = t0
        for step in range(1, n + 1):
            new = stepper.advance(values, t, dt)
            t = t0 + step * dt
            if check is not None:
                check(t, values, new)
            values, moved = self.follow(new, t, boundary)
            if moved:
                stepper.offset = self.offset * self.e0
            if record is not None:
                record(step, t, values, dt)
        return values


def _every(step: int, dt: float, cadence: float) -> bool:
    stride = max(1, int(round(cadence / dt)))
    return step % stride == 0


def _interfaces(snapshot: Field) -> List[np.ndarray]:
    grid = snapshot.grid
    generator = contour_generator(
        x=grid.axis(0), y=grid.axis(1), z=snapshot.values.T
    )
    return [np.asarray(line) for line in generator.lines(0.5)]


@dataclass
class _Run:
    values: np.ndarray
    snapshots: List[Field]
    min_lower_gap: float
    min_planar_gap: float
    min_upper_gap: float
    min_increment: float


def _construction_run(
    assembly: FrontAssembly,
    window: CoMovingWindow,
    T: float,
    opposite: bool,
    threshold: float,
    slack: float,
    monotonicity_slack: float,
) -> _Run:
    """One pass from -T to 0 with the planar pieces as extra columns.

    The curved bound is checked at every snapshot and at t = 0; crossing it by
    more than ``threshold`` is a fault, smaller gaps are only recorded.
    """
    v_family = assembly.variant == Variant.V
    bound_family = _main_family(assembly.variant)

    def data(t, z):
        pieces = planar_pieces(assembly, t, z)
        main = pieces.max(axis=1) if v_family else pieces.min(axis=1)
        return np.column_stack([main, pieces])

    window.place(-T)
    values = data(-T, window.points())
    if opposite:
        start = eval_curved_bound(assembly, -T, window.points(), bound_family)
        values[:, 0] = np.clip(start, 0.0, 1.0)

    stats = {
        "lower": math.inf,
        "planar": math.inf,
        "upper": math.inf,
        "increment": math.inf,
    }
    snapshots: List[Field] = []

    def check(t, old, new):
        main = new[:, 0]
        if v_family:
            lower_gap = float((main - new[:, 1:].max(axis=1)).min())
        else:
            lower_gap = float((new[:, 1:].min(axis=1) - main).min())
        stats["lower"] = min(stats["lower"], lower_gap)
        if lower_gap < -slack:
            logger.error(f"Discrete sandwich broken at t={t:.4g}: {lower_gap:.3e}")
            raise SandwichError(
                f"solution crossed the planar bound by {-lower_gap:.3e} at t={t:.4g}"
            )
        if not opposite:
            increment = float((main - old[:, 0]).min())
            stats["increment"] = min(stats["increment"], increment)
            if increment < -monotonicity_slack:
                logger.warning(
                    f"Time monotonicity lost at t={t:.4g}: increment {increment:.3e}"
                )

    def measure(t, main):
        z = window.points()
        mix = eval_planar_mix(assembly, t, z)
        bound = eval_curved_bound(assembly, t, z, bound_family)
        if v_family:
            planar_gap = float((main - mix).min())
            gap = float((bound - main).min())
        else:
            planar_gap = float((mix - main).min())
            gap = float((main - bound).min())
        stats["planar"] = min(stats["planar"], planar_gap)
        stats["upper"] = min(stats["upper"], gap)
        if gap < -threshold:
            logger.error(f"Curved bound violated at t={t:.4g}: {gap:.3e}")
            raise SandwichError(
                f"solution crossed the curved {bound_family.value} bound by "
                f"{-gap:.3e} (threshold {threshold:.3e}) at t={t:.4g}"
            )

    def record(step, t, values, dt):
        if not _every(step, dt, window.spec.snapshot_every):
            return
        measure(t, values[:, 0])
        if t >= -T / 2 - 1e-9:
            snapshots.append(window.field(values[:, 0], t))

    values = window.evolve(values, -T, 0.0, data, check, record)
    measure(0.0, values[:, 0])
    return _Run(
        values=values[:, 0].copy(),
        snapshots=snapshots,
        min_lower_gap=stats["lower"],
        min_planar_gap=stats["planar"],
        min_upper_gap=stats["upper"],
        min_increment=stats["increment"],
    )


def construct_front(
    assembly: FrontAssembly,
    window: Optional[WindowSpec] = None,
    config: Optional[ConstructionConfig] = None,
    store_dir=None,
) -> FrontBundle:
    """Entire solution from the planar mix at t = -T, for a doubling horizon.

    Converged once two successive horizons agree within ``config.tol`` on the
    window at t = 0.
    """
    window_spec = window or WindowSpec()
    config = config or ConstructionConfig()
    if assembly.polytope.dim != 2:
        raise PreconditionError("construct_front supports N = 2")
    frame = CoMovingWindow.build(assembly, window_spec)
    tol_res = RESIDUAL_TOL * assembly.medium.reaction_max
    report = ConstructionReport(sandwich_tol=SANDWICH_TOL)
    base = config.initial_periods * frame.period / assembly.c_hat
    previous = None
    run = None

    def absorb(result: _Run) -> None:
        report.min_lower_gap = min(report.min_lower_gap, result.min_lower_gap)
        report.min_planar_gap = min(report.min_planar_gap, result.min_planar_gap)
        report.min_upper_gap = min(report.min_upper_gap, result.min_upper_gap)

    try:
        for k in range(config.max_doublings + 1):
            T = base * 2**k
            # the curved bound is a supersolution only up to the calibrated residual
            report.upper_allowance = tol_res * T
            report.sandwich_threshold = config.sandwich_slack + report.upper_allowance
            run = _construction_run(
                assembly,
                frame,
                T,
                opposite=False,
                threshold=report.sandwich_threshold,
                slack=config.sandwich_slack,
                monotonicity_slack=config.monotonicity_slack,
            )
            report.horizons.append(T)
            absorb(run)
            report.min_increment = min(report.min_increment, run.min_increment)
            if previous is not None:
                diff = float(np.max(np.abs(run.values - previous)))
                report.cauchy_differences.append(diff)
                logger.info(f"Horizon T={T:.4g}: difference to T/2 is {diff:.3e}")
                if diff <= config.tol:
                    report.converged = True
                    break
            else:
                logger.info(f"Horizon T={T:.4g} done")
            previous = run.values

        extras: Dict[str, object] = {}
        if config.from_upper:
            T = report.horizons[-1]
            upper = _construction_run(
                assembly,
                frame,
                T,
                opposite=True,
                threshold=report.sandwich_threshold,
                slack=config.sandwich_slack,
                monotonicity_slack=config.monotonicity_slack,
            )
            absorb(upper)
            report.upper_start_difference = float(
                np.max(np.abs(upper.values - run.values))
            )
            extras["opposite_values"] = upper.values
            logger.info(
                "Construction from the curved bound differs by "
                f"{report.upper_start_difference:.3e}"
            )
    except Exception as e:
        logger.error(f"Front construction failed: {e}")
        raise

    if not report.converged:
        logger.warning(
            f"Construction not converged after {len(report.horizons)} horizons: "
            f"{report.cauchy_differences}"
        )
    frame.place(0.0)
    bundle = FrontBundle(
        variant=assembly.variant,
        grid=frame.grid,
        values=run.values,
        offset_periods=int(round(frame.offset / frame.period)),
        snapshots=run.snapshots,
        interfaces=[(s.time, _interfaces(s)) for s in run.snapshots],
        construction=report,
        extras=extras,
    )
    if store_dir is not None:
        trajectory = Trajectory(snapshots=list(run.snapshots))
        trajectory.directory = write_trajectory(store_dir, trajectory)
    return bundle


# metrics


def width_on_grid(distance: float, h: float) -> float:
    """Smallest multiple of the grid spacing that covers ``distance``."""
    return h * math.ceil(distance / h - 1e-9)


def _zones(assembly: FrontAssembly, z: np.ndarray, t: float, p0: np.ndarray):
    """(distance to the translated interface, mask of the expected 0-zone)."""
    poly = assembly.polytope
    rel = z - assembly.c_hat * t * poly.e0 - p0
    if assembly.variant == Variant.V:
        return facet_distance(poly, rel), contains(poly, rel)
    return facet_distance(poly, -rel), ~contains(poly, -rel)


def decay_radius(assembly: FrontAssembly, level: float = 5e-3) -> float:
    """Smallest D with epsilon h(alpha x) <= level for all |x| >= D."""
    poly = assembly.polytope
    if poly.n < 2:
        return 0.0
    xs = np.linspace(0.0, 60.0 / assembly.alpha, 6001)
    h = np.maximum(
        surface_height(poly, xs, assembly.alpha).h,
        surface_height(poly, -xs, assembly.alpha).h,
    )
    above = np.flatnonzero(assembly.epsilon * h > level)
    if above.size == 0:
        return 0.0
    return float(xs[min(above[-1] + 1, xs.size - 1)])


def far_field_gap(
    assembly: FrontAssembly,
    bundle: FrontBundle,
    D: Optional[float] = None,
    level: float = 5e-3,
) -> Tuple[float, float]:
    """(D, sup |V - planar mix|) over nodes at distance >= D from the moving ridge."""
    D = decay_radius(assembly, level) if D is None else D
    z = bundle.grid.points()
    p0 = apex(assembly)
    distance = ridge_distance(assembly.polytope, z - p0)
    region = distance >= D
    if not np.any(region):
        logger.warning(f"No window node at ridge distance >= {D:.3g}")
        return D, 0.0
    lower = eval_planar_mix(assembly, 0.0, z[region])
    gap = float(np.max(np.abs(bundle.values[region] - lower)))
    logger.info(f"Far-field gap {gap:.3e} beyond D={D:.3g}")
    return D, gap


def transition_metrics(
    assembly: FrontAssembly,
    bundle: FrontBundle,
    epsilons: Sequence[float] = (0.05, 0.1, 0.5),
) -> MetricsReport:
    """Interface widths M(eps), e0-drift and inf-distance growth of the bundle."""
    snapshots = bundle.snapshots
    if len(snapshots) < 5:
        raise PreconditionError(
            f"transition metrics need >= 5 snapshots, bundle has {len(snapshots)}"
        )
    poly = assembly.polytope
    p0 = apex(assembly)
    axis = int(np.argmax(np.abs(poly.e0)))
    for snap in snapshots:
        grid = snap.grid
        lo, hi = grid.lower[axis], grid.upper[axis]
        points = np.concatenate(_interfaces(snap) or [np.zeros((0, 2))])
        near = np.abs(points[:, axis] - lo) < grid.spacing[axis]
        near |= np.abs(points[:, axis] - hi) < grid.spacing[axis]
        if np.any(near):
            logger.error(f"Interface touches the window edge at t={snap.time:.4g}")
            raise TruncationError(
                f"interface reaches the window boundary at t={snap.time:.4g}"
            )

    widths = []
    h = min(bundle.grid.spacing)
    for eps in epsilons:
        worst = 0.0
        for snap in snapshots:
            z = snap.grid.points()
            u = snap.flat
            distance, zero_zone = _zones(assembly, z, snap.time, p0)
            bad = (zero_zone & (u > eps)) | (~zero_zone & (u < 1.0 - eps))
            if np.any(bad):
                worst = max(worst, float(distance[bad].max()))
        widths.append(width_on_grid(worst, h))

    times = np.array([s.time for s in snapshots])
    positions = np.array([front_position(s, poly.e0) for s in snapshots])
    fit = linregress(times, positions)

    first = np.concatenate(_interfaces(snapshots[0]))
    last = np.concatenate(_interfaces(snapshots[-1]))
    gap, _ = cKDTree(first).query(last)
    rate = float(gap.min()) / (times[-1] - times[0])

    D, far = far_field_gap(assembly, bundle)
    report = MetricsReport(
        epsilons=[float(e) for e in epsilons],
        widths=widths,
        drift_speed=float(fit.slope),
        drift_stderr=float(fit.stderr),
        inf_distance_rate=rate,
        far_field_radius=D,
        far_field_gap=far,
    )
    bundle.metrics = report
    logger.info(
        f"Metrics: drift {report.drift_speed:.6f} (c_hat {assembly.c_hat:.6f}), "
        f"widths {dict(zip(report.epsilons, report.widths))}"
    )
    return report


def vertex_blow_down(
    assembly: FrontAssembly,
    radius: float = 2.0,
    alpha_factors: Sequence[float] = (1.0, 0.25),
    count: int = 41,
) -> List[Dict[str, float]]:
    """Minimum of the V-type curved bound at t = 0 on a box around the apex."""
    if assembly.variant != Variant.V:
        raise PreconditionError("vertex blow-down applies to the V family")
    poly = assembly.polytope
    offsets = _frame_lattice(poly, radius, count)
    z = offsets @ poly.frame.T + apex(assembly)
    rows = []
    for factor in alpha_factors:
        alpha = assembly.alpha * factor
        values = eval_curved_bound(assembly, 0.0, z, BoundFamily.SUPER_V, alpha=alpha)
        rows.append({"alpha": alpha, "window_min": float(values.min())})
        logger.info(f"Vertex window min {values.min():.6f} at alpha={alpha:.4g}")
    return rows


# squeeze and stability


def planar_solution(assembly: FrontAssembly, index: int = 0) -> Evaluator:
    e = assembly.polytope.directions[index]
    c = float(facet_speeds(assembly)[index])

    def u(t, z):
        z = np.atleast_2d(z)
        return assembly.family.value(e, z @ e - c * t, z)

    return u


class SqueezeEvaluator:
    """u(t + sign omega delta (1 - exp(-lam t)), x) + sign delta exp(-lam t)."""

    def __init__(self, base: Evaluator, delta, omega, lam, sign: int, k: float):
        self.base = base
        self.delta = float(delta)
        self.omega = float(omega)
        self.lam = float(lam)
        self.sign = 1 if sign >= 0 else -1
        self.k = float(k)

    def time_shift(self, t: float) -> float:
        return self.sign * self.omega * self.delta * (1.0 - math.exp(-self.lam * t))

    def offset(self, t: float) -> float:
        return self.sign * self.delta * math.exp(-self.lam * t)

    def __call__(self, t: float, z: np.ndarray) -> np.ndarray:
        return self.base(t + self.time_shift(t), z) + self.offset(t)


def squeeze_evaluator(
    base: Evaluator,
    medium: PeriodicMedium,
    params: StabilityParams,
    sign: int,
    points: np.ndarray,
    times: Sequence[float] = (0.0, 1.0, 2.0),
    step: float = 1e-4,
) -> SqueezeEvaluator:
    """Time-shifted, offset copy of ``base``; sign +1 is the supersolution."""
    if not 0.0 <= params.delta <= medium.sigma / 2 + 1e-15:
        raise PreconditionError(
            f"delta = {params.delta:.4g} outside [0, sigma/2 = {medium.sigma / 2:.4g}]"
        )
    mid = medium.sigma / 2
    rates = []
    for t in times:
        u = base(t, points)
        ut = (base(t + step, points) - base(t - step, points)) / (2 * step)
        inside = (u >= mid) & (u <= 1.0 - mid)
        if np.any(inside):
            rates.append(float(ut[inside].min()))
    k = min(rates) if rates else 0.0
    if k <= 0:
        logger.error(f"Base solution not increasing on the mid-range set: k={k:.3e}")
        raise PreconditionError(
            f"measured u_t lower bound k = {k:.3e} on the mid-range set is not positive"
        )
    lam = params.lam or medium.kappa
    fu_max = max(abs(v) for v in medium.du_range)
    omega = params.omega or 1.1 * (1.0 + fu_max / lam) / k
    logger.info(f"Squeeze: k={k:.4e}, lambda={lam:.4g}, omega={omega:.4g}")
    return SqueezeEvaluator(base, params.delta, omega, lam, sign, k)


def check_squeeze(
    evaluator: SqueezeEvaluator,
    medium: PeriodicMedium,
    grid: Grid,
    times: Sequence[float],
    dt: float = 0.01,
) -> SqueezeReport:
    points = grid.points()
    values = []
    for t in times:
        snapshots = [
            Field(grid, evaluator(t + k * dt, points), t + k * dt) for k in (-1, 0, 1)
        ]
        r = residual(medium, snapshots).flat
        values.append(r[np.isfinite(r)])
    values = np.concatenate(values)
    tol = RESIDUAL_TOL * medium.reaction_max
    if evaluator.sign > 0:
        extreme = float(values.min())
        passed = extreme >= -tol
    else:
        extreme = float(values.max())
        passed = extreme <= tol
    return SqueezeReport(
        sign=evaluator.sign,
        delta=evaluator.delta,
        omega=evaluator.omega,
        lam=evaluator.lam,
        k=evaluator.k,
        extreme_residual=extreme,
        tol=tol,
        passed=passed,
    )


def shift_facets(assembly: FrontAssembly, params: StabilityParams) -> FrontAssembly:
    """Assembly whose shifted polytopes use the per-facet weights of ``params``."""
    weights = list(params.facet_weights)
    if not weights:
        return assembly
    poly = assembly.polytope
    if poly.n < 2 or len(weights) != poly.n:
        raise PreconditionError(
            f"{len(weights)} facet weights given for {poly.n} facets"
        )
    shifted = [shifted_polytope(poly, i, lam) for i, lam in enumerate(weights)]
    logger.info(
        "Shifted polytopes with weights "
        + ", ".join(f"{s.lam:.3g} (spread {s.spread:.3g})" for s in shifted)
    )
    return replace(assembly, shifted=shifted)


def stability_bound_rows(
    assembly: FrontAssembly, z: np.ndarray, t: float = 0.0
) -> List[dict]:
    """Per facet: weight, spread and the largest rise of its shifted bound past the
    planar piece (reversed for W)."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    pieces = planar_pieces(assembly, t, z)
    rows = []
    for i, shifted in enumerate(assembly.shifted):
        if assembly.variant == Variant.V:
            bound = eval_curved_bound(assembly, t, z, BoundFamily.STAB_SUB_V, i)
            excess = float((bound - pieces[:, i]).max())
        else:
            bound = eval_curved_bound(assembly, t, z, BoundFamily.STAB_SUPER_W, i)
            excess = float((pieces[:, i] - bound).max())
        rows.append(
            {
                "facet": i + 1,
                "lam": shifted.lam,
                "spread": shifted.spread,
                "excess": excess,
            }
        )
    return rows


def stability_initial_data(
    assembly: FrontAssembly,
    bundle: FrontBundle,
    kind: str,
    config: Optional[StabilityConfig] = None,
) -> np.ndarray:
    """Initial data on the bundle window: planar mix, clamped curved bound, or the
    constructed front plus a bump at the ridge."""
    config = config or StabilityConfig()
    z = bundle.grid.points()
    if kind == "planar-mix":
        return eval_planar_mix(assembly, 0.0, z)
    if kind == "clamped-super":
        family = _main_family(assembly.variant)
        bound = eval_curved_bound(assembly, 0.0, z, family, alpha=config.initial_alpha)
        return np.clip(bound, 0.0, 1.0)
    if kind == "ridge-bump":
        r2 = np.sum((z - apex(assembly)) ** 2, axis=1) / config.bump_radius**2
        bump = config.bump_height * np.clip(1.0 - r2, 0.0, None)
        return np.clip(bundle.values + bump, 0.0, 1.0)
    raise PreconditionError(
        f"unknown initial data '{kind}', use one of {STABILITY_KINDS}"
    )


def best_shift(
    gap: Callable[[float], float], lo: float, hi: float
) -> Tuple[float, float]:
    """(shift, gap) minimising ``gap`` on [lo, hi] by golden-section search.

    A coarse scan picks the bracket; a minimiser on the scan's edge is kept as is.
    """
    taus = np.linspace(lo, hi, SHIFT_SAMPLES)
    values = np.array([gap(float(tau)) for tau in taus])
    j = int(np.argmin(values))
    if 0 < j < len(taus) - 1 and values[j] < min(values[j - 1], values[j + 1]):
        best = minimize_scalar(
            gap,
            bracket=(taus[j - 1], taus[j], taus[j + 1]),
            method="golden",
            options={"xtol": 1e-3, "maxiter": 60},
        )
        if best.fun <= values[j]:
            return float(best.x), float(best.fun)
    return float(taus[j]), float(values[j])


def eventually_decreasing(gaps: Sequence[float], tol: float = DECREASE_TOL) -> bool:
    """Non-increasing, up to ``tol`` per step, over the last half of the run."""
    tail = np.asarray(gaps, dtype=float)[len(gaps) // 2 :]
    if len(tail) < 2:
        return False
    return bool(np.all(np.diff(tail) <= tol))


def run_stability(
    assembly: FrontAssembly,
    bundle: FrontBundle,
    u0: np.ndarray,
    config: Optional[StabilityConfig] = None,
    window: Optional[WindowSpec] = None,
    label: str = "custom",
) -> StabilityReport:
    """Evolve u0 beside the constructed front and track the best time-shifted gap."""
    config = config or StabilityConfig()
    frame = CoMovingWindow.build(assembly, window or WindowSpec())
    if not frame.grid.same_nodes(bundle.grid):
        raise GridMismatchError("stability window differs from the bundle window")
    u0 = np.asarray(u0, dtype=float).reshape(-1)
    if u0.min() < -1e-12 or u0.max() > 1 + 1e-12:
        raise PreconditionError("initial data outside [0, 1]")
    frame.place(0.0)
    z = frame.points()
    distance = ridge_distance(assembly.polytope, z - apex(assembly))
    far = distance >= config.far_field_radius
    if np.any(far):
        excess = float(np.max(np.abs(u0[far] - eval_planar_mix(assembly, 0.0, z[far]))))
        if excess > config.far_field_tol:
            logger.error(f"Initial data '{label}' breaks the far-field condition")
            raise PreconditionError(
                f"initial data must approach the planar mix away from the ridge: "
                f"|u0 - planar mix| = {excess:.3e} beyond radius "
                f"{config.far_field_radius}"
            )

    def boundary(t, points):
        return eval_planar_mix(assembly, t, points)

    observations: List[Tuple[float, float, np.ndarray]] = []
    references: List[Tuple[float, float, np.ndarray]] = [
        (0.0, frame.offset, bundle.values.copy())
    ]

    def record(step, t, values, dt):
        if t <= config.horizon + 1e-9 and _every(step, dt, config.observe_every):
            observations.append((t, frame.offset, values[:, 0].copy()))
        if _every(step, dt, config.reference_every):
            references.append((t, frame.offset, values[:, 1].copy()))

    values = np.column_stack([u0, bundle.values])
    end = config.horizon + config.shift_bracket
    try:
        frame.evolve(values, 0.0, end, boundary, record=record)
    except Exception as e:
        logger.error(f"Stability run '{label}' failed: {e}")
        raise

    ref_times = np.array([r[0] for r in references])

    def reference(t: float, offset: float) -> np.ndarray:
        j = int(np.clip(np.searchsorted(ref_times, t) - 1, 0, len(ref_times) - 2))
        t0, off0, v0 = references[j]
        t1, off1, v1 = references[j + 1]
        w = min(max((t - t0) / (t1 - t0), 0.0), 1.0)
        a = frame.shift_rows(v0, int(round((offset - off0) / frame.period)))
        b = frame.shift_rows(v1, int(round((offset - off1) / frame.period)))
        return (1.0 - w) * a + w * b

    report = StabilityReport(label=label)
    for t, offset, u in observations:

        def gap(tau, t=t, offset=offset, u=u):
            return float(np.nanmax(np.abs(u - reference(t + tau, offset))))

        lo = max(-config.shift_bracket, -t)
        shift, value = best_shift(gap, lo, config.shift_bracket)
        report.times.append(t)
        report.gaps.append(value)
        report.shifts.append(shift)

    gaps = np.array(report.gaps)
    report.final_gap = float(gaps[-1])
    report.decreasing = eventually_decreasing(gaps)
    report.passed = report.final_gap <= config.target_gap and report.decreasing
    log = logger.info if report.passed else logger.warning
    log(
        f"Stability '{label}': s(T)={report.final_gap:.3e}, "
        f"decreasing={report.decreasing}"
    )
    return report
