import logging
from typing import Callable, Dict, Optional, Sequence

import numpy as np
from scipy.integrate import simpson
from scipy.optimize import bisect

from rdfront.core.errors import MediumError
from rdfront.models.medium import CheckResult, PeriodicMedium, ValidationReport

logger = logging.getLogger(__name__)

PRESETS = (
    "cubic-homogeneous",
    "cubic-striped",
    "checkerboard-diffusion",
    "anisotropic-constant",
)

# fraction of the nearest zero of f_u used as the fringe width
FRINGE_FRACTION = 0.9


def cubic_reaction(u: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """u(1-u)(u-theta) on [0,1], continued linearly with the edge slopes."""
    u = np.asarray(u, dtype=float)
    inner = u * (1.0 - u) * (u - theta)
    below = -theta * u
    above = -(1.0 - theta) * (u - 1.0)
    return np.where(u < 0.0, below, np.where(u > 1.0, above, inner))


def cubic_reaction_du(u: np.ndarray, theta: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    inner = -3.0 * u**2 + 2.0 * (1.0 + theta) * u - theta
    theta = np.broadcast_to(theta, u.shape)
    return np.where(u < 0.0, -theta, np.where(u > 1.0, -(1.0 - theta), inner))


def cell_lattice(periods: Sequence[float], density: int) -> np.ndarray:
    axes = [np.arange(density) * (L / density) for L in periods]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


class FrozenReaction:
    """Reaction term with its spatial dependence evaluated once at fixed nodes."""

    def __init__(self, medium: PeriodicMedium, points: np.ndarray):
        self.medium = medium
        self.points = points
        self.theta = None
        if medium.theta_field is not None:
            self.theta = np.asarray(medium.theta_field(points), dtype=float)

    def _theta_for(self, u: np.ndarray):
        if u.ndim == 2 and np.ndim(self.theta) == 1:
            return self.theta[:, None]
        return self.theta

    def value(self, u: np.ndarray) -> np.ndarray:
        if self.theta is not None:
            return cubic_reaction(u, self._theta_for(u))
        if u.ndim == 2:
            return np.stack(
                [self.medium.reaction(self.points, u[:, j]) for j in range(u.shape[1])],
                axis=1,
            )
        return self.medium.reaction(self.points, u)

    def du(self, u: np.ndarray) -> np.ndarray:
        if self.theta is not None:
            return cubic_reaction_du(u, self._theta_for(u))
        return self.medium.reaction_du(self.points, u)


def _fringe_zeros(theta: np.ndarray):
    root = np.sqrt(1.0 - theta + theta**2)
    return (1.0 + theta - root) / 3.0, (1.0 + theta + root) / 3.0


def make_cubic_medium(
    theta_field: Callable[[np.ndarray], np.ndarray],
    diffusion_field: Callable[[np.ndarray], np.ndarray],
    periods: Sequence[float],
    name: str = "custom",
    homogeneous: bool = False,
    sampling_density: int = 16,
    params: Optional[Dict[str, float]] = None,
) -> PeriodicMedium:
    """Cubic bistable medium f(x,u) = u(1-u)(u-theta(x)) with diffusion A(x)."""
    periods = tuple(float(L) for L in periods)
    dim = len(periods)
    if any(L <= 0 for L in periods):
        raise MediumError(f"periods must be positive, got {periods}")

    points = cell_lattice(periods, sampling_density)
    theta = np.asarray(theta_field(points), dtype=float)
    bad = np.flatnonzero((theta <= 0.0) | (theta >= 1.0) | ~np.isfinite(theta))
    if bad.size:
        witness = points[bad[0]].tolist()
        raise MediumError(
            f"theta must lie in (0,1); got {theta[bad[0]]} at cell point {witness}"
        )

    A = np.asarray(diffusion_field(points), dtype=float).reshape(-1, dim, dim)
    asym = np.max(np.abs(A - np.transpose(A, (0, 2, 1))), axis=(1, 2))
    if np.any(asym > 1e-12):
        k = int(np.argmax(asym))
        raise MediumError(f"diffusion not symmetric at cell point {points[k].tolist()}")
    eig = np.linalg.eigvalsh(A)
    if np.any(eig[:, 0] <= 0.0):
        k = int(np.argmin(eig[:, 0]))
        raise MediumError(
            f"diffusion not positive definite at cell point {points[k].tolist()} "
            f"(smallest eigenvalue {eig[k, 0]:.3e})"
        )

    low, high = _fringe_zeros(theta)
    sigma = FRINGE_FRACTION * float(min(low.min(), (1.0 - high).min()))
    sigma = min(sigma, 0.49)
    u_lo = np.linspace(-0.5, sigma, 64)
    u_hi = np.linspace(1.0 - sigma, 1.5, 64)
    fu_lo = cubic_reaction_du(u_lo[None, :], theta[:, None])
    fu_hi = cubic_reaction_du(u_hi[None, :], theta[:, None])
    kappa = float(min((-fu_lo).min(), (-fu_hi).min()))

    u_all = np.linspace(-0.1, 1.1, 121)
    fu_all = cubic_reaction_du(u_all[None, :], theta[:, None])
    f_unit = cubic_reaction(np.linspace(0.0, 1.0, 201)[None, :], theta[:, None])

    def reaction(x, u):
        return cubic_reaction(u, theta_field(x))

    def reaction_du(x, u):
        return cubic_reaction_du(u, theta_field(x))

    medium = PeriodicMedium(
        dim=dim,
        periods=periods,
        diffusion=lambda x: np.asarray(diffusion_field(x), dtype=float).reshape(
            -1, dim, dim
        ),
        reaction=reaction,
        reaction_du=reaction_du,
        kappa=kappa,
        sigma=sigma,
        lambda_bounds=(float(eig.min()), float(eig.max())),
        name=name,
        homogeneous=homogeneous,
        theta_field=theta_field,
        du_range=(float(fu_all.min()), float(fu_all.max())),
        reaction_max=float(np.abs(f_unit).max()),
        params=dict(params or {}),
    )
    logger.info(
        f"Built medium '{name}': dim={dim}, sigma={sigma:.4f}, kappa={kappa:.4f}, "
        f"lambda=({medium.lambda_bounds[0]:.3f}, {medium.lambda_bounds[1]:.3f})"
    )
    return medium


def preset_medium(
    preset: str,
    dim: int = 2,
    theta: float = 0.25,
    contrast: float = 0.0,
    diffusion: float = 1.0,
    a11: float = 1.0,
    a22: float = 1.0,
    a12: float = 0.0,
    periods: Optional[Sequence[float]] = None,
    sampling_density: int = 16,
) -> PeriodicMedium:
    periods = tuple(periods) if periods else tuple(1.0 for _ in range(dim))
    if len(periods) < dim:
        periods = tuple(periods) + (periods[-1],) * (dim - len(periods))
    periods = periods[:dim]
    eye = np.eye(dim)
    params = {"theta": theta, "contrast": contrast, "diffusion": diffusion}

    if preset == "cubic-homogeneous":
        return make_cubic_medium(
            lambda x: np.full(len(x), theta),
            lambda x: np.broadcast_to(diffusion * eye, (len(x), dim, dim)),
            periods,
            name=preset,
            homogeneous=True,
            sampling_density=sampling_density,
            params=params,
        )
    if preset == "cubic-striped":
        wave = 2.0 * np.pi / periods[0]
        return make_cubic_medium(
            lambda x: theta + contrast * np.sin(wave * x[:, 0]),
            lambda x: np.broadcast_to(diffusion * eye, (len(x), dim, dim)),
            periods,
            name=preset,
            homogeneous=contrast == 0.0,
            sampling_density=sampling_density,
            params=params,
        )
    if preset == "checkerboard-diffusion":
        waves = [2.0 * np.pi / L for L in periods]

        def field(x):
            pattern = np.ones(len(x))
            for k in range(dim):
                pattern = pattern * np.sin(waves[k] * x[:, k])
            return diffusion * (1.0 + contrast * pattern)[:, None, None] * eye

        if contrast >= 1.0:
            raise MediumError("checkerboard contrast must be below 1")
        return make_cubic_medium(
            lambda x: np.full(len(x), theta),
            field,
            periods,
            name=preset,
            homogeneous=contrast == 0.0,
            sampling_density=sampling_density,
            params=params,
        )
    if preset == "anisotropic-constant":
        if dim != 2:
            raise MediumError("anisotropic-constant is two-dimensional")
        matrix = np.array([[a11, a12], [a12, a22]])
        params.update({"a11": a11, "a22": a22, "a12": a12})
        return make_cubic_medium(
            lambda x: np.full(len(x), theta),
            lambda x: np.broadcast_to(matrix, (len(x), 2, 2)),
            periods,
            name=preset,
            homogeneous=True,
            sampling_density=sampling_density,
            params=params,
        )
    raise MediumError(f"unknown medium preset '{preset}', expected one of {PRESETS}")


def constant_diffusion(medium: PeriodicMedium) -> Optional[np.ndarray]:
    """The diffusion matrix when it is constant in space, else None."""
    points = cell_lattice(medium.periods, 4)
    A = medium.diffusion(points)
    if np.max(np.abs(A - A[0])) <= 1e-14:
        return np.array(A[0])
    return None


def constant_theta(medium: PeriodicMedium) -> Optional[float]:
    if medium.theta_field is None:
        return None
    theta = np.asarray(medium.theta_field(cell_lattice(medium.periods, 4)))
    if np.max(np.abs(theta - theta[0])) <= 1e-14:
        return float(theta[0])
    return None


def _locate_theta(medium: PeriodicMedium, point: np.ndarray) -> Optional[float]:
    def f(u):
        return float(medium.reaction(point[None, :], np.array([u]))[0])

    grid = np.linspace(1e-6, 1.0 - 1e-6, 401)
    values = medium.reaction(np.repeat(point[None, :], grid.size, axis=0), grid)
    signs = np.sign(values)
    changes = np.flatnonzero(signs[:-1] * signs[1:] < 0)
    if changes.size != 1 or signs[0] >= 0:
        return None
    k = changes[0]
    return bisect(f, grid[k], grid[k + 1], xtol=1e-12)


def validate_medium(
    medium: PeriodicMedium, sampling_density: int = 16, seed: int = 0
) -> ValidationReport:
    """Sampled checks of regularity, periodicity, bistability, ellipticity,
    fringe slopes and the sign of the reaction integral."""
    if sampling_density < 8:
        raise MediumError("sampling_density must be at least 8 points per period")

    rng = np.random.default_rng(seed)
    dim = medium.dim
    periods = np.asarray(medium.periods)
    report = ValidationReport(medium=medium.name, sampling_density=sampling_density)
    points = cell_lattice(medium.periods, sampling_density)

    # regularity
    A = medium.diffusion(points)
    u_samples = np.linspace(-0.5, 1.5, 41)
    f_samples = np.stack(
        [medium.reaction(points, np.full(len(points), u)) for u in u_samples]
    )
    finite = bool(np.all(np.isfinite(A)) and np.all(np.isfinite(f_samples)))
    report.checks.append(
        CheckResult(name="A1-regularity", passed=finite, margin=0.0 if finite else -1.0)
    )

    # periodicity
    x = rng.uniform(0.0, 1.0, size=(1000, dim)) * periods
    k = rng.integers(-3, 4, size=(1000, dim))
    shifted = x + k * periods
    u = rng.uniform(-0.2, 1.2, size=1000)
    df = np.abs(medium.reaction(x, u) - medium.reaction(shifted, u))
    dA = np.max(np.abs(medium.diffusion(x) - medium.diffusion(shifted)), axis=(1, 2))
    worst = float(max(df.max(), dA.max()))
    witness = x[int(np.argmax(np.maximum(df, dA)))].tolist()
    report.checks.append(
        CheckResult(
            name="A2-periodicity",
            passed=worst <= 1e-12,
            margin=1e-12 - worst,
            witness=witness if worst > 1e-12 else None,
        )
    )

    # bistability
    f0 = np.abs(medium.reaction(points, np.zeros(len(points))))
    f1 = np.abs(medium.reaction(points, np.ones(len(points))))
    thetas = []
    bistable_witness = None
    for point in points:
        located = _locate_theta(medium, point)
        if located is None:
            bistable_witness = point.tolist()
            break
        thetas.append(located)
    equilibria = bool(np.all(f0 == 0.0) and np.all(f1 == 0.0))
    bistable = equilibria and bistable_witness is None
    report.theta_samples = thetas
    report.checks.append(
        CheckResult(
            name="A3-bistable",
            passed=bistable,
            margin=float(min(thetas) * (1 - max(thetas))) if bistable else -1.0,
            detail="" if equilibria else "f(x,0) or f(x,1) is not zero",
            witness=bistable_witness,
        )
    )

    # ellipticity
    eig = np.linalg.eigvalsh(A)
    lam1, lam2 = medium.lambda_bounds
    low = float((eig[:, 0] - lam1).min())
    high = float((lam2 - eig[:, -1]).min())
    positive = float(eig[:, 0].min())
    elliptic = positive > 0.0 and low >= -1e-12 and high >= -1e-12
    worst_point = points[int(np.argmin(eig[:, 0]))].tolist()
    report.checks.append(
        CheckResult(
            name="A4-ellipticity",
            passed=elliptic,
            margin=min(low, high, positive),
            witness=None if elliptic else worst_point,
        )
    )

    # fringe slopes
    sigma = medium.sigma
    fringe = np.concatenate(
        [np.linspace(-0.5, sigma, 40), np.linspace(1 - sigma, 1.5, 40)]
    )
    slopes = np.stack(
        [medium.reaction_du(points, np.full(len(points), u)) for u in fringe]
    )
    fringe_margin = float((-slopes).min() - medium.kappa)
    report.checks.append(
        CheckResult(
            name="fringe-slope",
            passed=fringe_margin >= -1e-12 and 0.0 < sigma < 0.5 and medium.kappa > 0,
            margin=fringe_margin,
        )
    )

    # sign of the reaction integral; simpson in u is exact for cubics
    u_nodes = np.linspace(0.0, 1.0, 11)
    values = np.stack(
        [medium.reaction(points, np.full(len(points), u)) for u in u_nodes], axis=1
    )
    per_point = simpson(values, x=u_nodes, axis=1)
    integral = float(per_point.mean() * medium.cell_volume())
    report.h1_integral = integral
    report.h1_boundary_case = abs(integral) <= 1e-12
    report.h1_sign = 0 if report.h1_boundary_case else int(np.sign(integral))
    if report.h1_boundary_case:
        logger.warning(f"Medium '{medium.name}': reaction integral vanishes")

    logger.info(
        f"Validated medium '{medium.name}': passed={report.passed}, "
        f"integral={integral:.6g}"
    )
    return report
