import asyncio
import logging
import math
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd
from scipy.interpolate import CubicSpline
from scipy.spatial import ConvexHull

from rdfront.core.errors import (
    ExtrapolationError,
    PartialMapError,
    PreconditionError,
    SamplingError,
)
from rdfront.core.settings import Settings
from rdfront.models.front import FrontConfig, FrontOutcome, PulsatingFront
from rdfront.models.geometry import PolytopeSpec
from rdfront.models.medium import PeriodicMedium
from rdfront.models.speed import (
    ConditionReport,
    ConditionVerdict,
    SpeedMap,
    Variant,
    Verdict,
)
from rdfront.services.geometry_service import cap_angle, sample_cap
from rdfront.services.pulsating_service import compute_front

logger = logging.getLogger(__name__)

CAP_GUARD = 0.05
EXACT_TOL = 1e-10
GRAD_STEP = 1e-3
NO_MAP_ENTRY = (FrontOutcome.NO_FRONT_DETECTED, FrontOutcome.NEAR_STATIONARY)


def equiangular_directions(dim: int, count: int) -> np.ndarray:
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    if dim == 2:
        beta = 2 * np.pi * np.arange(count) / count
        return np.stack([np.cos(beta), np.sin(beta)], axis=1)
    # Fibonacci lattice on the sphere
    k = np.arange(count) + 0.5
    z = 1.0 - 2.0 * k / count
    r = np.sqrt(1.0 - z**2)
    phi = np.pi * (1.0 + math.sqrt(5.0)) * k
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


def _unit_rows(e) -> np.ndarray:
    e = np.atleast_2d(np.asarray(e, dtype=float))
    return e / np.linalg.norm(e, axis=1)[:, None]


async def _gather_fronts(medium, directions, config, workers) -> List[PulsatingFront]:
    semaphore = asyncio.Semaphore(workers)

    async def one(e):
        async with semaphore:
            return await asyncio.to_thread(compute_front, medium, e, config)

    return await asyncio.gather(*(one(e) for e in directions))


def compute_fronts(
    medium: PeriodicMedium,
    directions: Sequence[Sequence[float]],
    config: Optional[FrontConfig] = None,
    workers: Optional[int] = None,
) -> List[PulsatingFront]:
    """Pulsating fronts for independent directions, at most ``workers`` at a time."""
    config = config or FrontConfig()
    workers = workers or Settings.DEFAULT_WORKERS
    directions = _unit_rows(directions)
    logger.info(f"Computing {len(directions)} fronts with {workers} workers")
    return asyncio.run(_gather_fronts(medium, directions, config, workers))


def build_speed_map(
    medium: PeriodicMedium,
    e0: Sequence[float],
    direction_count: int = 16,
    config: Optional[FrontConfig] = None,
    workers: Optional[int] = None,
    interpolation: str = "linear",
) -> SpeedMap:
    """Speeds c_e for equi-angular directions.

    Directions without a moving front are listed and mark the map partial.
    """
    dim = medium.dim
    if dim == 2 and direction_count < 8:
        raise PreconditionError(
            f"a two-dimensional speed map needs >= 8 directions, got {direction_count}"
        )
    if interpolation not in ("linear", "spline"):
        raise PreconditionError(f"unknown interpolation '{interpolation}'")
    e0 = np.asarray(e0, dtype=float)
    e0 = e0 / np.linalg.norm(e0)
    config = (config or FrontConfig()).model_copy(update={"want_profile": False})
    directions = equiangular_directions(dim, direction_count)

    try:
        fronts = compute_fronts(medium, directions, config, workers)
    except Exception as e:
        logger.error(f"Speed map for {medium.name} failed: {e}")
        raise

    speeds = np.array([f.speed for f in fronts], dtype=float)
    stderrs = np.array([f.stderr for f in fronts], dtype=float)
    failures = []
    for e, front in zip(directions, fronts):
        if front.outcome in NO_MAP_ENTRY:
            failures.append(
                {
                    "direction": [float(v) for v in e],
                    "outcome": front.outcome.value,
                    "speed": float(front.speed),
                }
            )
    if failures:
        logger.warning(
            f"Speed map partial: {len(failures)} of {len(directions)} directions "
            "without a moving front"
        )
    if dim == 2:
        resolution = 2 * np.pi / direction_count
    else:
        resolution = _sphere_spacing(directions)
    return SpeedMap(
        e0=e0,
        directions=directions,
        speeds=speeds,
        stderrs=stderrs,
        resolution=resolution,
        interpolation=interpolation,
        partial=bool(failures),
        failures=failures,
    )


def closed_form_speed_map(
    theta: float, A: np.ndarray, e0: Sequence[float], count: int = 64
) -> SpeedMap:
    """Exact map of a homogeneous cubic medium, c_e = (1 - 2 theta) sqrt(e.A.e/2)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))

    def speed(e):
        e = _unit_rows(e)
        scale = np.sqrt(np.einsum("mi,ij,mj->m", e, A, e))
        return (1.0 - 2.0 * theta) * scale / math.sqrt(2.0)

    return SpeedMap.from_function(e0, speed, count)


def reversed_speed_map(
    e0: Sequence[float], scale: float = 0.5, ripple: float = 0.2, count: int = 64
) -> SpeedMap:
    """Analytic map with g(e) = scale (1 - ripple cos 2 beta) on the cap.

    beta is the angle of e from the frame axis towards e0, so g has its strict
    minimum at the 45 degree pair and grows towards e0: the inequalities of the
    mirror family hold and those of the V family fail.
    """
    e0 = np.asarray(e0, dtype=float)
    e0 = e0 / np.linalg.norm(e0)
    axis = np.array([e0[1], -e0[0]])

    def speed(e):
        e = _unit_rows(e)
        beta = np.arctan2(e @ e0, e @ axis)
        return scale * (1.0 - ripple * np.cos(2.0 * beta)) * np.sin(beta)

    return SpeedMap.from_function(e0, speed, count)


def _sphere_spacing(directions: np.ndarray) -> float:
    if directions.shape[1] != 3:
        return math.pi
    cos = np.clip(directions @ directions.T, -1.0, 1.0)
    np.fill_diagonal(cos, -1.0)
    return float(np.max(np.arccos(np.max(cos, axis=1))))


def _interpolate(speed_map: SpeedMap, values: np.ndarray, e: np.ndarray) -> np.ndarray:
    dim = speed_map.dim
    if dim == 1:
        nearest = np.argmax(e @ speed_map.directions.T, axis=1)
        return values[nearest]
    if dim == 2:
        angles = speed_map.angles
        order = np.argsort(angles)
        a, v = angles[order], values[order]
        beta = np.mod(np.arctan2(e[:, 1], e[:, 0]), 2 * np.pi)
        if speed_map.interpolation == "spline":
            if not np.all(np.isfinite(v)):
                return np.full(len(e), np.nan)
            spline = CubicSpline(
                np.append(a, a[0] + 2 * np.pi),
                np.append(v, v[0]),
                bc_type="periodic",
            )
            return spline(np.mod(beta - a[0], 2 * np.pi) + a[0])
        return np.interp(beta, a, v, period=2 * np.pi)

    hull = ConvexHull(speed_map.directions)
    corners = speed_map.directions[hull.simplices]  # (F, 3, 3)
    inverse = np.linalg.inv(np.transpose(corners, (0, 2, 1)))
    lam = np.einsum("fij,mj->mfi", inverse, e)
    inside = np.all(lam >= -1e-10, axis=2)
    face = np.argmax(inside, axis=1)
    weights = lam[np.arange(len(e)), face]
    weights = weights / weights.sum(axis=1)[:, None]
    return np.sum(weights * values[hull.simplices[face]], axis=1)


def speed_at(speed_map: SpeedMap, e) -> np.ndarray:
    e = _unit_rows(e)
    if speed_map.override is not None:
        return np.asarray(speed_map.override(e), dtype=float).reshape(-1)
    out = _interpolate(speed_map, speed_map.speeds, e)
    if np.any(~np.isfinite(out)):
        bad = e[np.flatnonzero(~np.isfinite(out))[0]]
        logger.error(f"Speed map has no usable samples around {bad.round(6).tolist()}")
        raise ExtrapolationError(
            f"direction {bad.round(6).tolist()} outside the sampled part of the map"
        )
    return out


def stderr_at(speed_map: SpeedMap, e) -> np.ndarray:
    e = _unit_rows(e)
    if speed_map.override is not None:
        return np.zeros(len(e))
    return np.nan_to_num(_interpolate(speed_map, speed_map.stderrs, e), nan=np.inf)


def eval_g(speed_map: SpeedMap, x):
    """g(x) = c_{x/|x|} / ((x/|x|).e0), positively homogeneous of degree zero."""
    single = np.ndim(x) == 1
    x = np.atleast_2d(np.asarray(x, dtype=float))
    norms = np.linalg.norm(x, axis=1)
    if np.any(norms == 0):
        raise PreconditionError("g is undefined at the origin")
    e = x / norms[:, None]
    tilt = e @ speed_map.e0
    if np.any(tilt <= CAP_GUARD):
        worst = float(tilt.min())
        logger.error(f"g evaluated at e.e0 = {worst:.4f}")
        raise ExtrapolationError(
            f"direction with e.e0 = {worst:.4f} <= {CAP_GUARD} is outside the cap"
        )
    g = speed_at(speed_map, e) / tilt
    return float(g[0]) if single else g


def grad_g(speed_map: SpeedMap, e, delta: float = GRAD_STEP) -> np.ndarray:
    """Central differences of g along the coordinate axes at the unit vector e.

    g is the 0-homogeneous extension, so e.grad g(e) vanishes up to the
    differencing error.
    """
    if delta >= 2 * speed_map.resolution:
        raise SamplingError(
            f"difference step {delta:.3e} is not below twice the angular sample "
            f"spacing {speed_map.resolution:.3e}"
        )
    e = np.asarray(e, dtype=float)
    e = e / np.linalg.norm(e)
    steps = delta * np.eye(e.shape[0])
    forward = eval_g(speed_map, e + steps)
    backward = eval_g(speed_map, e - steps)
    return (forward - backward) / (2 * delta)


def _graded(margin: float, noise: float) -> Verdict:
    if margin > noise:
        return Verdict.PASS
    if margin < -noise:
        return Verdict.FAIL
    return Verdict.INDETERMINATE


def _cap_samples(speed_map: SpeedMap, poly: PolytopeSpec, refine: int) -> np.ndarray:
    step = speed_map.resolution / refine
    if poly.dim == 2:
        beta = cap_angle(poly, poly.directions)
        count = int(math.ceil((beta.max() - beta.min()) / step)) + 1
        return sample_cap(poly, max(count, 2))
    spread = np.arccos(np.clip(poly.directions @ poly.directions.T, -1.0, 1.0)).max()
    level = max(2, int(math.ceil(spread / step)))
    return sample_cap(poly, level ** max(poly.n - 1, 1))


def check_theorem_conditions(
    speed_map: SpeedMap,
    poly: PolytopeSpec,
    variant: Variant = Variant.V,
    refine: int = 10,
) -> ConditionReport:
    """Verdicts for (i) tilt and distinctness, (ii) equal g on the facets,
    (iii) the cap inequality and (iv) the gradient sign table.

    Variant W reverses (iii) and (iv).
    """
    if speed_map.partial:
        listed = [f["direction"] for f in speed_map.failures]
        logger.error(f"Condition check on a partial speed map: {listed}")
        raise PartialMapError(f"speed map is partial; failing directions {listed}")
    variant = Variant(variant)
    n = poly.n
    sign = 1.0 if variant == Variant.V else -1.0
    E = poly.directions
    report = ConditionReport(
        variant=variant,
        c_hat=float("nan"),
        resolution=speed_map.resolution,
        interpolation_limited=speed_map.override is None,
    )

    separation = min(
        (float(np.linalg.norm(E[i] - E[j])) for i in range(n) for j in range(i + 1, n)),
        default=math.inf,
    )
    margin_i = min(float(poly.s.min()), separation)
    report.verdicts["i"] = ConditionVerdict(
        condition="i",
        verdict=Verdict.PASS if margin_i > 1e-12 else Verdict.FAIL,
        margin=margin_i,
        detail=f"min e_i.e0 = {poly.s.min():.6g}, min |e_i - e_j| = {separation:.6g}",
    )
    if report.verdicts["i"].verdict == Verdict.FAIL or poly.s.min() <= CAP_GUARD:
        for key in ("ii", "iii", "iv"):
            report.verdicts[key] = ConditionVerdict(
                condition=key,
                verdict=Verdict.INDETERMINATE,
                margin=0.0,
                detail="not evaluated: directions fail (i) or sit on the cap guard",
            )
        logger.warning(f"Condition (i) fails for variant {variant.value}")
        return report

    g = eval_g(speed_map, E)
    sigma = stderr_at(speed_map, E) / poly.s
    if np.all(sigma > 0) and np.all(np.isfinite(sigma)):
        weights = 1.0 / sigma**2
        c_hat = float(np.sum(weights * g) / np.sum(weights))
    else:
        c_hat = float(g.mean())
    tol_ii = 3.0 * float(stderr_at(speed_map, E).max()) / float(poly.s.min())
    deviation = float(np.max(np.abs(g - c_hat)))
    exact = EXACT_TOL * (1.0 + abs(c_hat))
    if deviation <= exact:
        verdict_ii = Verdict.PASS
    elif deviation <= tol_ii:
        verdict_ii = Verdict.INDETERMINATE
    else:
        verdict_ii = Verdict.FAIL
    report.c_hat = c_hat
    report.g_at_facets = [float(v) for v in g]
    report.verdicts["ii"] = ConditionVerdict(
        condition="ii",
        verdict=verdict_ii,
        margin=max(tol_ii, exact) - deviation,
        noise=tol_ii,
        detail=f"c_hat = {c_hat:.10g}, max |g(e_i) - c_hat| = {deviation:.3e}",
    )

    if n == 1:
        for key in ("iii", "iv"):
            report.verdicts[key] = ConditionVerdict(
                condition=key,
                verdict=Verdict.PASS,
                margin=0.0,
                detail="vacuous for a single facet",
            )
        report.sign_table = [[0.0]]
        return report

    samples = _cap_samples(speed_map, poly, refine)
    angle = np.arccos(np.clip(samples @ E.T, -1.0, 1.0))
    keep = np.all(angle >= speed_map.resolution, axis=1)
    if not np.any(keep):
        report.verdicts["iii"] = ConditionVerdict(
            condition="iii",
            verdict=Verdict.INDETERMINATE,
            margin=0.0,
            noise=tol_ii,
            detail="cap narrower than the excluded facet neighbourhoods",
        )
    else:
        gap = sign * (c_hat - eval_g(speed_map, samples[keep]))
        margin_iii = float(gap.min())
        report.verdicts["iii"] = ConditionVerdict(
            condition="iii",
            verdict=_graded(margin_iii, tol_ii),
            margin=margin_iii,
            noise=tol_ii,
            detail=f"{int(keep.sum())} cap samples, spacing "
            f"{speed_map.resolution / refine:.4g} rad",
        )

    table = np.zeros((n, n))
    for i in range(n):
        grad = grad_g(speed_map, E[i])
        for j in range(n):
            if j != i:
                table[i, j] = float(grad @ E[j])
    off = ~np.eye(n, dtype=bool)
    margin_iv = float(np.min(-sign * table[off]))
    noise_iv = tol_ii / speed_map.resolution
    report.sign_table = table.tolist()
    report.verdicts["iv"] = ConditionVerdict(
        condition="iv",
        verdict=_graded(margin_iv, noise_iv),
        margin=margin_iv,
        noise=noise_iv,
        detail=("grad g(e_i).e_j < 0" if sign > 0 else "grad g(e_i).e_j > 0")
        + " for i != j",
    )

    for key, verdict in report.verdicts.items():
        if verdict.verdict == Verdict.INDETERMINATE:
            logger.warning(
                f"Condition ({key}) indeterminate for variant {variant.value}: "
                f"margin {verdict.margin:.3e} within noise {verdict.noise:.3e}"
            )
    logger.info(
        f"Conditions for variant {variant.value}: "
        + ", ".join(f"({k}) {v.verdict.value}" for k, v in report.verdicts.items())
    )
    return report


def speed_map_frame(speed_map: SpeedMap) -> pd.DataFrame:
    """Direction components, speed, stderr and g (NaN near the cap boundary)."""
    columns = {f"e{k}": speed_map.directions[:, k] for k in range(speed_map.dim)}
    columns["speed"] = speed_map.speeds
    columns["stderr"] = speed_map.stderrs
    tilt = speed_map.directions @ speed_map.e0
    with np.errstate(divide="ignore", invalid="ignore"):
        columns["g"] = np.where(tilt > CAP_GUARD, speed_map.speeds / tilt, np.nan)
    return pd.DataFrame(columns)


def condition_frame(report: ConditionReport) -> pd.DataFrame:
    return pd.DataFrame(
        [
            {
                "variant": report.variant.value,
                "condition": key,
                "verdict": v.verdict.value,
                "margin": v.margin,
                "noise": v.noise,
                "resolution": report.resolution,
                "detail": v.detail,
            }
            for key, v in report.verdicts.items()
        ]
    )


def condition_text(report: ConditionReport) -> List[str]:
    title = "Front conditions, variant " + report.variant.value
    lines = [title, "=" * len(title), f"c_hat = {report.c_hat:.10g}"]
    lines.append(
        f"resolution = {report.resolution:.6g} rad"
        + (" (interpolation-limited)" if report.interpolation_limited else "")
    )
    for key, v in report.verdicts.items():
        lines.append(
            f"({key:>3}) {v.verdict.value:<13} margin {v.margin:+.6e} "
            f"noise {v.noise:.3e}  {v.detail}"
        )
    if report.sign_table:
        lines.append("grad g(e_i).e_j:")
        for row in report.sign_table:
            lines.append("  " + " ".join(f"{value:+.6e}" for value in row))
    lines.append(f"admissible: {report.admissible}")
    return lines
