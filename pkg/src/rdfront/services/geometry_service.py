import logging
from typing import Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.linalg import null_space
from scipy.optimize import nnls
from scipy.special import logsumexp

from rdfront.core.errors import PolytopeError, SurfaceError
from rdfront.models.geometry import PolytopeSpec, ShiftedPolytope, SurfaceEval

logger = logging.getLogger(__name__)

SURFACE_TOL = 1e-13
SURFACE_MAX_ITER = 100


def orthonormal_frame(e0: np.ndarray) -> np.ndarray:
    """Columns spanning the hyperplane orthogonal to e0."""
    dim = e0.shape[0]
    if dim == 1:
        return np.zeros((1, 0))
    if dim == 2:
        return np.array([[e0[1]], [-e0[0]]])
    return null_space(e0[None, :])


def build_polytope(
    e0: Sequence[float], directions: Sequence[Sequence[float]], validate: bool = True
) -> PolytopeSpec:
    """Q = {z : min_i z . e_i > 0} described in the frame (P, e0)."""
    e0 = np.asarray(e0, dtype=float)
    e0 = e0 / np.linalg.norm(e0)
    directions = np.atleast_2d(np.asarray(directions, dtype=float))
    if directions.shape[1] != e0.shape[0]:
        raise PolytopeError(
            f"directions are {directions.shape[1]}-D but e0 is {e0.shape[0]}-D"
        )
    norms = np.linalg.norm(directions, axis=1)
    if np.any(norms == 0):
        raise PolytopeError("zero direction vector")
    directions = directions / norms[:, None]

    tilt = directions @ e0
    if validate:
        blocked = np.flatnonzero(tilt <= 0)
        if blocked.size:
            i = int(blocked[0])
            raise PolytopeError(
                f"condition (i) violated: e_{i + 1} . e0 = {tilt[i]:.6g} <= 0"
            )
        for i in range(len(directions)):
            for j in range(i + 1, len(directions)):
                if np.linalg.norm(directions[i] - directions[j]) <= 1e-12:
                    raise PolytopeError(
                        f"condition (i) violated: e_{i + 1} and e_{j + 1} coincide"
                    )

    frame = orthonormal_frame(e0)
    return PolytopeSpec(
        e0=e0,
        directions=directions,
        frame=frame,
        a=directions @ frame,
        s=tilt,
    )


def polytope_from_angles(e0: Sequence[float], angles_deg: Sequence[float]):
    """Two-dimensional polytope with e_i = P cos(beta_i) + e0 sin(beta_i)."""
    e0 = np.asarray(e0, dtype=float)
    e0 = e0 / np.linalg.norm(e0)
    frame = orthonormal_frame(e0)[:, 0]
    beta = np.radians(np.asarray(angles_deg, dtype=float))
    directions = np.outer(np.cos(beta), frame) + np.outer(np.sin(beta), e0)
    return build_polytope(e0, directions)


def cap_angle(poly: PolytopeSpec, e: np.ndarray) -> np.ndarray:
    """Angle of e measured from the frame axis towards e0 (two dimensions)."""
    e = np.atleast_2d(e)
    return np.arctan2(e @ poly.e0, e @ poly.frame[:, 0])


def direction_at(poly: PolytopeSpec, beta) -> np.ndarray:
    beta = np.asarray(beta, dtype=float)
    return np.multiply.outer(np.cos(beta), poly.frame[:, 0]) + np.multiply.outer(
        np.sin(beta), poly.e0
    )


def _as_points(poly: PolytopeSpec, x) -> np.ndarray:
    d = poly.dim - 1
    x = np.asarray(x, dtype=float)
    if d == 1 and x.ndim <= 1:
        return x.reshape(-1, 1)
    if x.ndim == 1:
        return x.reshape(-1, d) if d else np.zeros((max(1, x.size), 0))
    return x


def _solve_height(poly: PolytopeSpec, b: np.ndarray) -> np.ndarray:
    """Y with logsumexp(-(b_i + Y s_i)) = 0, by Newton from the left.

    The function is convex and decreasing in Y; starting where it is
    nonnegative the iterates increase monotonically to the root.
    """
    s = poly.s
    Y = np.max(-b / s, axis=1)
    for _ in range(SURFACE_MAX_ITER):
        q = b + Y[:, None] * s
        value = logsumexp(-q, axis=1)
        if np.all(np.abs(value) <= SURFACE_TOL):
            return Y
        p = np.exp(-q - value[:, None])
        slope = -(p @ s)
        Y = Y - value / slope
    q = b + Y[:, None] * s
    value = logsumexp(-q, axis=1)
    if np.all(np.abs(value) <= SURFACE_TOL):
        return Y
    worst = int(np.argmax(np.abs(value)))
    logger.error(f"Surface root not converged, residual {value[worst]:.3e}")
    raise SurfaceError(
        f"surface equation residual {value[worst]:.3e} after {SURFACE_MAX_ITER} "
        "Newton steps"
    )


def surface_height(poly: PolytopeSpec, x, alpha: float = 1.0) -> SurfaceEval:
    """phi(alpha x)/alpha from sum_i exp(-(alpha x . a_i + Y s_i)) = 1.

    Gradient and Hessian of phi come from implicit differentiation of the
    defining sum.
    """
    if alpha <= 0:
        raise SurfaceError(f"alpha must be positive, got {alpha}")
    x = _as_points(poly, x)
    z = alpha * x
    b = z @ poly.a.T
    Y = _solve_height(poly, b)

    q_hat = b + Y[:, None] * poly.s
    p = np.exp(-q_hat)
    S = p @ poly.s
    grad = -(p @ poly.a) / S[:, None]
    arms = poly.a[None, :, :] + poly.s[None, :, None] * grad[:, None, :]
    hess = np.einsum("mi,mij,mik->mjk", p, arms, arms) / S[:, None, None]
    h = 1.0 - np.sum(p**2, axis=1)
    slope = np.sqrt(1.0 + np.sum(grad**2, axis=1))
    normal = (-grad @ poly.frame.T + poly.e0[None, :]) / slope[:, None]
    tau = p / (S * slope)[:, None]

    return SurfaceEval(
        x=x,
        alpha=alpha,
        height=Y / alpha,
        phi=Y,
        grad=grad,
        hess=hess,
        q_hat=q_hat,
        h=np.clip(h, 0.0, None),
        normal=normal,
        tau=tau,
    )


def interaction_h(poly: PolytopeSpec, x, alpha: float = 1.0) -> np.ndarray:
    """Ordered-pair sum over j != k of exp(-(q_j + q_k)), which is 1 - sum p^2."""
    return surface_height(poly, x, alpha).h


def normal_e(
    poly: PolytopeSpec, x, alpha: float = 1.0
) -> Tuple[np.ndarray, np.ndarray]:
    """Unit normal e(x) and convex weights tau with e(x) = sum_i tau_i e_i."""
    ev = surface_height(poly, x, alpha)
    return ev.normal, ev.tau


def hessian_eigenvalues(ev: SurfaceEval) -> np.ndarray:
    return np.linalg.eigvalsh(ev.hess)


def moving_coordinate(
    poly: PolytopeSpec,
    t: float,
    x,
    y,
    c_bar: float,
    alpha: float = 1.0,
    variant: str = "upper",
) -> np.ndarray:
    """Signed distance-like coordinate to the moving curved surface.

    ``upper`` measures from y = c t + phi(alpha x)/alpha, ``lower`` from the
    reflected surface y = c t - phi(-alpha x)/alpha.
    """
    x = _as_points(poly, x)
    y = np.asarray(y, dtype=float).reshape(-1)
    if variant == "upper":
        ev = surface_height(poly, x, alpha)
        return (y - c_bar * t - ev.height) / ev.slope_factor
    if variant == "lower":
        ev = surface_height(poly, -x, alpha)
        return (y - c_bar * t + ev.height) / ev.slope_factor
    raise ValueError(f"variant must be 'upper' or 'lower', got {variant!r}")


def default_lambda(poly: PolytopeSpec, i: int, fraction: float = 0.25) -> float:
    others = [j for j in range(poly.n) if j != i]
    if not others:
        return fraction
    s = poly.s
    return fraction * min(s[i] / (s[i] + s[j]) for j in others)


def shifted_polytope(poly: PolytopeSpec, i: int, lam: float) -> ShiftedPolytope:
    """Directions e_ij = ((1-lam) e_i - lam e_j)/|.| with e_ii = e_i."""
    if not 0.0 < lam < 1.0:
        raise PolytopeError(f"lambda must lie in (0,1), got {lam}")
    e = poly.directions
    rows = []
    for j in range(poly.n):
        if j == i:
            rows.append(e[i])
            continue
        mixed = (1.0 - lam) * e[i] - lam * e[j]
        norm = np.linalg.norm(mixed)
        if norm == 0 or mixed @ poly.e0 <= 0:
            raise PolytopeError(
                f"shifted direction e_{i + 1}{j + 1} loses e0-tilt for lambda={lam}: "
                f"blocked by facet {j + 1}"
            )
        rows.append(mixed / norm)
    rows = np.array(rows)
    shifted = build_polytope(poly.e0, rows)
    spread = float(np.max(np.linalg.norm(rows - e[i], axis=1)))
    return ShiftedPolytope(index=i, lam=lam, polytope=shifted, spread=spread)


def contains(poly: PolytopeSpec, z) -> np.ndarray:
    z = np.atleast_2d(np.asarray(z, dtype=float))
    return np.min(z @ poly.directions.T, axis=1) > 0


def facet_distance(poly: PolytopeSpec, z) -> np.ndarray:
    """Distance to the boundary of Q."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    inner = np.min(z @ poly.directions.T, axis=1)
    out = np.empty(len(z))
    inside = inner >= 0
    out[inside] = inner[inside]
    # outside points: projection onto the polar cone generated by -e_i
    generators = -poly.directions.T
    for k in np.flatnonzero(~inside):
        _, rnorm = nnls(generators, z[k])
        out[k] = np.sqrt(max(z[k] @ z[k] - rnorm**2, 0.0))
    return out


def ridge_rays(poly: PolytopeSpec) -> np.ndarray:
    """Unit directions of the edges of Q in three dimensions."""
    rays = []
    for i in range(poly.n):
        for j in range(i + 1, poly.n):
            r = np.cross(poly.directions[i], poly.directions[j])
            norm = np.linalg.norm(r)
            if norm < 1e-12:
                continue
            for candidate in (r / norm, -r / norm):
                if np.all(poly.directions @ candidate >= -1e-12):
                    rays.append(candidate)
    return np.array(rays).reshape(-1, poly.dim)


def ridge_distance(poly: PolytopeSpec, z) -> np.ndarray:
    """Distance to the ridge set R; +inf when Q has a single facet."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    if poly.n < 2 or poly.dim < 2:
        return np.full(len(z), np.inf)
    if poly.dim == 2:
        return np.linalg.norm(z, axis=1)
    rays = ridge_rays(poly)
    if rays.size == 0:
        return np.linalg.norm(z, axis=1)
    along = np.clip(z @ rays.T, 0.0, None)
    gaps = z[:, None, :] - along[:, :, None] * rays[None, :, :]
    return np.min(np.linalg.norm(gaps, axis=2), axis=1)


def offset_apex(poly: PolytopeSpec, offsets: Sequence[float]) -> np.ndarray:
    """Least-squares point p with e_i . p = b_i."""
    offsets = np.asarray(offsets, dtype=float)
    p, *_ = np.linalg.lstsq(poly.directions, offsets, rcond=None)
    return p


def sample_cap(poly: PolytopeSpec, count: int) -> np.ndarray:
    """Unit directions in L(Q), the cone generated by the e_i.

    Two dimensions: an arc between the extreme facet angles. Three: a simplex
    lattice of convex combinations, normalised.
    """
    if poly.dim == 2:
        beta = cap_angle(poly, poly.directions)
        grid = np.linspace(beta.min(), beta.max(), max(count, 2))
        return direction_at(poly, grid)
    if poly.dim == 1:
        return poly.directions.copy()
    level = max(1, int(round(count ** (1.0 / max(poly.n - 1, 1)))))
    combos = [c for c in np.ndindex(*([level + 1] * poly.n)) if sum(c) == level]
    weights = np.array(combos, dtype=float) / level
    points = weights @ poly.directions
    return points / np.linalg.norm(points, axis=1)[:, None]


def surface_table(poly: PolytopeSpec, xs, alpha: float = 1.0) -> pd.DataFrame:
    """Surface sampler rows: x, phi, grad phi, h, e(x)."""
    ev = surface_height(poly, xs, alpha)
    columns = {}
    for k in range(ev.x.shape[1]):
        columns[f"x{k}"] = ev.x[:, k]
    columns["phi"] = ev.height
    for k in range(ev.grad.shape[1]):
        columns[f"grad{k}"] = ev.grad[:, k]
    columns["h"] = ev.h
    for k in range(ev.normal.shape[1]):
        columns[f"e{k}"] = ev.normal[:, k]
    return pd.DataFrame(columns)

