import logging
import math
from abc import ABC, abstractmethod
from typing import Dict, List, Optional, Sequence

import numpy as np

from rdfront.core.errors import ExtrapolationError, PreconditionError
from rdfront.models.front import FrontOutcome, PulsatingFront
from rdfront.services.geometry_service import orthonormal_frame
from rdfront.services.pulsating_service import SQRT2, ProfileEvaluator

logger = logging.getLogger(__name__)

ANGLE_TOL = 1e-9


def _unit_rows(e) -> np.ndarray:
    e = np.atleast_2d(np.asarray(e, dtype=float))
    return e / np.linalg.norm(e, axis=1)[:, None]


class FrontFamily(ABC):
    """Pulsating fronts U_e(xi, x) indexed by direction.

    ``value`` takes per-point directions (M, N), travelling coordinates
    xi = x.e - c_e t (M,) and the physical points (M, N) that pick the cell column.
    """

    name = "family"

    @abstractmethod
    def speed(self, e) -> np.ndarray:
        ...

    @abstractmethod
    def value(self, e, xi, points: Optional[np.ndarray] = None) -> np.ndarray:
        ...

    def half_level(self, e) -> float:
        """xi at which the profile crosses 1/2 (column average)."""
        return 0.0

    @property
    def tail_extensions(self) -> int:
        return 0


class ClosedFormFamily(FrontFamily):
    """Homogeneous cubic fronts 1/(1 + exp(xi/sqrt(2 e.A.e)))."""

    name = "closed-form"

    def __init__(self, theta: float, A: np.ndarray):
        self.theta = float(theta)
        self.A = np.atleast_2d(np.asarray(A, dtype=float))

    def _scale(self, e: np.ndarray) -> np.ndarray:
        return np.sqrt(np.einsum("mi,ij,mj->m", e, self.A, e))

    def speed(self, e) -> np.ndarray:
        e = _unit_rows(e)
        return (1.0 - 2.0 * self.theta) * self._scale(e) / SQRT2

    def value(self, e, xi, points: Optional[np.ndarray] = None) -> np.ndarray:
        xi = np.asarray(xi, dtype=float).reshape(-1)
        e = np.broadcast_to(_unit_rows(e), (xi.size, self.A.shape[0]))
        width = SQRT2 * self._scale(e)
        return 1.0 / (1.0 + np.exp(np.clip(xi / width, -700.0, 700.0)))


class InterpolatedFamily(FrontFamily):
    """Computed fronts blended linearly in the cap angle (two dimensions).

    Directions outside the computed angle range are refused.
    """

    name = "interpolated"

    def __init__(self, fronts: Sequence[PulsatingFront], e0: Sequence[float]):
        usable = [
            f
            for f in fronts
            if f.table is not None and f.outcome == FrontOutcome.CONVERGED
        ]
        if not usable:
            raise PreconditionError("no converged front profiles to interpolate")
        e0 = np.asarray(e0, dtype=float)
        self.e0 = e0 / np.linalg.norm(e0)
        if self.e0.shape[0] != 2:
            raise PreconditionError(
                f"interpolated families are two-dimensional, got N={self.e0.shape[0]}"
            )
        self.frame = orthonormal_frame(self.e0)[:, 0]
        beta = self.angle(np.array([f.direction for f in usable]))
        order = np.argsort(beta)
        self.fronts: List[PulsatingFront] = [usable[k] for k in order]
        self.betas = beta[order]
        self.speeds = np.array([f.speed for f in self.fronts])
        self.evaluators = [ProfileEvaluator(f) for f in self.fronts]
        self._half: Dict[int, float] = {}
        self.midpoint_disagreement = self._disagreement()
        logger.info(
            f"Interpolated family over {len(self.fronts)} fronts, angles "
            f"[{math.degrees(self.betas[0]):.2f}, "
            f"{math.degrees(self.betas[-1]):.2f}] deg"
        )

    def angle(self, e) -> np.ndarray:
        e = _unit_rows(e)
        return np.arctan2(e @ self.e0, e @ self.frame)

    def _bracket(self, beta: np.ndarray):
        lo, hi = self.betas[0] - ANGLE_TOL, self.betas[-1] + ANGLE_TOL
        outside = (beta < lo) | (beta > hi)
        if np.any(outside):
            bad = float(np.degrees(beta[np.flatnonzero(outside)[0]]))
            logger.error(f"Front family queried outside its range at {bad:.4f} deg")
            raise ExtrapolationError(
                f"direction at {bad:.4f} deg outside computed fronts "
                f"[{math.degrees(self.betas[0]):.4f}, "
                f"{math.degrees(self.betas[-1]):.4f}] deg"
            )
        if len(self.betas) == 1:
            return np.zeros(beta.size, dtype=int), np.zeros(beta.size)
        k = np.clip(np.searchsorted(self.betas, beta, side="right") - 1, 0, None)
        k = np.minimum(k, len(self.betas) - 2)
        span = self.betas[k + 1] - self.betas[k]
        w = np.clip((beta - self.betas[k]) / span, 0.0, 1.0)
        return k, w

    def speed(self, e) -> np.ndarray:
        k, w = self._bracket(self.angle(e))
        if len(self.betas) == 1:
            return np.full(k.size, self.speeds[0])
        return (1.0 - w) * self.speeds[k] + w * self.speeds[k + 1]

    def value(self, e, xi, points: Optional[np.ndarray] = None) -> np.ndarray:
        xi = np.asarray(xi, dtype=float).reshape(-1)
        e = np.broadcast_to(_unit_rows(e), (xi.size, 2))
        if points is not None:
            points = np.broadcast_to(np.atleast_2d(points), (xi.size, 2))
        k, w = self._bracket(self.angle(e))
        out = np.zeros(xi.size)
        for j in np.unique(k):
            sel = k == j
            pts = points[sel] if points is not None else None
            left = self.evaluators[j](xi[sel], pts)
            if len(self.betas) == 1:
                out[sel] = left
                continue
            right = self.evaluators[j + 1](xi[sel], pts)
            out[sel] = (1.0 - w[sel]) * left + w[sel] * right
        return out

    def half_level(self, e) -> float:
        """Column-average 1/2 crossing, blended in angle like ``value``."""
        k, w = self._bracket(self.angle(e))
        k, w = int(k[0]), float(w[0])
        if len(self.betas) == 1:
            return self._front_half(0)
        return (1.0 - w) * self._front_half(k) + w * self._front_half(k + 1)

    def _front_half(self, k: int) -> float:
        if k not in self._half:
            table = self.fronts[k].table
            mean = table.values.mean(axis=1) - 0.5
            j = int(np.flatnonzero(mean <= 0)[0])
            if j == 0:
                self._half[k] = float(table.xi[0])
            else:
                x0, x1 = table.xi[j - 1], table.xi[j]
                m0, m1 = mean[j - 1], mean[j]
                self._half[k] = float(x0 - m0 * (x1 - x0) / (m1 - m0))
        return self._half[k]

    def _disagreement(self) -> List[float]:
        out = []
        for k in range(len(self.fronts) - 1):
            xi = self.fronts[k].table.xi
            gap = np.max(np.abs(self.evaluators[k](xi) - self.evaluators[k + 1](xi)))
            out.append(float(gap))
            if gap > 0.05:
                logger.warning(
                    f"Adjacent fronts {k} and {k + 1} differ by {gap:.3e} in profile"
                )
        return out

    @property
    def tail_extensions(self) -> int:
        return sum(ev.tail_extensions for ev in self.evaluators)
