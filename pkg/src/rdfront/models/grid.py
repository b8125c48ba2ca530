from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel

from rdfront.core.settings import Settings


class BoundaryKind(str, Enum):
    CLAMPED = "clamped"
    ZERO_FLUX = "zero-flux"
    PERIODIC = "periodic"


@dataclass(frozen=True)
class AxisBoundary:
    """Boundary tag for both faces of one axis.

    A periodic axis may carry an index shift along another axis: leaving through
    the upper face moves ``shift`` nodes down ``shift_axis``, leaving through the
    lower face moves ``shift`` nodes up.
    """

    kind: BoundaryKind = BoundaryKind.CLAMPED
    shift_axis: Optional[int] = None
    shift: int = 0

    @classmethod
    def clamped(cls) -> "AxisBoundary":
        return cls(BoundaryKind.CLAMPED)

    @classmethod
    def zero_flux(cls) -> "AxisBoundary":
        return cls(BoundaryKind.ZERO_FLUX)

    @classmethod
    def periodic(cls, shift_axis: Optional[int] = None, shift: int = 0):
        return cls(BoundaryKind.PERIODIC, shift_axis, int(shift))


@dataclass(frozen=True)
class Grid:
    """Tensor grid. Periodic axes hold n nodes over one period n*h, other
    axes include both faces."""

    lower: Tuple[float, ...]
    spacing: Tuple[float, ...]
    shape: Tuple[int, ...]
    boundaries: Tuple[AxisBoundary, ...]

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def upper(self) -> Tuple[float, ...]:
        return tuple(
            lo + (n - 1) * h for lo, h, n in zip(self.lower, self.spacing, self.shape)
        )

    def axis(self, k: int) -> np.ndarray:
        return self.lower[k] + self.spacing[k] * np.arange(self.shape[k])

    def points(self) -> np.ndarray:
        """Node coordinates, shape (size, dim), row-major node order."""
        mesh = np.meshgrid(*[self.axis(k) for k in range(self.dim)], indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def translated(self, axis: int, offset: float) -> "Grid":
        lower = list(self.lower)
        lower[axis] += offset
        return replace(self, lower=tuple(lower))

    def same_nodes(self, other: "Grid", atol: float = 1e-9) -> bool:
        return (
            self.shape == other.shape
            and self.boundaries == other.boundaries
            and np.allclose(self.lower, other.lower, atol=atol)
            and np.allclose(self.spacing, other.spacing, atol=atol)
        )

    @classmethod
    def box(
        cls,
        lower,
        upper,
        spacing,
        boundaries: Optional[Tuple[AxisBoundary, ...]] = None,
    ) -> "Grid":
        lower = tuple(float(v) for v in np.atleast_1d(lower))
        upper = tuple(float(v) for v in np.atleast_1d(upper))
        spacing = tuple(float(v) for v in np.broadcast_to(spacing, (len(lower),)))
        if boundaries is None:
            boundaries = tuple(AxisBoundary.clamped() for _ in lower)
        shape = []
        for lo, hi, h, bc in zip(lower, upper, spacing, boundaries):
            n = int(round((hi - lo) / h))
            shape.append(n if bc.kind == BoundaryKind.PERIODIC else n + 1)
        return cls(lower, spacing, tuple(shape), tuple(boundaries))


@dataclass
class Field:
    grid: Grid
    values: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(self.grid.shape)

    @property
    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)


# (t, points (P, N)) -> values (P,)
BoundaryFn = Callable[[float, np.ndarray], np.ndarray]


@dataclass
class SolverConfig:
    """Time stepping parameters.

    ``dt=None`` picks the largest admissible step times the safety factor.
    ``strict=False`` lets an over-large dt through (comparison demonstrations).
    """

    dt: Optional[float] = None
    end_time: float = 1.0
    snapshot_every: Optional[float] = None
    implicit: bool = False
    inner_rtol: float = field(default_factory=lambda: Settings.INNER_SOLVE_RTOL)
    divergence_bound: float = field(
        default_factory=lambda: Settings.DIVERGENCE_BOUND
    )
    cfl_safety: float = field(default_factory=lambda: Settings.CFL_SAFETY)
    strict: bool = True
    check_range: bool = True
    boundary: Optional[BoundaryFn] = None
    store_dir: Optional[Path] = None


@dataclass
class Trajectory:
    snapshots: List[Field] = field(default_factory=list)
    directory: Optional[Path] = None
    meta: Dict[str, object] = field(default_factory=dict)

    def append(self, snapshot: Field) -> None:
        self.snapshots.append(snapshot)

    @property
    def times(self) -> np.ndarray:
        return np.array([s.time for s in self.snapshots])

    def __len__(self) -> int:
        return len(self.snapshots)

    def __getitem__(self, index):
        return self.snapshots[index]

    def __iter__(self):
        return iter(self.snapshots)


class ComparisonReport(BaseModel):
    """Outcome of evolving an ordered pair of initial data side by side."""

    passed: bool
    min_gap: float
    time_of_min: float
    steps: int
    dt: float
    slack: float = 1e-10
    fault: Optional[str] = None
