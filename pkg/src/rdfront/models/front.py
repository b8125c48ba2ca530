from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field


class FrontOutcome(str, Enum):
    CONVERGED = "converged"
    SPEED_ONLY = "speed-only"
    NEAR_STATIONARY = "near-stationary"
    NO_FRONT_DETECTED = "no-front-detected"


class FrontConfig(BaseModel):
    """Numerical parameters of a pulsating-front run on a co-moving strip."""

    h: float = Field(0.1, gt=0, description="target grid spacing")
    dt: Optional[float] = Field(None, gt=0)
    strip_length: float = Field(40.0, gt=0, description="minimum strip length")
    t_max: float = Field(80.0, gt=0)
    t_min: float = Field(12.0, ge=0, description="earliest stationarity check")
    snapshot_every: float = Field(0.25, gt=0)
    transient_fraction: float = Field(0.25, ge=0, lt=1)
    window: int = Field(10, ge=3, description="snapshots per detector window")
    stationary_rtol: float = Field(1e-4, gt=0)
    stationary_stderr_factor: float = Field(3.0, gt=0)
    near_stationary: float = Field(1e-3, gt=0)
    max_denominator: int = Field(6, ge=1)
    xi_half_width: float = Field(22.0, gt=0)
    bin_factor: float = Field(0.5, gt=0, le=1)
    max_gap_bins: int = Field(4, ge=0)
    end_margin: float = Field(3.0, ge=0)
    isotonic_threshold: float = Field(1e-6, gt=0)
    want_profile: bool = True


@dataclass
class SpeedEstimate:
    speed: float
    stderr: float
    intercept: float
    times: np.ndarray
    positions: np.ndarray

    def __iter__(self):
        return iter((self.speed, self.stderr))


@dataclass
class ProfileTable:
    """U(xi_j, cell node m); columns follow the row-major cell lattice."""

    xi: np.ndarray
    values: np.ndarray
    cell_shape: Tuple[int, ...]
    cell_spacing: Tuple[float, ...]
    filled_bins: int = 0
    monotonized: bool = False
    max_violation: float = 0.0


@dataclass
class DecayFit:
    mu: float
    C: float
    mu_left: float
    mu_right: float
    r2_left: float
    r2_right: float
    flagged: bool = False
    reason: str = ""


@dataclass
class InteriorBounds:
    delta: float
    r: float
    R: float


@dataclass
class PulsatingFront:
    direction: np.ndarray
    speed: float
    stderr: float
    outcome: FrontOutcome
    periods: Tuple[float, ...]
    table: Optional[ProfileTable] = None
    shift: float = 0.0
    decay: Optional[DecayFit] = None
    bounds: Optional[InteriorBounds] = None
    commensurate: bool = True
    direction_error: float = 0.0
    lattice_vector: Optional[np.ndarray] = None
    diagnostics: Dict[str, float] = field(default_factory=dict)

    @property
    def xi(self) -> np.ndarray:
        return self.table.xi

    @property
    def profile(self) -> np.ndarray:
        return self.table.values

    def with_table(self, table: ProfileTable, shift: float) -> "PulsatingFront":
        return replace(self, table=table, shift=shift)
