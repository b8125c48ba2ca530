from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field

from rdfront.models.geometry import PolytopeSpec, ShiftedPolytope
from rdfront.models.grid import Field as GridField
from rdfront.models.grid import Grid
from rdfront.models.medium import PeriodicMedium
from rdfront.models.speed import ConditionReport, SpeedMap, Variant


class BoundFamily(str, Enum):
    SUPER_V = "super_V"
    SUB_W = "sub_W"
    STAB_SUB_V = "stab_sub_V_i"
    STAB_SUPER_W = "stab_super_W_i"


@dataclass(eq=False)
class FrontAssembly:
    medium: PeriodicMedium
    polytope: PolytopeSpec
    speed_map: SpeedMap
    family: Any  # services.front_family.FrontFamily
    c_hat: float
    epsilon: float
    alpha: float
    variant: Variant
    shifted: List[ShiftedPolytope] = field(default_factory=list)
    conditions: Optional[ConditionReport] = None


class ResidualLattice(BaseModel):
    """Blocks of small grids hugging the relevant surface in the moving frame."""

    half_width: float = Field(12.0, gt=0)
    block_width: float = Field(2.0, gt=0)
    half_height: float = Field(9.0, gt=0)
    h: float = Field(0.1, gt=0)
    dt: float = Field(0.01, gt=0)
    times: List[float] = Field(default_factory=lambda: [0.0])


class WindowSpec(BaseModel):
    half_width: float = Field(10.0, gt=0, description="frame half-width |x| <= X")
    below: float = Field(8.0, gt=0, description="extent behind the moving origin")
    above: float = Field(18.0, gt=0, description="extent ahead of the moving origin")
    h: float = Field(0.1, gt=0)
    dt: Optional[float] = Field(None, gt=0)
    snapshot_every: float = Field(1.0, gt=0)


class ConstructionConfig(BaseModel):
    initial_periods: int = Field(4, ge=1, description="first horizon in units L/c_hat")
    max_doublings: int = Field(3, ge=0)
    tol: float = Field(1e-4, gt=0)
    sandwich_slack: float = Field(1e-8, ge=0)
    monotonicity_slack: float = Field(1e-8, ge=0)
    from_upper: bool = Field(
        True, description="also construct from the clamped upper bound"
    )


class StabilityParams(BaseModel):
    delta: float = Field(0.05, ge=0)
    omega: Optional[float] = Field(None, gt=0)
    lam: Optional[float] = Field(None, gt=0)
    facet_weights: List[float] = Field(default_factory=list)


class StabilityConfig(BaseModel):
    horizon: float = Field(20.0, gt=0)
    observe_every: float = Field(0.5, gt=0)
    reference_every: float = Field(0.2, gt=0)
    shift_bracket: float = Field(1.0, gt=0)
    far_field_radius: float = Field(6.0, ge=0)
    far_field_tol: float = Field(0.1, gt=0)
    bump_height: float = Field(0.2, ge=0)
    bump_radius: float = Field(3.0, gt=0)
    initial_alpha: float = Field(1.0, gt=0)
    target_gap: float = Field(0.05, gt=0)


class MarginReport(BaseModel):
    variant: Variant
    min_ratio: float
    passed: bool
    count: int
    excluded: int
    resolution: float


class CalibrationRow(BaseModel):
    epsilon: float
    alpha: float
    family: str
    extreme: float
    passed: bool


class CalibrationResult(BaseModel):
    passed: bool
    epsilon: Optional[float] = None
    alpha: Optional[float] = None
    tol: float
    best_margin: float
    rows: List[CalibrationRow] = Field(default_factory=list)


class SqueezeReport(BaseModel):
    sign: int
    delta: float
    omega: float
    lam: float
    k: float
    extreme_residual: float
    tol: float
    passed: bool


class ConstructionReport(BaseModel):
    horizons: List[float] = Field(default_factory=list)
    cauchy_differences: List[float] = Field(default_factory=list)
    converged: bool = False
    # against the planar pieces evolved on the same grid
    min_lower_gap: float = float("inf")
    # against the analytic planar mix and curved bound, at checked times
    min_planar_gap: float = float("inf")
    min_upper_gap: float = float("inf")
    min_increment: float = float("inf")
    upper_start_difference: Optional[float] = None
    sandwich_tol: float = 1e-8
    upper_allowance: float = 0.0
    # faults fire beyond sandwich_slack + upper_allowance
    sandwich_threshold: float = 0.0

    @property
    def lower_within_tol(self) -> bool:
        return self.min_lower_gap >= -self.sandwich_tol

    @property
    def upper_within_tol(self) -> bool:
        return self.min_upper_gap >= -self.sandwich_tol


class MetricsReport(BaseModel):
    epsilons: List[float] = Field(default_factory=list)
    widths: List[float] = Field(default_factory=list)
    drift_speed: float = float("nan")
    drift_stderr: float = float("nan")
    inf_distance_rate: float = float("nan")
    far_field_radius: Optional[float] = None
    far_field_gap: Optional[float] = None


class StabilityReport(BaseModel):
    label: str
    times: List[float] = Field(default_factory=list)
    gaps: List[float] = Field(default_factory=list)
    shifts: List[float] = Field(default_factory=list)
    passed: bool = False
    final_gap: float = float("nan")
    decreasing: bool = False


@dataclass
class FrontBundle:
    variant: Variant
    grid: Grid
    values: np.ndarray
    offset_periods: int = 0
    snapshots: List[GridField] = field(default_factory=list)
    interfaces: List[Tuple[float, List[np.ndarray]]] = field(default_factory=list)
    construction: ConstructionReport = field(default_factory=ConstructionReport)
    metrics: Optional[MetricsReport] = None
    calibration: Optional[CalibrationResult] = None
    extras: Dict[str, Any] = field(default_factory=dict)
