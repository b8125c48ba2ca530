from enum import Enum
from typing import Dict, List, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from rdfront.core.settings import Settings


class ExperimentKind(str, Enum):
    VALIDATE_MEDIUM = "validate-medium"
    FRONT_SPEED = "front-speed"
    SPEED_MAP = "speed-map"
    SURFACE = "surface"
    CONDITIONS = "conditions"
    BUILD_FRONT = "build-front"
    VERIFY_BOUNDS = "verify-bounds"
    STABILITY = "stability"


GEOMETRY_KINDS = {
    ExperimentKind.SURFACE,
    ExperimentKind.CONDITIONS,
    ExperimentKind.BUILD_FRONT,
    ExperimentKind.VERIFY_BOUNDS,
    ExperimentKind.STABILITY,
}


def _float_list(value):
    if isinstance(value, str):
        return [float(v) for v in value.replace(";", ",").split(",") if v.strip()]
    return value


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ExperimentSection(_Section):
    kind: ExperimentKind
    output_dir: Optional[str] = None
    seed: int = Field(default_factory=lambda: Settings.DEFAULT_SEED)
    workers: Optional[int] = Field(None, ge=1)


class MediumSection(_Section):
    preset: str = "cubic-homogeneous"
    dim: int = Field(2, ge=1, le=3)
    theta: float = Field(0.25, gt=0, lt=1)
    contrast: float = Field(0.0, ge=0)
    diffusion: float = Field(1.0, gt=0)
    a11: float = Field(1.0, gt=0)
    a22: float = Field(1.0, gt=0)
    a12: float = 0.0
    periods: List[float] = Field(default_factory=lambda: [1.0, 1.0])
    sampling_density: int = Field(16, ge=8)

    @field_validator("periods", mode="before")
    @classmethod
    def _split_periods(cls, value):
        return _float_list(value)


class GeometrySection(_Section):
    e0: List[float]
    angles: List[float] = Field(default_factory=lambda: [45.0, 135.0])
    alpha: float = Field(1.0, gt=0)
    x_min: float = -20.0
    x_max: float = 20.0
    x_count: int = Field(401, ge=2)

    @field_validator("e0", "angles", mode="before")
    @classmethod
    def _split_lists(cls, value):
        return _float_list(value)


class NumericsSection(_Section):
    h: float = Field(0.1, gt=0)
    dt: Optional[float] = Field(None, gt=0)
    t_max: float = Field(80.0, gt=0)
    direction: float = Field(90.0, description="front-speed direction angle, degrees")
    directions: int = Field(16, ge=1)
    interpolation: str = Field("linear", pattern="^(linear|spline)$")
    speed_source: str = Field(
        "computed", pattern="^(computed|closed-form|reversed-override)$"
    )
    residual_h: float = Field(0.1, gt=0)
    residual_dt: float = Field(0.01, gt=0)
    comparison_pairs: int = Field(0, ge=0)


class FrontSection(_Section):
    variant: str = Field("V", pattern="^(V|W)$")
    profiles: str = Field("closed-form", pattern="^(closed-form|computed)$")
    profile_arc: float = Field(10.0, ge=0, description="degrees beyond the cap")
    profile_count: int = Field(9, ge=2)
    epsilon: Union[float, str] = "auto"
    alpha: Union[float, str] = "auto"
    half_width: float = Field(10.0, gt=0)
    below: float = Field(8.0, gt=0)
    above: float = Field(18.0, gt=0)
    snapshot_every: float = Field(1.0, gt=0)
    initial_periods: int = Field(4, ge=1)
    max_doublings: int = Field(3, ge=0)
    tol: float = Field(1e-4, gt=0)
    sandwich_slack: float = Field(1e-8, ge=0)
    from_upper: bool = True
    metric_levels: List[float] = Field(default_factory=lambda: [0.05, 0.1, 0.5])

    @field_validator("epsilon", "alpha")
    @classmethod
    def _auto_or_positive(cls, value):
        if isinstance(value, str):
            if value.strip().lower() == "auto":
                return "auto"
            value = float(value)
        if value <= 0:
            raise ValueError("must be positive or 'auto'")
        return value

    @field_validator("metric_levels", mode="before")
    @classmethod
    def _split_levels(cls, value):
        return _float_list(value)


class StabilitySection(_Section):
    horizon: float = Field(20.0, gt=0)
    initial_data: List[str] = Field(
        default_factory=lambda: ["planar-mix", "clamped-super", "ridge-bump"]
    )
    bump_height: float = Field(0.2, ge=0)
    bump_radius: float = Field(3.0, gt=0)
    initial_alpha: float = Field(1.0, gt=0)
    delta: float = Field(0.05, ge=0)
    target_gap: float = Field(0.05, gt=0)
    far_field_radius: float = Field(6.0, ge=0)
    facet_weights: List[float] = Field(
        default_factory=list, description="shifted-polytope weight per facet"
    )

    @field_validator("initial_data", mode="before")
    @classmethod
    def _split_kinds(cls, value):
        if isinstance(value, str):
            return [v.strip() for v in value.split(",") if v.strip()]
        return value

    @field_validator("facet_weights", mode="before")
    @classmethod
    def _parse_weights(cls, value):
        return _float_list(value)


class ExperimentConfig(_Section):
    experiment: ExperimentSection
    medium: MediumSection = Field(default_factory=MediumSection)
    geometry: Optional[GeometrySection] = None
    numerics: NumericsSection = Field(default_factory=NumericsSection)
    front: FrontSection = Field(default_factory=FrontSection)
    stability: StabilitySection = Field(default_factory=StabilitySection)

    @model_validator(mode="after")
    def _geometry_required(self):
        if self.experiment.kind in GEOMETRY_KINDS and self.geometry is None:
            raise ValueError(
                f"experiment kind '{self.experiment.kind.value}' needs a [geometry] "
                "section with e0"
            )
        return self

    def echo(self) -> Dict[str, object]:
        return self.model_dump(mode="json")


class RunResult(BaseModel):
    kind: ExperimentKind
    output_dir: str
    status: int
    assertions: Dict[str, bool] = Field(default_factory=dict)
    summary: List[str] = Field(default_factory=list)
    outputs: List[str] = Field(default_factory=list)
    faults: List[Dict[str, str]] = Field(default_factory=list)
