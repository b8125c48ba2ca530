from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field

# (points (P, N), u (P,)) -> (P,)
ReactionFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class PeriodicMedium:
    """L-periodic diffusion field A(x) and bistable reaction f(x, u).

    All callables are vectorised over a (P, N) array of points.
    """

    dim: int
    periods: Tuple[float, ...]
    diffusion: Callable[[np.ndarray], np.ndarray]
    reaction: ReactionFn
    reaction_du: ReactionFn
    kappa: float
    sigma: float
    lambda_bounds: Tuple[float, float]
    name: str = "custom"
    homogeneous: bool = False
    theta_field: Optional[Callable[[np.ndarray], np.ndarray]] = None
    # sampled range of f_u over cell x [-0.1, 1.1] and max |f| over cell x [0, 1]
    du_range: Tuple[float, float] = (-1.0, 1.0)
    reaction_max: float = 1.0
    params: Dict[str, float] = field(default_factory=dict)

    def cell_volume(self) -> float:
        return float(np.prod(self.periods))


class CheckResult(BaseModel):
    name: str
    passed: bool
    margin: float
    detail: str = ""
    witness: Optional[List[float]] = None


class ValidationReport(BaseModel):
    medium: str
    sampling_density: int
    checks: List[CheckResult] = Field(default_factory=list)
    h1_integral: float = 0.0
    h1_sign: int = 0
    h1_boundary_case: bool = False
    theta_samples: List[float] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def check(self, name: str) -> CheckResult:
        for item in self.checks:
            if item.name == name:
                return item
        raise KeyError(name)
