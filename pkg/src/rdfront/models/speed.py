from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Optional

import numpy as np
from pydantic import BaseModel, Field


class Variant(str, Enum):
    """Which family of curved fronts a check or assembly refers to."""

    V = "V"  # conditions (ii)-(iv) as for the invading V-shaped fronts
    W = "W"  # reversed inequalities, mirror fronts


class Verdict(str, Enum):
    PASS = "pass"
    FAIL = "fail"
    INDETERMINATE = "indeterminate"


@dataclass
class SpeedMap:
    e0: np.ndarray
    directions: np.ndarray
    speeds: np.ndarray
    stderrs: np.ndarray
    resolution: float
    interpolation: str = "linear"
    override: Optional[Callable[[np.ndarray], np.ndarray]] = None
    partial: bool = False
    failures: List[Dict[str, object]] = field(default_factory=list)

    @property
    def dim(self) -> int:
        return self.directions.shape[1]

    @classmethod
    def from_function(
        cls,
        e0,
        fn: Callable[[np.ndarray], np.ndarray],
        count: int = 64,
        interpolation: str = "linear",
    ) -> "SpeedMap":
        """Analytic speed map; evaluation bypasses the sampled table."""
        e0 = np.asarray(e0, dtype=float)
        e0 = e0 / np.linalg.norm(e0)
        beta = 2 * np.pi * np.arange(count) / count
        directions = np.stack([np.cos(beta), np.sin(beta)], axis=1)
        speeds = np.asarray(fn(directions), dtype=float)
        return cls(
            e0=e0,
            directions=directions,
            speeds=speeds,
            stderrs=np.zeros(count),
            resolution=2 * np.pi / count,
            interpolation=interpolation,
            override=fn,
        )

    @property
    def angles(self) -> np.ndarray:
        beta = np.arctan2(self.directions[:, 1], self.directions[:, 0])
        return np.mod(beta, 2 * np.pi)


class ConditionVerdict(BaseModel):
    condition: str
    verdict: Verdict
    margin: float
    noise: float = 0.0
    detail: str = ""


class ConditionReport(BaseModel):
    variant: Variant
    c_hat: float
    resolution: float
    interpolation_limited: bool
    verdicts: Dict[str, ConditionVerdict] = Field(default_factory=dict)
    g_at_facets: List[float] = Field(default_factory=list)
    sign_table: List[List[float]] = Field(default_factory=list)

    def verdict(self, condition: str) -> Verdict:
        return self.verdicts[condition].verdict

    @property
    def admissible(self) -> bool:
        return (
            self.verdict("i") == Verdict.PASS
            and self.verdict("ii") in (Verdict.PASS, Verdict.INDETERMINATE)
            and self.verdict("iii") == Verdict.PASS
            and self.verdict("iv") == Verdict.PASS
        )

    @property
    def passed(self) -> bool:
        return all(v.verdict == Verdict.PASS for v in self.verdicts.values())
